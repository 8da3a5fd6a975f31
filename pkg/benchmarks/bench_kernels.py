"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--episode]

``--episode`` also times one suite episode per backend in a subprocess,
since the backend is fixed at import time by ``BAYESMM_DISABLE_NUMBA``.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from bayesmm import _kernels

EPISODE_SNIPPET = """
import time
from bayesmm.episode import run_episode
from bayesmm.suite import suite_config, suite_spec
from bayesmm.synth import synth_generate
d = synth_generate(suite_spec(0))
cfg = suite_config(checkpoint_every=0)
run_episode(d.prompts, d.stream, cfg)  # warm-up / compile
t = time.perf_counter()
run_episode(d.prompts, d.stream, cfg)
print(time.perf_counter() - t)
"""


def cases(rng):
    C, d = 10, 32
    x = rng.standard_normal(d)
    means = rng.standard_normal((C, d))
    chols = np.stack([np.linalg.cholesky(np.eye(d) + 0.1 * np.outer(v, v)) for v in rng.standard_normal((C, d))])
    logdets = 2 * np.log(np.diagonal(chols, axis1=1, axis2=2)).sum(axis=1)
    var = rng.uniform(0.1, 1, (C, d))
    v = rng.standard_normal(C) * 10
    a, b = rng.standard_normal((400, d)), rng.standard_normal((400, d))
    return {
        "chol_logpdf (C=10, d=32)": ("chol_logpdf", (x, means, chols, logdets)),
        "diag_logpdf (C=10, d=32)": ("diag_logpdf", (x, means, var)),
        "logsumexp (n=10)": ("logsumexp", (v,)),
        "rbf_mean (400x400, d=32)": ("rbf_mean", (a, b, 0.05)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--episode", action="store_true")
    args = ap.parse_args(argv)

    nb = _kernels.numba_kernels()
    print(f"numba available: {nb is not None}")
    print(f"{'kernel':<28} {'numpy us':>10} {'numba us':>10} {'speedup':>8}")
    for label, (name, inputs) in cases(np.random.default_rng(0)).items():
        fn_np = _kernels.NUMPY_KERNELS[name]
        number = 20 if name == "rbf_mean" else 2000
        t_np = min(timeit.repeat(lambda: fn_np(*inputs), number=number, repeat=args.repeat)) / number
        if nb is None:
            print(f"{label:<28} {1e6 * t_np:10.2f} {'-':>10} {'-':>8}")
            continue
        nb[name](*inputs)  # compile outside the timed region
        t_nb = min(timeit.repeat(lambda: nb[name](*inputs), number=number, repeat=args.repeat)) / number
        print(f"{label:<28} {1e6 * t_np:10.2f} {1e6 * t_nb:10.2f} {t_np / t_nb:8.1f}x")

    if args.episode:
        for flag in ("0", "1"):
            env = dict(os.environ, BAYESMM_DISABLE_NUMBA=flag)
            out = subprocess.run([sys.executable, "-c", EPISODE_SNIPPET], env=env, capture_output=True,
                                 text=True, check=True)
            backend = "numpy" if flag == "1" else "numba"
            print(f"suite episode (N=2000), {backend:<5}: {float(out.stdout):.3f}s")


if __name__ == "__main__":
    main()
