"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``BAYESMM_DISABLE_NUMBA`` is unset (or set to ``0``).  Both paths
compute the same quantities; ``tests/test_kernels.py`` checks them against
each other and ``benchmarks/bench_kernels.py`` times them.

Kernels operate on float64 C-contiguous arrays and do no validation; the
public wrappers in :mod:`bayesmm.gaussian` and friends own that.
"""
import math
import os

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)

_DISABLED = os.environ.get("BAYESMM_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by BAYESMM_DISABLE_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    njit = None
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# loop formulations (compiled by numba when available)
# ---------------------------------------------------------------------------

def _chol_logpdf_loop(x, means, chols, logdets):
    n_class, d = means.shape
    out = np.empty(n_class)
    y = np.empty(d)
    for c in range(n_class):
        q = 0.0
        for i in range(d):
            s = x[i] - means[c, i]
            for j in range(i):
                s -= chols[c, i, j] * y[j]
            y[i] = s / chols[c, i, i]
            q += y[i] * y[i]
        out[c] = -0.5 * (d * LOG_2PI + logdets[c] + q)
    return out


def _diag_logpdf_loop(x, means, variances):
    n_class, d = means.shape
    out = np.empty(n_class)
    for c in range(n_class):
        q = 0.0
        ld = 0.0
        for i in range(d):
            r = x[i] - means[c, i]
            q += r * r / variances[c, i]
            ld += math.log(variances[c, i])
        out[c] = -0.5 * (d * LOG_2PI + ld + q)
    return out


def _logsumexp_loop(v):
    m = -np.inf
    for i in range(v.shape[0]):
        if v[i] > m:
            m = v[i]
    if m == -np.inf:
        return -np.inf
    if m == np.inf:
        return np.inf
    s = 0.0
    for i in range(v.shape[0]):
        s += math.exp(v[i] - m)
    return m + math.log(s)


def _rbf_mean_loop(a, b, inv_two_sigma2):
    n, d = a.shape
    m = b.shape[0]
    total = 0.0
    for i in range(n):
        row = 0.0
        for j in range(m):
            sq = 0.0
            for k in range(d):
                r = a[i, k] - b[j, k]
                sq += r * r
            row += math.exp(-sq * inv_two_sigma2)
        total += row
    return total / (n * m)


# ---------------------------------------------------------------------------
# numpy formulations
# ---------------------------------------------------------------------------

def _chol_logpdf_numpy(x, means, chols, logdets):
    diff = (x[None, :] - means)[..., None]
    y = np.linalg.solve(chols, diff)[..., 0]
    q = np.einsum("ij,ij->i", y, y)
    return -0.5 * (means.shape[1] * LOG_2PI + logdets + q)


def _diag_logpdf_numpy(x, means, variances):
    r = x[None, :] - means
    q = np.sum(r * r / variances, axis=1)
    ld = np.sum(np.log(variances), axis=1)
    return -0.5 * (means.shape[1] * LOG_2PI + ld + q)


def _logsumexp_numpy(v):
    m = np.max(v)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(v - m))))


def _rbf_mean_numpy(a, b, inv_two_sigma2):
    sq = (np.einsum("ij,ij->i", a, a)[:, None]
          + np.einsum("ij,ij->i", b, b)[None, :]
          - 2.0 * a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return float(np.mean(np.exp(-sq * inv_two_sigma2)))


NUMPY_KERNELS = {
    "chol_logpdf": _chol_logpdf_numpy,
    "diag_logpdf": _diag_logpdf_numpy,
    "logsumexp": _logsumexp_numpy,
    "rbf_mean": _rbf_mean_numpy,
}

_LOOPS = {
    "chol_logpdf": _chol_logpdf_loop,
    "diag_logpdf": _diag_logpdf_loop,
    "logsumexp": _logsumexp_loop,
    "rbf_mean": _rbf_mean_loop,
}

_numba_cache = {}


def numba_kernels():
    """Compiled kernels, or ``None`` when numba is unavailable/disabled."""
    if not HAVE_NUMBA:
        return None
    if not _numba_cache:
        for name, fn in _LOOPS.items():
            # reassociation lets the pairwise-distance reduction vectorize
            fast = {"reassoc", "contract"} if name == "rbf_mean" else False
            _numba_cache[name] = njit(cache=True, nogil=True, fastmath=fast)(fn)
    return _numba_cache


def active_backend():
    return "numba" if HAVE_NUMBA else "numpy"


_active = numba_kernels() or NUMPY_KERNELS

chol_logpdf = _active["chol_logpdf"]
diag_logpdf = _active["diag_logpdf"]
logsumexp = _active["logsumexp"]
rbf_mean = _active["rbf_mean"]
