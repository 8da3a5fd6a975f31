"""The frozen default corrupted suite and a multi-seed runner.

The suite pairs a synthetic geometry with the episode settings under which
the method is evaluated.  Both were fixed by a calibration run and must only
change together with the thresholds that reference them.
"""
from dataclasses import dataclass, field

import numpy as np

from .episode import EpisodeConfig, run_episode
from .synth import (DEFAULT_MIN_ANGLE_DEG, DEFAULT_PROMPTS, DEFAULT_SIGMA_GEN, DEFAULT_SIGMA_TEXT,
                    Corruption, SynthSpec, synth_generate)

SUITE_CLASSES = 10
SUITE_DIM = 32
SUITE_SAMPLES = 2000
SUITE_CORRUPTION = Corruption("mean_shift", 0.4)
SUITE_PROMPTS = DEFAULT_PROMPTS
SUITE_SIGMA_TEXT = DEFAULT_SIGMA_TEXT
SUITE_SIGMA_GEN = DEFAULT_SIGMA_GEN
SUITE_MIN_ANGLE = DEFAULT_MIN_ANGLE_DEG
SUITE_SEEDS = tuple(range(10))

# episode settings that differ from EpisodeConfig defaults
SUITE_EPISODE = {
    "predictive_mode": "posterior_predictive",
    "diagonal": True,
    "rel_eps": 1.0,
    "alpha2": 0.01,
}

ABLATIONS = ("textual_only", "geometric_only")


def suite_spec(seed):
    return SynthSpec(SUITE_CLASSES, SUITE_DIM, SUITE_PROMPTS, SUITE_SAMPLES, SUITE_CORRUPTION,
                     seed, SUITE_SIGMA_TEXT, SUITE_SIGMA_GEN, SUITE_MIN_ANGLE, True)


def suite_config_dict():
    return dict(SUITE_EPISODE)


def suite_config(**changes):
    return EpisodeConfig(**{**SUITE_EPISODE, **changes})


@dataclass
class SeedResult:
    seed: int
    accuracy: dict                  # method or ablation -> accuracy
    checkpoints: list = field(default_factory=list)  # full-fusion checkpoints

    def checkpoint_at(self, step):
        for c in self.checkpoints:
            if c["step"] == step:
                return c
        raise KeyError(f"no checkpoint at step {step}")


def run_seed(seed, config=None):
    """All methods and ablations on one suite seed; diagnostics on the full-fusion run."""
    config = (config or suite_config()).replace(seed=seed)
    data = synth_generate(suite_spec(seed))
    quiet = config.replace(checkpoint_every=0)
    acc = {}
    for m in ("zeroshot", "cache"):
        acc[m] = run_episode(data.prompts, data.stream, quiet.replace(method=m))["summary"]["accuracy"]
    full = run_episode(data.prompts, data.stream, config.replace(method="bayesmm", fusion="full"),
                       data.references)
    acc["bayesmm"] = full["summary"]["accuracy"]
    for a in ABLATIONS:
        r = run_episode(data.prompts, data.stream, quiet.replace(method="bayesmm", fusion=a))
        acc[a] = r["summary"]["accuracy"]
    return SeedResult(seed, acc, full["checkpoints"])


def run_suite(seeds=SUITE_SEEDS, config=None):
    return [run_seed(s, config) for s in seeds]


def mean_accuracy(results):
    keys = results[0].accuracy.keys()
    return {k: float(np.mean([r.accuracy[k] for r in results])) for k in keys}
