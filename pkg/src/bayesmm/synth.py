"""Synthetic corrupted-stream benchmark generator.

Class means are drawn uniformly on the unit sphere with a minimum pairwise
angle.  Prompt embeddings jitter around the class means; test features are
drawn around the class means after a corruption has been applied.  The
generating distributions are kept as :class:`ReferenceGenerator` objects so
diagnostics can compare learned class distributions against the truth.
"""
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .gaussian import GaussianModel
from .io import FLAG_NORMALIZED, FeatureStream, PromptFile

# frozen after calibration; see README "Synthetic suite"
DEFAULT_SIGMA_TEXT = 0.2
DEFAULT_SIGMA_GEN = 0.35
DEFAULT_MIN_ANGLE_DEG = 60.0
DEFAULT_PROMPTS = 8
MAX_REJECTIONS = 10_000
REFERENCE_MC_SAMPLES = 20_000


@dataclass(frozen=True)
class Corruption:
    kind: str = "none"
    amount: float = 0.0

    KINDS = ("none", "mean_shift", "covariance_inflate")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown corruption {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "mean_shift" and not self.amount >= 0:
            raise ConfigurationError("mean_shift scale must be >= 0")
        if self.kind == "covariance_inflate" and not self.amount > 0:
            raise ConfigurationError("covariance_inflate factor must be > 0")

    @classmethod
    def parse(cls, text):
        """Parse ``none``, ``mean_shift:0.4`` or ``covariance_inflate:2``."""
        text = text.strip()
        if text == "none":
            return cls()
        kind, sep, amount = text.partition(":")
        if not sep:
            raise ConfigurationError(f"corruption {text!r} needs a value, e.g. mean_shift:0.4")
        try:
            value = float(amount)
        except ValueError:
            raise ConfigurationError(f"bad corruption amount {amount!r}") from None
        return cls(kind, value)

    def __str__(self):
        return "none" if self.kind == "none" else f"{self.kind}:{self.amount:g}"


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 10
    dim: int = 32
    n_prompts: int = DEFAULT_PROMPTS
    n_samples: int = 2000
    corruption: Corruption = Corruption("mean_shift", 0.4)
    seed: int = 0
    sigma_text: float = DEFAULT_SIGMA_TEXT
    sigma_gen: float = DEFAULT_SIGMA_GEN
    min_angle_deg: float = DEFAULT_MIN_ANGLE_DEG
    normalize: bool = True

    def __post_init__(self):
        if self.n_classes < 2 or self.dim < 2 or self.n_samples < 1 or self.n_prompts < 1:
            raise ConfigurationError("need C >= 2, d >= 2, M >= 1 and at least one sample")
        if self.sigma_text < 0 or self.sigma_gen <= 0:
            raise ConfigurationError("sigma_text must be >= 0 and sigma_gen > 0")


class ReferenceGenerator:
    """Per-class generating distribution of the synthetic test features.

    ``gaussian`` is the moment-matched Gaussian of what :meth:`sample`
    returns (exact when features are not normalized, Monte-Carlo otherwise).
    """

    def __init__(self, class_id, mean, sigma, normalize, gaussian):
        self.class_id = class_id
        self.mean = mean
        self.sigma = sigma
        self.normalize = normalize
        self.gaussian = gaussian

    def sample_from_normals(self, eps):
        x = self.mean + self.sigma * eps
        if self.normalize:
            x = x / np.linalg.norm(x, axis=-1, keepdims=True)
        return x

    def sample(self, n, rng):
        return self.sample_from_normals(rng.standard_normal((n, self.mean.size)))


@dataclass
class SynthData:
    prompts: PromptFile
    stream: FeatureStream
    references: list
    class_means: np.ndarray
    spec: SynthSpec


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def draw_class_means(rng, C, d, min_angle_deg):
    cos_max = math.cos(math.radians(min_angle_deg))
    means = []
    for _ in range(C):
        for _attempt in range(MAX_REJECTIONS):
            v = _unit(rng.standard_normal(d))
            if all(float(v @ m) <= cos_max for m in means):
                means.append(v)
                break
        else:
            raise ConfigurationError(
                f"could not place {C} unit vectors in d={d} with pairwise angle >= {min_angle_deg} deg")
    return np.array(means)


def _moment_match(gen, rng):
    x = gen.sample(REFERENCE_MC_SAMPLES, rng)
    mean = x.mean(axis=0)
    r = x - mean
    cov = r.T @ r / (x.shape[0] - 1)
    return GaussianModel(mean, 0.5 * (cov + cov.T))


def synth_generate(spec):
    """Generate prompts, a labelled stream and reference generators for ``spec``."""
    root = np.random.SeedSequence(spec.seed)
    r_means, r_prompt, r_shift, r_stream, r_ref = [np.random.default_rng(s) for s in root.spawn(5)]
    C, d = spec.n_classes, spec.dim

    means = draw_class_means(r_means, C, d, spec.min_angle_deg)

    jitter = spec.sigma_text * r_prompt.standard_normal((C, spec.n_prompts, d))
    prompts = _unit(means[:, None, :] + jitter).astype(np.float32)

    # the shift directions are always drawn so every corruption sees the same stream noise
    directions = _unit(r_shift.standard_normal((C, d)))
    shifted = means
    sigma = spec.sigma_gen
    if spec.corruption.kind == "mean_shift":
        shifted = means + spec.corruption.amount * directions
    elif spec.corruption.kind == "covariance_inflate":
        sigma = spec.sigma_gen * math.sqrt(spec.corruption.amount)

    labels = r_stream.integers(0, C, size=spec.n_samples).astype(np.int32)
    eps = r_stream.standard_normal((spec.n_samples, d))
    x = shifted[labels] + sigma * eps
    if spec.normalize:
        x = _unit(x)
    flags = FLAG_NORMALIZED if spec.normalize else 0
    stream = FeatureStream(labels, x.astype(np.float32), C, flags)

    references = []
    for c in range(C):
        gen = ReferenceGenerator(c, shifted[c].copy(), sigma, spec.normalize, None)
        if spec.normalize:
            gen.gaussian = _moment_match(gen, r_ref)
        else:
            gen.gaussian = GaussianModel(shifted[c], sigma * sigma * np.eye(d))
        references.append(gen)

    names = [f"class_{c}" for c in range(C)]
    return SynthData(PromptFile(prompts, names), stream, references, means, spec)


def save_references(path, references):
    """Store reference generators as JSON (generator parameters and moment-matched Gaussians)."""
    doc = {
        "format": "bayesmm-reference",
        "version": 1,
        "classes": [
            {
                "class_id": g.class_id,
                "generator_mean": g.mean.tolist(),
                "sigma": g.sigma,
                "normalize": g.normalize,
                "reference_mean": g.gaussian.mean.tolist(),
                "reference_cov": g.gaussian.full_cov().tolist(),
            }
            for g in references
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_references(path):
    with open(path) as fh:
        doc = json.load(fh)
    out = []
    for item in doc["classes"]:
        g = GaussianModel(item["reference_mean"], item["reference_cov"])
        out.append(ReferenceGenerator(item["class_id"], np.array(item["generator_mean"]),
                                      float(item["sigma"]), bool(item["normalize"]), g))
    return out
