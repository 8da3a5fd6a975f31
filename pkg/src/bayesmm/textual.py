"""Textual class distributions built from prompt-paraphrase embeddings."""
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import InvalidInputError
from .gaussian import GaussianModel, check_symmetric, regularize_scatter

MAP_FORMS = ("canonical", "paper_main")


@dataclass(frozen=True)
class PromptEmbeddingSet:
    class_id: int
    embeddings: np.ndarray  # (M, d)

    def __post_init__(self):
        z = np.array(self.embeddings, dtype=np.float64)
        if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 1:
            raise InvalidInputError(f"class {self.class_id}: embeddings must be (M>=1, d>=1), got {z.shape}")
        if not np.all(np.isfinite(z)):
            raise InvalidInputError(f"class {self.class_id}: non-finite prompt embedding")
        z.setflags(write=False)
        object.__setattr__(self, "embeddings", z)

    @property
    def M(self):
        return self.embeddings.shape[0]

    @property
    def dim(self):
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class TextualClassModel:
    class_id: int
    empirical_mean: np.ndarray
    scatter: np.ndarray
    M: int
    map_prototype: np.ndarray
    shared_cov: np.ndarray  # (d, d), or (d,) in diagonal mode

    @cached_property
    def _shared_gaussian(self):
        return GaussianModel(self.map_prototype, self.shared_cov)

    def gaussian(self, per_class_cov=None):
        """Class-conditional Gaussian centred on the MAP prototype."""
        if per_class_cov is None:
            return self._shared_gaussian
        return GaussianModel(self.map_prototype, per_class_cov)


def empirical_stats(prompts):
    """Mean and unnormalized scatter of one class's prompt embeddings.

    The mean uses compensated summation so results do not depend on the
    order of the prompts beyond the last bit.
    """
    if isinstance(prompts, PromptEmbeddingSet):
        z = prompts.embeddings
    else:
        z = np.asarray(prompts, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise InvalidInputError("empirical_stats needs a non-empty (M, d) set")
    M = z.shape[0]
    mean = np.array([math.fsum(col) for col in z.T]) / M
    r = z - mean
    scatter = r.T @ r
    scatter = 0.5 * (scatter + scatter.T)
    return mean, scatter


def pooled_shared_cov(models, rel_eps=1e-3, diagonal=False):
    """Pooled within-class covariance ``sum S_c / sum (M_c - 1)``, regularized.

    ``models`` is a sequence of ``(scatter, M)`` pairs.
    """
    models = list(models)
    if not models:
        raise InvalidInputError("pooled_shared_cov needs at least one class")
    d = np.asarray(models[0][0]).shape[0]
    total = np.zeros((d, d))
    dof = 0
    for S, M in models:
        S = check_symmetric(S, "scatter")
        if S.shape != (d, d):
            raise InvalidInputError(f"scatter shape {S.shape} does not match {(d, d)}")
        if int(M) < 1:
            raise InvalidInputError(f"prompt count must be >= 1, got {M}")
        total += S
        dof += int(M) - 1
    pooled = total / dof if dof > 0 else np.zeros((d, d))
    if diagonal:
        return regularize_scatter(np.diag(pooled).copy(), rel_eps)
    return regularize_scatter(pooled, rel_eps)


def map_prototype(mean, shared_cov, M, beta_inv2=1.0, form="canonical"):
    """MAP estimate of the latent textual prototype under a zero-centred prior.

    ``canonical`` solves ``(beta_inv2 I + M S^-1) nu = M S^-1 mean``;
    ``paper_main`` drops the M on the right-hand side.  Both are computed as
    ``nu = (beta_inv2 S + M I)^-1 k mean`` with ``k`` = M or 1, which is the
    same system left-multiplied by S and needs no inverse.
    """
    if form not in MAP_FORMS:
        raise InvalidInputError(f"unknown MAP form {form!r}; expected one of {MAP_FORMS}")
    if beta_inv2 < 0 or not np.isfinite(beta_inv2):
        raise InvalidInputError(f"beta_inv2 must be finite and >= 0, got {beta_inv2}")
    if M < 1:
        raise InvalidInputError(f"M must be >= 1, got {M}")
    mean = np.asarray(mean, dtype=np.float64)
    S = np.asarray(shared_cov, dtype=np.float64)
    k = float(M) if form == "canonical" else 1.0
    if S.ndim == 1:
        if S.shape != mean.shape or np.any(S <= 0):
            raise InvalidInputError("diagonal shared covariance must be positive and match mean")
        return k * mean / (beta_inv2 * S + M)
    S = check_symmetric(S, "shared covariance")
    if S.shape[0] != mean.size:
        raise InvalidInputError(f"shared covariance {S.shape} does not match mean dimension {mean.size}")
    try:
        linalg.cholesky(S, lower=True)
    except linalg.LinAlgError as exc:
        raise InvalidInputError("shared covariance is not positive definite") from exc
    A = beta_inv2 * S + M * np.eye(mean.size)
    # A is SPD whenever S is
    c = linalg.cho_factor(A, lower=True)
    return linalg.cho_solve(c, k * mean)


def _check_class_ids(all_prompts):
    ids = sorted(p.class_id for p in all_prompts)
    if ids != list(range(len(all_prompts))):
        raise InvalidInputError(f"class ids must be exactly 0..C-1 without gaps or duplicates, got {ids}")


def build_textual_models(all_prompts, rel_eps=1e-3, beta_inv2=1.0, form="canonical", diagonal=False):
    """Per-class textual models sharing one pooled, regularized covariance."""
    all_prompts = list(all_prompts)
    if not all_prompts:
        raise InvalidInputError("no prompt sets supplied")
    _check_class_ids(all_prompts)
    d = all_prompts[0].dim
    if any(p.dim != d for p in all_prompts):
        raise InvalidInputError("prompt sets disagree on embedding dimension")
    ordered = sorted(all_prompts, key=lambda p: p.class_id)
    stats = [empirical_stats(p) for p in ordered]
    shared = pooled_shared_cov([(S, p.M) for (_, S), p in zip(stats, ordered)], rel_eps, diagonal=diagonal)
    shared.setflags(write=False)
    models = []
    for p, (mean, S) in zip(ordered, stats):
        nu = map_prototype(mean, shared, p.M, beta_inv2, form)
        for arr in (mean, S, nu):
            arr.setflags(write=False)
        models.append(TextualClassModel(p.class_id, mean, S, p.M, nu, shared))
    return models

