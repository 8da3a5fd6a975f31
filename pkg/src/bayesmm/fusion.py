"""Per-modality GDA posteriors and their evidence-weighted fusion."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .gaussian import as_vector, log_sum_exp, regularize_scatter, stack_log_densities
from .geometric import predictive_gaussian

FUSION_MODES = ("full", "textual_only", "geometric_only")


@dataclass(frozen=True)
class ModalityPosterior:
    log_class_likelihoods: np.ndarray
    class_posterior: np.ndarray
    log_evidence: float


@dataclass(frozen=True)
class FusedPrediction:
    fused_posterior: np.ndarray
    predicted_class: int
    textual_weight: float
    geometric_weight: float
    textual: ModalityPosterior
    geometric: ModalityPosterior = None
    degenerate_weights: bool = False


@dataclass(frozen=True)
class FusionFlags:
    """Switches for :func:`fuse`.

    ``mode`` selects the ablation row; ``predictive_mode`` is forwarded to
    :func:`bayesmm.geometric.predictive_gaussian`; ``per_class_textual_cov``
    scores the textual modality with each class's own regularized scatter.
    """
    mode: str = "full"
    predictive_mode: str = "paper_literal"
    per_class_textual_cov: bool = False
    rel_eps: float = 1e-3

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise InvalidInputError(f"fusion mode must be one of {FUSION_MODES}, got {self.mode!r}")


def _posterior_from_loglik(loglik):
    loglik = np.asarray(loglik, dtype=np.float64)
    lse = log_sum_exp(loglik)
    if lse == -np.inf:
        # every class underflowed: uniform posterior, evidence -inf
        post = np.full(loglik.size, 1.0 / loglik.size)
    else:
        post = np.exp(loglik - lse)
    return ModalityPosterior(loglik, post, lse - math.log(loglik.size))


def gda_posterior(x, class_gaussians):
    """Class posterior under a uniform class prior with Gaussian class conditionals."""
    if len(class_gaussians) == 0:
        raise InvalidInputError("need at least one class Gaussian")
    return _posterior_from_loglik(stack_log_densities(x, class_gaussians))


def modality_weights(log_evidence_textual, log_evidence_geometric):
    """Two-way softmax of the modality log-evidences.

    Returns ``(w_T, w_G, degenerate)``; ``degenerate`` is True when both
    evidences are ``-inf`` and the uniform fallback ``(0.5, 0.5)`` is used.
    """
    lt, lg = float(log_evidence_textual), float(log_evidence_geometric)
    if math.isnan(lt) or math.isnan(lg):
        raise InvalidInputError("log-evidence is NaN")
    if lt == -math.inf and lg == -math.inf:
        return 0.5, 0.5, True
    # exponentiate only non-positive differences
    if lt >= lg:
        e = math.exp(lg - lt)
        return 1.0 / (1.0 + e), e / (1.0 + e), False
    e = math.exp(lt - lg)
    return e / (1.0 + e), 1.0 / (1.0 + e), False


def _argmax_lowest(p):
    # np.argmax already returns the first maximal index
    return int(np.argmax(p))


def textual_gaussians(textual_models, per_class_cov=False, rel_eps=1e-3):
    if not per_class_cov:
        return [m.gaussian() for m in textual_models]
    out = []
    for m in textual_models:
        S = m.scatter / max(m.M - 1, 1)
        if np.ndim(m.shared_cov) == 1:
            S = np.diag(S).copy()
        out.append(m.gaussian(regularize_scatter(S, rel_eps)))
    return out


def fuse(x, textual_models, geometric_states, flags=None, text_gaussians=None, geo_gaussians=None):
    """Evidence-weighted average of the textual and geometric class posteriors.

    ``text_gaussians`` and ``geo_gaussians`` may carry pre-built class
    Gaussians matching ``textual_models`` / ``geometric_states`` so a stream
    loop only rebuilds what an update changed.
    """
    flags = flags or FusionFlags()
    x = as_vector(x)
    C = len(textual_models)
    if C == 0 or (flags.mode != "textual_only" and len(geometric_states) != C):
        raise InvalidInputError(f"got {C} textual models and {len(geometric_states)} geometric states")
    if text_gaussians is None:
        text_gaussians = textual_gaussians(textual_models, flags.per_class_textual_cov, flags.rel_eps)
    p_t = gda_posterior(x, text_gaussians)
    if flags.mode == "textual_only":
        post = p_t.class_posterior
        return FusedPrediction(post, _argmax_lowest(post), 1.0, 0.0, p_t, None)

    if geo_gaussians is None:
        geo_gaussians = [predictive_gaussian(s, flags.predictive_mode) for s in geometric_states]
    p_g = gda_posterior(x, geo_gaussians)
    if flags.mode == "geometric_only":
        post = p_g.class_posterior
        return FusedPrediction(post, _argmax_lowest(post), 0.0, 1.0, p_t, p_g)

    w_t, w_g, degenerate = modality_weights(p_t.log_evidence, p_g.log_evidence)
    post = w_t * p_t.class_posterior + w_g * p_g.class_posterior
    return FusedPrediction(post, _argmax_lowest(post), w_t, w_g, p_t, p_g, degenerate)
