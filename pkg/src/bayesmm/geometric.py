"""Streaming Gaussian posterior over each class's feature mean.

State is carried in information form: precision ``Lambda`` and shift
``eta = Lambda @ mu``.  Absorbing an observation ``x`` with observation
precision ``Lambda_obs`` is then ``Lambda += Lambda_obs`` and
``eta += Lambda_obs @ x``; the mean and covariance are recovered with one
Cholesky solve.  In diagonal mode every matrix is stored as its diagonal.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, InvalidInputError
from .gaussian import GaussianModel, as_vector

INIT_COV_MODES = ("alpha_identity", "textual_scatter")
PREDICTIVE_MODES = ("paper_literal", "posterior_predictive")


@dataclass(frozen=True)
class GeometricConfig:
    alpha2: float = 1.0
    init_cov_mode: str = "alpha_identity"
    tau: float = 0.0

    def __post_init__(self):
        if not (self.alpha2 > 0 and np.isfinite(self.alpha2)):
            raise ConfigurationError(f"alpha2 must be positive, got {self.alpha2}")
        if self.init_cov_mode not in INIT_COV_MODES:
            raise ConfigurationError(f"init_cov_mode must be one of {INIT_COV_MODES}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigurationError(f"tau must lie in [0, 1], got {self.tau}")


def _spd_inverse(A):
    if A.ndim == 1:
        return 1.0 / A
    c = linalg.cho_factor(A, lower=True)
    inv = linalg.cho_solve(c, np.eye(A.shape[0]))
    return 0.5 * (inv + inv.T)


def _matvec(A, x):
    return A * x if A.ndim == 1 else A @ x


class GeometricClassState:
    """Posterior ``N(mu, post_cov)`` over one class mean plus its observation model.

    Instances are immutable; :func:`update` returns a new state.
    """

    __slots__ = ("class_id", "precision", "shift", "obs_cov", "obs_precision",
                 "update_count", "mu", "post_cov", "_predictive")

    def __init__(self, class_id, precision, shift, obs_cov, obs_precision, update_count=0):
        try:
            if precision.ndim == 1:
                if np.any(precision <= 0):
                    raise linalg.LinAlgError("non-positive precision")
                post_cov = 1.0 / precision
                mu = shift * post_cov
            else:
                c = linalg.cho_factor(precision, lower=True)
                mu = linalg.cho_solve(c, shift)
                post_cov = linalg.cho_solve(c, np.eye(precision.shape[0]))
                post_cov = 0.5 * (post_cov + post_cov.T)
        except linalg.LinAlgError as exc:
            raise InvalidInputError("posterior precision is not positive definite") from exc
        for arr in (precision, shift, obs_cov, obs_precision, mu, post_cov):
            arr.setflags(write=False)
        s = object.__setattr__
        s(self, "class_id", int(class_id))
        s(self, "precision", precision)
        s(self, "shift", shift)
        s(self, "obs_cov", obs_cov)
        s(self, "obs_precision", obs_precision)
        s(self, "update_count", int(update_count))
        s(self, "mu", mu)
        s(self, "post_cov", post_cov)
        s(self, "_predictive", {})

    def __setattr__(self, name, value):
        raise AttributeError("GeometricClassState is immutable")

    @property
    def dim(self):
        return self.shift.size

    @property
    def diagonal(self):
        return self.precision.ndim == 1

    @classmethod
    def from_moments(cls, class_id, mu0, cov0, obs_cov):
        """Build a fresh state from a prior mean/covariance and a fixed observation covariance."""
        mu0 = as_vector(mu0, "mu0").copy()
        cov0 = np.array(cov0, dtype=np.float64)
        obs_cov = np.array(obs_cov, dtype=np.float64)
        if cov0.shape[0] != mu0.size or obs_cov.shape != cov0.shape:
            raise InvalidInputError("prior mean, prior covariance and observation covariance disagree in shape")
        try:
            precision = _spd_inverse(cov0)
            obs_precision = _spd_inverse(obs_cov)
        except linalg.LinAlgError as exc:
            raise InvalidInputError("prior or observation covariance is not positive definite") from exc
        if cov0.ndim == 1 and (np.any(cov0 <= 0) or np.any(obs_cov <= 0)):
            raise InvalidInputError("diagonal covariances must be positive")
        return cls(class_id, precision, _matvec(precision, mu0), obs_cov, obs_precision, 0)

    def __repr__(self):
        return f"GeometricClassState(class_id={self.class_id}, dim={self.dim}, update_count={self.update_count})"


def init_state(class_id, textual, config=None):
    """Anchor a class's geometric posterior at its textual empirical mean."""
    config = config or GeometricConfig()
    shared = np.asarray(textual.shared_cov, dtype=np.float64)
    d = textual.empirical_mean.size
    if shared.shape[0] != d:
        raise InvalidInputError("textual model covariance does not match its mean")
    if config.init_cov_mode == "alpha_identity":
        cov0 = np.full(d, config.alpha2) if shared.ndim == 1 else config.alpha2 * np.eye(d)
    else:
        cov0 = shared
    return GeometricClassState.from_moments(class_id, textual.empirical_mean, cov0, shared)


def update(state, x, weight=1.0):
    """Absorb one observation; ``weight`` scales the observation precision.

    ``weight=1`` is the closed-form conjugate update.  Fractional weights
    implement responsibility-weighted (soft) updates.  The input state is
    never modified.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != state.dim:
        raise InvalidInputError(f"observation has shape {x.shape}, state has dimension {state.dim}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("observation has non-finite entries")
    if not (0.0 <= weight and np.isfinite(weight)):
        raise InvalidInputError(f"update weight must be finite and >= 0, got {weight}")
    lam_obs = state.obs_precision
    precision = state.precision + weight * lam_obs
    if precision.ndim == 2:
        precision = 0.5 * (precision + precision.T)
    shift = state.shift + weight * _matvec(lam_obs, x)
    return GeometricClassState(state.class_id, precision, shift, state.obs_cov,
                               state.obs_precision, state.update_count + 1)


def predictive_gaussian(state, mode="paper_literal"):
    """Gaussian used to score features against this class.

    ``paper_literal`` uses the posterior covariance of the mean as written in
    the class posterior formula; ``posterior_predictive`` adds the observation
    covariance, which is the marginal distribution of a new feature.
    """
    g = state._predictive.get(mode)
    if g is not None:
        return g
    if mode == "paper_literal":
        g = GaussianModel(state.mu, state.post_cov)
    elif mode == "posterior_predictive":
        g = GaussianModel(state.mu, state.post_cov + state.obs_cov)
    else:
        raise ConfigurationError(f"unknown predictive mode {mode!r}; expected one of {PREDICTIVE_MODES}")
    # states are immutable, so the Gaussian can be kept with them
    state._predictive[mode] = g
    return g
