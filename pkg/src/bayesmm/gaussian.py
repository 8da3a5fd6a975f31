"""Multivariate Gaussian primitives.

Every quadratic form and log-determinant goes through a Cholesky factor
computed once when a :class:`GaussianModel` is built.  A model whose ``cov``
is one-dimensional is treated as diagonal and only the variances are stored.
"""
import numpy as np
from scipy import linalg

from . import _kernels
from ._kernels import LOG_2PI
from .errors import InvalidInputError

SYMMETRY_RTOL = 1e-12
KL_ROUNDOFF = 1e-10


def as_vector(x, name="x"):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return v


def check_symmetric(S, name="matrix"):
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidInputError(f"{name} has non-finite entries")
    scale = np.max(np.abs(S)) if S.size else 0.0
    if np.max(np.abs(S - S.T), initial=0.0) > SYMMETRY_RTOL * max(scale, 1.0):
        raise InvalidInputError(f"{name} is not symmetric")
    return S


def regularize_scatter(S, rel_eps=1e-3):
    """Return ``S + eps * I`` with ``eps = rel_eps * trace(S) / d``.

    A zero-trace input falls back to ``eps = rel_eps`` so the result stays
    positive definite.  One-dimensional input is treated as a diagonal.
    """
    if rel_eps < 0 or not np.isfinite(rel_eps):
        raise InvalidInputError(f"rel_eps must be finite and >= 0, got {rel_eps}")
    S = np.asarray(S, dtype=np.float64)
    if S.ndim == 1:
        if not np.all(np.isfinite(S)):
            raise InvalidInputError("scatter has non-finite entries")
        tr = float(np.sum(S))
        eps = rel_eps * tr / S.size if tr != 0.0 else rel_eps
        return S + eps
    S = check_symmetric(S, "scatter")
    d = S.shape[0]
    tr = float(np.trace(S))
    eps = rel_eps * tr / d if tr != 0.0 else rel_eps
    return S + eps * np.eye(d)


class GaussianModel:
    """Immutable ``N(mean, cov)`` with its factorization cached.

    Parameters
    ----------
    mean : (d,) array_like
    cov : (d, d) or (d,) array_like
        Full covariance, or the diagonal of a diagonal covariance.
    """

    __slots__ = ("mean", "cov", "chol", "logdet", "diagonal")

    def __init__(self, mean, cov):
        mean = as_vector(mean, "mean").copy()
        cov = np.array(cov, dtype=np.float64)
        d = mean.size
        if cov.ndim == 1:
            if cov.size != d:
                raise InvalidInputError(f"covariance diagonal has length {cov.size}, mean has {d}")
            if not np.all(np.isfinite(cov)) or np.any(cov <= 0):
                raise InvalidInputError("diagonal covariance must be finite and strictly positive")
            chol = np.sqrt(cov)
            logdet = float(np.sum(np.log(cov)))
            diagonal = True
        else:
            cov = check_symmetric(cov, "covariance")
            if cov.shape[0] != d:
                raise InvalidInputError(f"covariance is {cov.shape}, mean has dimension {d}")
            try:
                chol = linalg.cholesky(cov, lower=True, check_finite=False)
            except linalg.LinAlgError as exc:
                raise InvalidInputError("covariance is not positive definite") from exc
            diag = np.diag(chol)
            if np.any(diag <= 0) or not np.all(np.isfinite(chol)):
                raise InvalidInputError("covariance is not positive definite")
            logdet = 2.0 * float(np.sum(np.log(diag)))
            diagonal = False
        for arr in (mean, cov, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "logdet", logdet)
        object.__setattr__(self, "diagonal", diagonal)

    def __setattr__(self, name, value):
        raise AttributeError("GaussianModel is immutable")

    @property
    def dim(self):
        return self.mean.size

    def full_cov(self):
        return np.diag(self.cov) if self.diagonal else np.array(self.cov)

    def whiten(self, r):
        """Return ``L^{-1} r`` for residual vector(s) ``r`` (last axis is d)."""
        if self.diagonal:
            return r / self.chol
        return linalg.solve_triangular(self.chol, np.asarray(r).T, lower=True).T

    def __repr__(self):
        kind = "diag" if self.diagonal else "full"
        return f"GaussianModel(dim={self.dim}, cov={kind}, logdet={self.logdet:.6g})"


def log_density(g, x):
    """``ln N(x | g.mean, g.cov)`` via the cached Cholesky factor."""
    x = as_vector(x)
    if x.size != g.dim:
        raise InvalidInputError(f"x has dimension {x.size}, model has {g.dim}")
    y = g.whiten(x - g.mean)
    return -0.5 * (g.dim * LOG_2PI + g.logdet + float(y @ y))


def gaussian_kl(p, q):
    """Closed-form ``KL(p || q)`` between two Gaussians, clamped at zero."""
    if p.dim != q.dim:
        raise InvalidInputError(f"dimension mismatch: {p.dim} vs {q.dim}")
    d = p.dim
    dm = q.mean - p.mean
    if p.diagonal and q.diagonal:
        tr = float(np.sum(p.cov / q.cov))
    else:
        # tr(Sq^{-1} Sp) = ||Lq^{-1} Lp||_F^2
        lp = np.diag(p.chol) if p.diagonal else p.chol
        m = q.whiten(lp.T).T if not q.diagonal else lp / q.chol[:, None]
        tr = float(np.sum(m * m))
    y = q.whiten(dm)
    kl = 0.5 * (tr + float(y @ y) - d + q.logdet - p.logdet)
    if kl < 0.0:
        if kl < -KL_ROUNDOFF * (1.0 + tr + abs(q.logdet) + abs(p.logdet)):
            raise ArithmeticError(f"negative KL {kl!r} beyond roundoff")
        kl = 0.0
    return kl


def log_sum_exp(values):
    """Stable ``ln sum exp(values)``; exact for a single element."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise InvalidInputError("log_sum_exp of an empty sequence")
    if np.any(np.isnan(v)):
        raise InvalidInputError("log_sum_exp input contains NaN")
    if v.size == 1:
        return float(v[0])
    return float(_kernels.logsumexp(np.ascontiguousarray(v)))


def stack_log_densities(x, gaussians):
    """Log-density of ``x`` under each model in ``gaussians`` (shape ``(C,)``).

    Models must agree on dimension and on diagonal/full storage.
    """
    x = as_vector(x)
    if not gaussians:
        raise InvalidInputError("need at least one Gaussian")
    d = gaussians[0].dim
    diagonal = gaussians[0].diagonal
    for g in gaussians:
        if g.dim != d or x.size != d:
            raise InvalidInputError("dimension mismatch among Gaussians or with x")
        if g.diagonal != diagonal:
            raise InvalidInputError("cannot mix diagonal and full Gaussians")
    means = np.ascontiguousarray(np.stack([g.mean for g in gaussians]))
    if diagonal:
        variances = np.ascontiguousarray(np.stack([g.cov for g in gaussians]))
        return _kernels.diag_logpdf(x, means, variances)
    chols = np.ascontiguousarray(np.stack([g.chol for g in gaussians]))
    logdets = np.array([g.logdet for g in gaussians])
    return _kernels.chol_logpdf(x, means, chols, logdets)
