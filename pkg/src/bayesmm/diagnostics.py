"""Distribution-consistency diagnostics: mean class KL and RBF-kernel MMD."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from . import _kernels
from .errors import InvalidInputError
from .gaussian import gaussian_kl


@dataclass(frozen=True)
class TrajectoryCheckpoint:
    step_index: int
    mean_kl: float = None
    mmd: float = None
    accuracy_so_far: float = None
    bandwidth_fallback: bool = False

    def as_dict(self):
        return {
            "step": self.step_index,
            "mean_kl": self.mean_kl,
            "mmd": self.mmd,
            "accuracy_so_far": self.accuracy_so_far,
            "bandwidth_fallback": self.bandwidth_fallback,
        }


def mean_class_kl(estimated, reference):
    """Average over classes of ``KL(estimated_c || reference_c)``."""
    if len(estimated) != len(reference) or not estimated:
        raise InvalidInputError(f"class count mismatch: {len(estimated)} vs {len(reference)}")
    return float(np.mean([gaussian_kl(p, q) for p, q in zip(estimated, reference)]))


def median_bandwidth(pooled):
    """Median pairwise distance of ``pooled``; the lower median for even counts.

    Returns ``(sigma, fallback)`` where ``fallback`` is True when the median
    is zero (or there is a single point) and ``sigma = 1`` is used instead.
    """
    if pooled.shape[0] < 2:
        return 1.0, True
    dist = np.sort(pdist(pooled))
    sigma = float(dist[(dist.size - 1) // 2])
    if not sigma > 0.0:
        return 1.0, True
    return sigma, False


def _as_samples(a, name):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] == 0:
        raise InvalidInputError(f"{name} must be a non-empty (n, d) sample set")
    return a


def mmd_rbf(a, b, bandwidth="median_heuristic", return_flag=False):
    """Biased (V-statistic) RBF-kernel MMD between two sample sets.

    ``bandwidth`` is ``"median_heuristic"`` or a positive float sigma.
    Returns ``sqrt(max(MMD^2, 0))``; with ``return_flag`` also returns
    whether the degenerate-bandwidth fallback fired.
    """
    a = _as_samples(a, "sample_set_a")
    b = _as_samples(b, "sample_set_b")
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    fallback = False
    if isinstance(bandwidth, str):
        if bandwidth != "median_heuristic":
            raise InvalidInputError(f"unknown bandwidth rule {bandwidth!r}")
        sigma, fallback = median_bandwidth(np.vstack([a, b]))
    else:
        sigma = float(bandwidth)
        if not sigma > 0:
            raise InvalidInputError(f"bandwidth must be positive, got {bandwidth}")
    g = 1.0 / (2.0 * sigma * sigma)
    k = _kernels.rbf_mean
    mmd2 = k(a, a, g) + k(b, b, g) - 2.0 * k(a, b, g)
    val = math.sqrt(max(mmd2, 0.0))
    return (val, fallback) if return_flag else val


def checkpoint(step, estimated, reference_gaussians=None, recent_samples=None,
               reference_samples=None, accuracy_so_far=None):
    """Record KL/MMD consistency at one step of an episode.

    Missing references leave the corresponding field as ``None``.
    """
    mean_kl = None
    mmd = None
    fallback = False
    if reference_gaussians is not None:
        mean_kl = mean_class_kl(estimated, reference_gaussians)
    if reference_samples is not None and recent_samples is not None and len(recent_samples):
        mmd, fallback = mmd_rbf(recent_samples, reference_samples, return_flag=True)
    return TrajectoryCheckpoint(int(step), mean_kl, mmd, accuracy_so_far, fallback)
