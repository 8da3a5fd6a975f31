"""Zero-shot prototype scoring and the class-wise cache baseline."""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidInputError

CACHE_SIMILARITIES = ("mean", "max")


@dataclass(frozen=True)
class CacheConfig:
    lam: float = 1.0
    gamma: float = 1.0
    K: int = 3
    insert_threshold: float = 0.0
    similarity: str = "mean"

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigurationError(f"lambda must be >= 0, got {self.lam}")
        if not self.gamma >= 0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigurationError(f"K must be a positive integer, got {self.K}")
        if not 0.0 <= self.insert_threshold <= 1.0:
            raise ConfigurationError(f"insert_threshold must lie in [0, 1], got {self.insert_threshold}")
        if self.similarity not in CACHE_SIMILARITIES:
            raise ConfigurationError(f"similarity must be one of {CACHE_SIMILARITIES}")


@dataclass
class CacheEntry:
    feature: np.ndarray
    confidence: float
    inserted_at: int = 0


@dataclass
class ClassCache:
    K: int
    entries: list = field(default_factory=list)

    def mean_feature(self):
        if not self.entries:
            return None
        return np.mean([e.feature for e in self.entries], axis=0)


def new_caches(n_classes, K):
    return [ClassCache(K) for _ in range(n_classes)]


def _prototype_matrix(prototypes, d):
    Z = np.asarray(prototypes, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != d:
        raise InvalidInputError(f"prototypes have shape {Z.shape}, expected (C, {d})")
    return Z


def zero_shot_logits(x, prototypes):
    """Inner product of ``x`` with every class prototype."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("x must be a vector")
    Z = _prototype_matrix(prototypes, x.size)
    return Z @ x


def cosine(u, v):
    nu = math.sqrt(float(u @ u))
    nv = math.sqrt(float(v @ v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v) / (nu * nv)


def cache_bonus(x, caches, config):
    """Per-class additive cache term ``lam * exp(-gamma * (1 - cos))``."""
    bonus = np.zeros(len(caches))
    if config.lam == 0:
        return bonus
    for c, cache in enumerate(caches):
        if not cache.entries:
            continue
        if config.similarity == "mean":
            cs = cosine(x, cache.mean_feature())
        else:
            cs = max(cosine(x, e.feature) for e in cache.entries)
        bonus[c] = config.lam * math.exp(-config.gamma * (1.0 - cs))
    return bonus


def cache_score(x, prototypes, caches, config=None):
    config = config or CacheConfig()
    logits = zero_shot_logits(x, prototypes)
    if len(caches) != logits.size:
        raise InvalidInputError(f"{len(caches)} caches for {logits.size} classes")
    if config.lam == 0:
        return logits
    return logits + cache_bonus(np.asarray(x, dtype=np.float64), caches, config)


def softmax(v):
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - np.max(v))
    return e / e.sum()


def cache_update(caches, x, posterior, config=None, step=0):
    """Insert ``x`` into the cache of the most probable class, evicting the
    lowest-confidence entry (oldest on ties) when over capacity.

    Mutates ``caches`` in place and returns it.
    """
    config = config or CacheConfig()
    p = np.asarray(posterior, dtype=np.float64)
    if p.size != len(caches) or abs(p.sum() - 1.0) > 1e-6:
        raise InvalidInputError("posterior must have one entry per cache and sum to 1")
    c_star = int(np.argmax(p))
    p_star = float(p[c_star])
    if p_star < config.insert_threshold:
        return caches
    cache = caches[c_star]
    cache.entries.append(CacheEntry(np.array(x, dtype=np.float64), p_star, step))
    if len(cache.entries) > config.K:
        worst = min(range(len(cache.entries)),
                    key=lambda i: (cache.entries[i].confidence, cache.entries[i].inserted_at))
        del cache.entries[worst]
    return caches
