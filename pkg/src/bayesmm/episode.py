"""Episode run-loop: score each stream record, then adapt.

Every method sees records in file order and predicts a record before that
record can influence any state.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import _kernels
from .baselines import CacheConfig, cache_score, cache_update, new_caches, softmax, zero_shot_logits
from .diagnostics import checkpoint as make_checkpoint
from .errors import ConfigurationError
from .fusion import FUSION_MODES, FusionFlags, fuse, textual_gaussians
from .geometric import (INIT_COV_MODES, PREDICTIVE_MODES, GeometricConfig, init_state,
                        predictive_gaussian, update)
from .textual import MAP_FORMS, PromptEmbeddingSet, build_textual_models

log = logging.getLogger(__name__)

REPORT_FORMAT = "bayesmm-episode-report"
REPORT_VERSION = 1
METHODS = ("zeroshot", "cache", "bayesmm")
UPDATE_MODES = ("hard", "soft")


@dataclass(frozen=True)
class EpisodeConfig:
    method: str = "bayesmm"
    alpha2: float = 1.0
    beta2: float = 1.0
    rel_eps: float = 1e-3
    tau: float = 0.0
    lam: float = 1.0
    gamma: float = 1.0
    K: int = 3
    insert_threshold: float = 0.0
    cache_similarity: str = "mean"
    map_form: str = "canonical"
    init_cov_mode: str = "alpha_identity"
    predictive_mode: str = "paper_literal"
    update_mode: str = "hard"
    fusion: str = "full"
    diagonal: bool = False
    per_class_textual_cov: bool = False
    checkpoint_every: int = 500
    mmd_samples: int = 400
    seed: int = 0

    def __post_init__(self):
        def need(cond, msg):
            if not cond:
                raise ConfigurationError(msg)

        need(self.method in METHODS, f"method must be one of {METHODS}")
        need(self.beta2 > 0 and math.isfinite(self.beta2) or self.beta2 == math.inf,
             "beta2 must be positive (inf allowed)")
        need(self.rel_eps >= 0, "rel_eps must be >= 0")
        need(self.map_form in MAP_FORMS, f"map_form must be one of {MAP_FORMS}")
        need(self.init_cov_mode in INIT_COV_MODES, f"init_cov_mode must be one of {INIT_COV_MODES}")
        need(self.predictive_mode in PREDICTIVE_MODES, f"predictive_mode must be one of {PREDICTIVE_MODES}")
        need(self.update_mode in UPDATE_MODES, f"update_mode must be one of {UPDATE_MODES}")
        need(self.fusion in FUSION_MODES, f"fusion must be one of {FUSION_MODES}")
        need(int(self.checkpoint_every) == self.checkpoint_every and self.checkpoint_every >= 0,
             "checkpoint_every must be a non-negative integer (0 disables)")
        need(self.mmd_samples >= 2, "mmd_samples must be >= 2")
        # delegate the remaining domain checks
        GeometricConfig(self.alpha2, self.init_cov_mode, self.tau)
        self.cache_config()

    @property
    def beta_inv2(self):
        return 0.0 if self.beta2 == math.inf else 1.0 / self.beta2

    def cache_config(self):
        return CacheConfig(self.lam, self.gamma, self.K, self.insert_threshold, self.cache_similarity)

    def geometric_config(self):
        return GeometricConfig(self.alpha2, self.init_cov_mode, self.tau)

    def fusion_flags(self):
        return FusionFlags(self.fusion, self.predictive_mode, self.per_class_textual_cov, self.rel_eps)

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return EpisodeConfig(**d)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**d)


def _prompt_sets(prompts):
    z = np.asarray(prompts.embeddings, dtype=np.float64)
    return [PromptEmbeddingSet(c, z[c]) for c in range(z.shape[0])]


class _CheckpointProbe:
    """Fixed draws reused at every checkpoint so KL/MMD differences reflect the model only."""

    def __init__(self, references, d, n, seed):
        C = len(references)
        rng = np.random.default_rng([int(seed), 0x4D4D44])
        per = max(1, n // C)
        self.references = references
        self.model_eps = rng.standard_normal((C, per, d))
        self.ref_samples = np.concatenate(
            [g.sample_from_normals(rng.standard_normal((per, d))) for g in references])
        self.ref_gaussians = [g.gaussian for g in references]

    def model_samples(self, gaussians):
        out = []
        for g, eps in zip(gaussians, self.model_eps):
            L = np.diag(g.chol) if g.diagonal else g.chol
            out.append(g.mean + eps @ L.T)
        return np.concatenate(out)


def run_episode(prompts, stream, config=None, references=None):
    """Run one adaptation episode and return its report as an ordered dict.

    ``references`` (a list of :class:`bayesmm.synth.ReferenceGenerator`)
    enables KL/MMD checkpoints; without it checkpoints carry accuracy only.
    """
    return _run(prompts, stream, config or EpisodeConfig(), references)[0]


def _run(prompts, stream, config, references):
    C, d = prompts.n_classes, prompts.dim
    if stream.dim != d:
        raise ConfigurationError(f"stream dimension {stream.dim} != prompt dimension {d}")
    if stream.n_classes != C:
        raise ConfigurationError(f"stream declares {stream.n_classes} classes, prompts have {C}")
    if references is not None and len(references) != C:
        raise ConfigurationError(f"{len(references)} reference generators for {C} classes")

    text = build_textual_models(_prompt_sets(prompts), config.rel_eps, config.beta_inv2,
                                config.map_form, config.diagonal)
    flags = config.fusion_flags()
    text_g = textual_gaussians(text, flags.per_class_textual_cov, flags.rel_eps)
    prototypes = np.stack([m.empirical_mean for m in text])
    gcfg = config.geometric_config()
    states = [init_state(c, text[c], gcfg) for c in range(C)]
    geo_g = [predictive_gaussian(s, config.predictive_mode) for s in states]
    caches = new_caches(C, config.K)
    ccfg = config.cache_config()

    probe = _CheckpointProbe(references, d, config.mmd_samples, config.seed) if references else None

    def geo_diag_gaussians():
        # diagnostics always use the feature distribution implied by the state
        return [predictive_gaussian(s, "posterior_predictive") for s in states]

    def take_checkpoint(t):
        acc = n_correct / n_labeled if n_labeled else None
        if probe is None:
            return make_checkpoint(t, None, accuracy_so_far=acc)
        est = geo_diag_gaussians()
        return make_checkpoint(t, est, probe.ref_gaussians, probe.model_samples(est),
                               probe.ref_samples, acc)

    records = []
    checkpoints = []
    n_correct = 0
    n_labeled = 0
    per_class_total = np.zeros(C, dtype=np.int64)
    per_class_correct = np.zeros(C, dtype=np.int64)
    w_text = []
    w_geo = []
    n_updates = 0
    every = int(config.checkpoint_every)
    if every:
        checkpoints.append(take_checkpoint(0))

    x_all = np.asarray(stream.features, dtype=np.float64)
    labels = np.asarray(stream.labels)
    N = x_all.shape[0]
    for t in range(N):
        x = x_all[t]
        label = int(labels[t])
        w_t = w_g = None
        if config.method == "zeroshot":
            post = softmax(zero_shot_logits(x, prototypes))
            pred = int(np.argmax(post))
        elif config.method == "cache":
            scores = cache_score(x, prototypes, caches, ccfg)
            pred = int(np.argmax(scores))
            zs_post = softmax(zero_shot_logits(x, prototypes))
            post = softmax(scores)
            cache_update(caches, x, zs_post, ccfg, step=t)
        else:
            fp = fuse(x, text, states, flags, text_gaussians=text_g, geo_gaussians=geo_g)
            post = fp.fused_posterior
            pred = fp.predicted_class
            w_t, w_g = fp.textual_weight, fp.geometric_weight
            w_text.append(w_t)
            w_geo.append(w_g)
            if config.update_mode == "hard":
                if post[pred] >= config.tau:
                    states[pred] = update(states[pred], x)
                    geo_g[pred] = predictive_gaussian(states[pred], config.predictive_mode)
                    n_updates += 1
            else:
                for c in range(C):
                    states[c] = update(states[c], x, weight=float(post[c]))
                    geo_g[c] = predictive_gaussian(states[c], config.predictive_mode)
                n_updates += 1

        correct = None
        if label >= 0:
            correct = pred == label
            n_labeled += 1
            n_correct += int(correct)
            per_class_total[label] += 1
            per_class_correct[label] += int(correct)
        records.append({
            "step": t + 1,
            "label": label if label >= 0 else None,
            "predicted": pred,
            "confidence": float(post[pred]),
            "textual_weight": w_t,
            "geometric_weight": w_g,
        })
        if every and (t + 1) % every == 0:
            checkpoints.append(take_checkpoint(t + 1))
    if every and N % every != 0:
        checkpoints.append(take_checkpoint(N))

    per_class_acc = [
        (int(per_class_correct[c]) / int(per_class_total[c])) if per_class_total[c] else None
        for c in range(C)
    ]
    summary = {
        "n_samples": N,
        "n_labeled": n_labeled,
        "n_correct": n_correct,
        "accuracy": n_correct / n_labeled if n_labeled else None,
        "per_class_accuracy": per_class_acc,
        "mean_textual_weight": float(np.mean(w_text)) if w_text else None,
        "mean_geometric_weight": float(np.mean(w_geo)) if w_geo else None,
        "geometric_updates": n_updates,
        "update_counts": [s.update_count for s in states] if config.method == "bayesmm" else None,
    }
    log.debug("episode %s: accuracy %s", config.method, summary["accuracy"])
    report = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "kernel_backend": _kernels.active_backend(),
        "config": asdict(config),
        "stream": {"N": N, "d": d, "C": C, "normalized": stream.normalized, "n_prompts": prompts.n_prompts},
        "summary": summary,
        "checkpoints": [c.as_dict() for c in checkpoints],
        "records": records,
    }
    return report, states


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def report_to_json(report):
    """Serialize a report with a stable field order; ``inf`` is written as a string."""
    def fix(o):
        if isinstance(o, float) and not math.isfinite(o):
            return repr(o)
        if isinstance(o, dict):
            return {k: fix(v) for k, v in o.items()}
        if isinstance(o, list):
            return [fix(v) for v in o]
        return o
    return json.dumps(fix(report), indent=1, default=_json_default, allow_nan=False) + "\n"


def final_states(prompts, stream, config, references=None):
    """Geometric states after a bayesmm episode (for inspection and tests)."""
    return _run(prompts, stream, config.replace(method="bayesmm"), references)[1]
