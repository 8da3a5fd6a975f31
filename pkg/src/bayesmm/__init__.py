"""Training-free test-time adaptation by evidence-weighted fusion of a textual
Gaussian prior and streaming geometric class posteriors."""
from ._kernels import active_backend
from .episode import EpisodeConfig, run_episode
from .errors import (BadMagicError, BayesMMError, ConfigurationError, FileFormatError,
                     InvalidInputError, LabelRangeError, TruncatedFileError, UnsupportedVersionError)
from .fusion import FusionFlags, fuse, gda_posterior, modality_weights
from .gaussian import GaussianModel, gaussian_kl, log_density, log_sum_exp
from .geometric import GeometricConfig, init_state, predictive_gaussian, update
from .io import read_prompts, read_stream, write_prompts, write_stream
from .synth import Corruption, SynthSpec, synth_generate
from .textual import PromptEmbeddingSet, build_textual_models, empirical_stats, map_prototype

__version__ = "0.1.0"

__all__ = [
    "active_backend", "EpisodeConfig", "run_episode",
    "BadMagicError", "BayesMMError", "ConfigurationError", "FileFormatError", "InvalidInputError",
    "LabelRangeError", "TruncatedFileError", "UnsupportedVersionError",
    "FusionFlags", "fuse", "gda_posterior", "modality_weights",
    "GaussianModel", "gaussian_kl", "log_density", "log_sum_exp",
    "GeometricConfig", "init_state", "predictive_gaussian", "update",
    "read_prompts", "read_stream", "write_prompts", "write_stream",
    "Corruption", "SynthSpec", "synth_generate",
    "PromptEmbeddingSet", "build_textual_models", "empirical_stats", "map_prototype",
]
