"""
Tokenizer, text-conditioned denoiser and the checkpoint format.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .denoiser import (
    Denoiser,
    DenoiserConfig,
    Parameterization,
    build_denoiser,
    gradient,
    gradient_check,
    init_parameters,
    parameter_count,
    randomize_parameters,
)
from .tokenizer import TokenSequence, Vocabulary, tokenize

__all__ = [
    "Checkpoint",
    "Denoiser",
    "DenoiserConfig",
    "Parameterization",
    "TokenSequence",
    "Vocabulary",
    "build_denoiser",
    "gradient",
    "gradient_check",
    "init_parameters",
    "load_checkpoint",
    "parameter_count",
    "randomize_parameters",
    "save_checkpoint",
    "tokenize",
]
