"""
This module provides pytest fixtures and configuration.
"""

import sys
from pathlib import Path
from typing import Any, Dict, List, Sequence, Type

import pytest
import torch
import yaml

# Add the project root directory to Python path
PROJECT_ROOT = str(Path(__file__).parent.parent)
sys.path.insert(0, PROJECT_ROOT)

from langdepth.diffusion.codec import depth_to_model, image_to_model  # noqa
from langdepth.diffusion.schedule import (  # noqa: E402
    NoiseSchedule,
    ScheduleConfig,
)
from langdepth.models.denoiser import (  # noqa: E402
    DenoiserConfig,
    Parameterization,
)
from langdepth.models.tokenizer import default_vocabulary, tokenize  # noqa
from langdepth.scenes.generator import generate_samples  # noqa: E402
from langdepth.scenes.types import GeneratorConfig, Sample  # noqa: E402
from langdepth.training.trainer import TrainConfig  # noqa: E402

TINY_DENOISER = DenoiserConfig(
    patch_factor=2,
    base_width=4,
    level_widths=(4, 8),
    groups=2,
    token_dim=8,
    max_tokens=4,
    heads=2,
    time_embed_dim=16,
    vocab_size=64,
)


@pytest.fixture
def config_dir(tmp_path: Path) -> Path:
    """
    Create a temporary config directory.

    Args:
        tmp_path: Pytest's temporary directory fixture.

    Returns:
        Path to the temporary config directory.
    """
    config_dir = tmp_path / "config"
    config_dir.mkdir()
    return config_dir


@pytest.fixture
def config_data(tmp_path: Path) -> Dict[str, Any]:
    """
    A small but complete configuration.

    Args:
        tmp_path: Pytest's temporary directory fixture.

    Returns:
        The configuration mapping.
    """
    return {
        "logging": {
            "level": "DEBUG",
            "format": "%(asctime)s - %(levelname)s - %(message)s",
            "file": {
                "enabled": True,
                "path": str(tmp_path / "logs" / "test.log"),
                "max_size": 1048576,  # 1MB
                "backup_count": 2,
                "format": "json",
            },
        },
        "generator": {"image_height": 16, "image_width": 16},
        "dataset": {"seed": 3, "scenes": 3, "pairs": 2},
        "schedule": {"num_timesteps": 20},
        "denoiser": {
            "base_width": 4,
            "level_widths": [4, 8],
            "groups": 2,
            "token_dim": 8,
            "max_tokens": 4,
            "time_embed_dim": 16,
        },
        "train": {
            "iterations": 2,
            "micro_batch": 1,
            "accumulation": 2,
            "warmup_steps": 1,
            "decay_horizon": 10,
            "checkpoint_interval": 1,
        },
        "inference": {"steps": 3},
    }


@pytest.fixture
def config_file(config_dir: Path, config_data: Dict[str, Any]) -> Path:
    """
    Create a temporary config file.

    Args:
        config_dir: Path to the config directory.
        config_data: The configuration to write.

    Returns:
        Path to the temporary config file.
    """
    config_file = config_dir / "config.yml"
    with open(config_file, "w") as f:
        yaml.dump(config_data, f)

    return config_file


@pytest.fixture
def tiny_denoiser() -> DenoiserConfig:
    """Denoiser small enough for finite-difference checks."""
    return TINY_DENOISER


@pytest.fixture
def short_schedule() -> ScheduleConfig:
    """A 20-step schedule."""
    return ScheduleConfig(num_timesteps=20)


@pytest.fixture
def small_generator() -> GeneratorConfig:
    """16x16 scenes."""
    return GeneratorConfig(image_height=16, image_width=16)


@pytest.fixture
def small_samples(small_generator: GeneratorConfig) -> List[Sample]:
    """Three scenes followed by two ambiguity pairs."""
    generated = generate_samples(small_generator, 3, 2, seed=3)
    return [g.sample for g in generated]


@pytest.fixture
def fast_train() -> TrainConfig:
    """A few float64 iterations on single-sample micro-batches."""
    return TrainConfig(
        iterations=4,
        micro_batch=1,
        accumulation=2,
        warmup_steps=1,
        decay_horizon=10,
        lr0=1e-3,
        checkpoint_interval=2,
        dtype="float64",
    )


class CaptionOracle:
    """
    Noise predictor that knows every sample's ground truth.

    Predictions are keyed by image and caption tokens, so the two members
    of an ambiguity pair are told apart by their captions. Unknown inputs
    get a zero prediction. The recovered depth is an affine copy of the
    metric ground truth.
    """

    parameterization = Parameterization.EPSILON
    dtype = torch.float64
    # long enough to reach the near/far words of an ambiguity caption
    max_tokens = 12

    def __init__(
        self, samples: Sequence[Sample], schedule: NoiseSchedule
    ) -> None:
        self.schedule = schedule
        self.targets: Dict[bytes, torch.Tensor] = {}
        vocabulary = default_vocabulary()
        for sample in samples:
            x_latent = image_to_model(sample.image[None], self.dtype)
            ids = tokenize(sample.caption, vocabulary, self.max_tokens).ids
            tokens = torch.tensor([ids], dtype=torch.long)
            relative = sample.depth[None] / sample.far_plane * 2.0 - 1.0
            self.targets[self._key(x_latent, tokens)] = depth_to_model(
                relative, self.dtype
            )

    @staticmethod
    def _key(x_latent: torch.Tensor, tokens: torch.Tensor) -> bytes:
        return x_latent.numpy().tobytes() + tokens.numpy().tobytes()

    def __call__(
        self,
        z_t: torch.Tensor,
        x_latent: torch.Tensor,
        t: int,
        tokens: torch.Tensor,
    ) -> torch.Tensor:
        z0 = self.targets.get(self._key(x_latent, tokens))
        if z0 is None:
            return torch.zeros_like(z_t)
        alpha_bar = self.schedule.alpha_bar(int(t))
        return (z_t - alpha_bar**0.5 * z0) / (1.0 - alpha_bar) ** 0.5


@pytest.fixture
def caption_oracle() -> Type[CaptionOracle]:
    """The oracle predictor class."""
    return CaptionOracle
