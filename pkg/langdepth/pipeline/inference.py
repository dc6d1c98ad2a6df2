"""
This module contains caption resolution and the DDIM inference loop that
turns an image (and a caption) into a normalized relative depth map.
"""

from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np
import torch

from langdepth.diffusion.codec import (
    depth_to_model,
    image_to_model,
    model_to_depth,
)
from langdepth.diffusion.schedule import (
    NoiseSchedule,
    ddim_step,
    eps_from_v,
    make_ddim_subsequence,
)
from langdepth.metrics.depth import DepthMap, Space
from langdepth.models.denoiser import Parameterization
from langdepth.models.tokenizer import (
    Vocabulary,
    default_vocabulary,
    tokenize,
)
from langdepth.scenes.captions import prompt_template
from langdepth.utils.errors import ConfigurationError, NumericError
from langdepth.utils.logger import logging as log
from langdepth.utils.rng import derive_rng, standard_normal

PROVIDED = "provided"
DATASET = "dataset"
BLANK = "blank"
TEMPLATE_PREFIX = "template:"


class NoisePredictor(Protocol):
    """
    Anything that predicts epsilon or v for a noisy depth latent.
    """

    @property
    def parameterization(self) -> Parameterization:
        """Meaning of the output."""
        ...

    @property
    def dtype(self) -> torch.dtype:
        """Floating point type the predictor computes in."""
        ...

    @property
    def max_tokens(self) -> int:
        """Token sequence length."""
        ...

    def __call__(
        self,
        z_t: torch.Tensor,
        x_latent: torch.Tensor,
        t: int,
        tokens: torch.Tensor,
    ) -> torch.Tensor:
        """
        Predict the target for ``z_t``.

        Args:
            z_t: Noisy depth latent, ``B x f^2 x H' x W'``.
            x_latent: Image latent, ``B x 3f^2 x H' x W'``.
            t: Timestep.
            tokens: ``B x max_tokens`` ids.
        """
        ...


@dataclass(frozen=True)
class InferenceConfig:
    """``inference`` config section."""

    checkpoint: Optional[str] = None
    steps: int = 50
    seed: int = 0
    caption_mode: str = DATASET
    caption: str = ""

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1: {self.steps}")
        mode = self.caption_mode
        if mode.startswith(TEMPLATE_PREFIX):
            prompt_template(mode[len(TEMPLATE_PREFIX) :])
        elif mode not in (PROVIDED, DATASET, BLANK):
            raise ConfigurationError(f"Unknown caption mode: {mode}")

    def resolve_caption(self, dataset_caption: str = "") -> str:
        """
        The caption used for one image.

        Args:
            dataset_caption: The image's own caption.

        Returns:
            ``caption`` for ``provided``, the dataset caption for
            ``dataset``, the empty string for ``blank`` and the verbatim
            prompt for ``template:<name>``.
        """
        mode = self.caption_mode
        if mode == PROVIDED:
            return self.caption
        if mode == DATASET:
            return dataset_caption
        if mode == BLANK:
            return ""
        return prompt_template(mode[len(TEMPLATE_PREFIX) :])


def initial_noise(
    seed: int,
    image_id: str,
    height: int,
    width: int,
    dtype: torch.dtype,
) -> torch.Tensor:
    """
    z_T for one image, drawn from the stream ``(seed, "infer", image_id)``.

    The stream does not depend on the caption, so every caption mode of
    an image starts from the same noise.
    """
    rng = derive_rng(seed, "infer", image_id)
    raster = standard_normal(rng, (1, height, width), torch.float64)
    return depth_to_model(raster.numpy(), dtype)


@torch.no_grad()
def infer(
    image: np.ndarray,
    caption: str,
    model: NoisePredictor,
    schedule: NoiseSchedule,
    steps: int = 50,
    seed: int = 0,
    image_id: str = "image",
    vocabulary: Optional[Vocabulary] = None,
) -> DepthMap:
    """
    Sample a normalized relative depth map for one image.

    Args:
        image: ``H x W x 3`` float image in [0, 1].
        caption: Caption text (may be empty).
        model: Noise predictor.
        schedule: The schedule the model was trained with.
        steps: DDIM sampling steps S.
        seed: Master seed of the initial noise.
        image_id: Key of the initial-noise stream.
        vocabulary: Token table; the shipped one when None.

    Returns:
        Normalized depth (every pixel valid).
    """
    vocabulary = vocabulary or default_vocabulary()
    height, width = image.shape[:2]
    dtype = model.dtype
    x_latent = image_to_model(image[None], dtype)
    tokens = torch.tensor(
        [tokenize(caption, vocabulary, model.max_tokens).ids],
        dtype=torch.long,
    )
    z = initial_noise(seed, image_id, height, width, dtype)
    grid = make_ddim_subsequence(schedule.num_timesteps, steps)
    for index, (t, t_prev) in enumerate(grid.pairs()):
        prediction = model(z, x_latent, t, tokens)
        if model.parameterization is Parameterization.V:
            eps_hat = eps_from_v(prediction, z, t, schedule)
        else:
            eps_hat = prediction
        z = ddim_step(z, eps_hat, t, t_prev, schedule)
        if not bool(torch.isfinite(z).all()):
            raise NumericError(
                f"Sampling trajectory of {image_id} is not finite", step=index
            )
    log.debug("[inference] %s sampled in %d steps", image_id, len(grid))
    values = model_to_depth(z)[0]
    mask = np.ones(values.shape, dtype=bool)
    return DepthMap(values, mask, Space.NORMALIZED)
