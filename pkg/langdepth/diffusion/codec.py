"""
This module contains the latent codec: a fixed space-to-depth rearrangement
between pixel rasters and the lower-resolution, higher-channel latent space
the diffusion process runs in.

For patch factor f, ``latent[i, j, c*f*f + a*f + b] = raster[i*f + a,
j*f + b, c]``. The map is a permutation, so it is linear, orthogonal and
exactly invertible.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
import torch
from einops import rearrange

from langdepth.utils.errors import NumericError, ShapeError

Array = Union[np.ndarray, torch.Tensor]

DEFAULT_FACTOR = 2


class Provenance(str, Enum):
    """What a latent was made from."""

    IMAGE = "image-latent"
    DEPTH = "depth-latent"
    NOISE = "noise"


@dataclass(frozen=True)
class LatentTensor:
    """Channel-last latent array (``... x H' x W' x C'``)."""

    data: Array
    provenance: Provenance
    factor: int = DEFAULT_FACTOR

    @property
    def channels(self) -> int:
        """Latent channel count C'."""
        return int(self.data.shape[-1])

    @property
    def raster_channels(self) -> int:
        """Channel count C of the raster this latent decodes to."""
        return self.channels // (self.factor * self.factor)


def _all_finite(data: Array) -> bool:
    if isinstance(data, torch.Tensor):
        return bool(torch.isfinite(data).all())
    return bool(np.isfinite(data).all())


def encode(
    raster: Array,
    provenance: Provenance = Provenance.DEPTH,
    factor: int = DEFAULT_FACTOR,
) -> LatentTensor:
    """
    Rearrange a raster into a latent.

    Args:
        raster: ``... x H x W x C`` array or tensor; a plain ``H x W`` array
            is treated as single channel.
        provenance: Tag stored on the result.
        factor: Patch factor f.

    Returns:
        ``... x H/f x W/f x C*f*f`` latent.
    """
    if raster.ndim == 2:
        raster = raster[:, :, None]
    if raster.ndim < 3:
        raise ShapeError(f"Cannot encode a raster of shape {raster.shape}")
    height, width = raster.shape[-3], raster.shape[-2]
    if height % factor or width % factor:
        raise ShapeError(
            f"Raster {height}x{width} is not divisible by factor {factor}"
        )
    if not _all_finite(raster):
        raise NumericError("Cannot encode a raster with non-finite values")
    data = rearrange(
        raster, "... (h a) (w b) c -> ... h w (c a b)", a=factor, b=factor
    )
    return LatentTensor(data=data, provenance=provenance, factor=factor)


def decode(
    latent: Union[LatentTensor, Array],
    factor: int = DEFAULT_FACTOR,
    channels: Optional[int] = None,
) -> Array:
    """
    Exact inverse of :func:`encode`.

    Args:
        latent: A LatentTensor or a raw ``... x H' x W' x C'`` array.
        factor: Patch factor, ignored for LatentTensor inputs.
        channels: Expected raster channel count C, if known.

    Returns:
        ``... x H'f x W'f x C`` raster.
    """
    if isinstance(latent, LatentTensor):
        factor = latent.factor
        data = latent.data
    else:
        data = latent
    if data.ndim < 3:
        raise ShapeError(f"Cannot decode a latent of shape {data.shape}")
    depth = data.shape[-1]
    if depth % (factor * factor):
        raise ShapeError(
            f"Latent channel count {depth} is not a multiple of {factor}^2"
        )
    if channels is not None and depth != channels * factor * factor:
        raise ShapeError(
            f"Latent has {depth} channels, expected {channels * factor**2}"
        )
    return rearrange(
        data, "... h w (c a b) -> ... (h a) (w b) c", a=factor, b=factor
    )


def to_model_layout(latent: torch.Tensor) -> torch.Tensor:
    """``B x H x W x C`` latent to the network's ``B x C x H x W``."""
    return rearrange(latent, "b h w c -> b c h w")


def from_model_layout(tensor: torch.Tensor) -> torch.Tensor:
    """``B x C x H x W`` network tensor back to channel-last."""
    return rearrange(tensor, "b c h w -> b h w c")


def image_to_model(
    images: np.ndarray, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """
    ``B x H x W x 3`` images in [0, 1] to a ``B x 3f^2 x H/f x W/f`` batch.

    Pixel values are rescaled to [-1, 1] before encoding.
    """
    batch = torch.from_numpy(np.ascontiguousarray(images)).to(dtype)
    latent = encode(batch * 2.0 - 1.0, Provenance.IMAGE)
    return to_model_layout(latent.data)


def depth_to_model(
    depths: np.ndarray, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """``B x H x W`` normalized depths to a ``B x f^2 x H/f x W/f`` batch."""
    batch = torch.from_numpy(np.ascontiguousarray(depths)).to(dtype)
    latent = encode(batch[..., None], Provenance.DEPTH)
    return to_model_layout(latent.data)


def model_to_depth(latent: torch.Tensor) -> np.ndarray:
    """Inverse of :func:`depth_to_model`, as a float64 numpy array."""
    raster = decode(from_model_layout(latent), channels=1)
    return raster[..., 0].detach().to(torch.float64).numpy()
