"""
This module contains the text-conditioned U-Net noise predictor.

The network sees the noisy depth latent concatenated with the image latent,
a sinusoidal timestep embedding and the caption tokens. Captions enter
through one multi-head cross-attention layer at the bottleneck.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from einops import rearrange
from torch import nn

from langdepth.utils.errors import (
    ConfigurationError,
    NumericError,
    ShapeError,
)
from langdepth.utils.logger import logging as log

from .tokenizer import MAX_TOKENS, PAD_ID

SINUSOID_DIM = 64
INIT_STD = 0.02
IMAGE_CHANNELS = 3
DEPTH_CHANNELS = 1


class Parameterization(str, Enum):
    """What the network output means."""

    EPSILON = "epsilon"
    V = "v"


@dataclass(frozen=True)
class DenoiserConfig:
    """``denoiser`` config section."""

    patch_factor: int = 2
    base_width: int = 32
    level_widths: Tuple[int, ...] = (32, 64, 128)
    groups: int = 8
    token_dim: int = 64
    max_tokens: int = MAX_TOKENS
    heads: int = 2
    time_embed_dim: int = 128
    vocab_size: int = 64
    parameterization: str = "v"

    def __post_init__(self) -> None:
        try:
            Parameterization(self.parameterization)
        except ValueError as exc:
            raise ConfigurationError(
                f"Unknown parameterization: {self.parameterization}"
            ) from exc
        if not self.level_widths:
            raise ConfigurationError("level_widths must not be empty")
        for width in (self.base_width, *self.level_widths):
            if width < 1 or width % self.groups:
                raise ConfigurationError(
                    f"Width {width} is not divisible by {self.groups} groups"
                )
        if self.level_widths[-1] % self.heads:
            raise ConfigurationError(
                f"{self.heads} heads do not divide attention width "
                f"{self.level_widths[-1]}"
            )
        if min(self.patch_factor, self.token_dim, self.max_tokens) < 1:
            raise ConfigurationError("Denoiser sizes must be positive")

    @property
    def latent_channels(self) -> int:
        """Channels of the depth latent (and of the prediction)."""
        return DEPTH_CHANNELS * self.patch_factor**2

    @property
    def image_channels(self) -> int:
        """Channels of the image latent."""
        return IMAGE_CHANNELS * self.patch_factor**2

    @property
    def size_multiple(self) -> int:
        """Latent height and width must be multiples of this."""
        return 2 ** len(self.level_widths)

    def to_json(self) -> Dict[str, object]:
        """Plain-JSON form used in checkpoint headers."""
        return {
            "patch_factor": self.patch_factor,
            "base_width": self.base_width,
            "level_widths": list(self.level_widths),
            "groups": self.groups,
            "token_dim": self.token_dim,
            "max_tokens": self.max_tokens,
            "heads": self.heads,
            "time_embed_dim": self.time_embed_dim,
            "vocab_size": self.vocab_size,
            "parameterization": self.parameterization,
        }


def timestep_embedding(t: torch.Tensor, dtype: torch.dtype) -> torch.Tensor:
    """
    Sinusoidal embedding with frequencies ``10000^(-2k/64)``.

    Args:
        t: ``B`` integer timesteps.
        dtype: Output dtype.

    Returns:
        ``B x 64`` tensor, ``[sin | cos]``.
    """
    half = SINUSOID_DIM // 2
    k = torch.arange(half, dtype=torch.float64)
    freqs = torch.exp(-math.log(10000.0) * 2.0 * k / SINUSOID_DIM)
    angles = t.to(torch.float64)[:, None] * freqs[None, :]
    return torch.cat([angles.sin(), angles.cos()], dim=1).to(dtype)


class ConvBlock(nn.Module):
    """Two conv -> group-norm -> SiLU stages with a timestep bias."""

    def __init__(
        self, in_channels: int, out_channels: int, groups: int, temb: int
    ) -> None:
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.norm1 = nn.GroupNorm(groups, out_channels)
        self.time = nn.Linear(temb, out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.norm2 = nn.GroupNorm(groups, out_channels)

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.norm1(self.conv1(x))
        h = F.silu(h + self.time(F.silu(temb))[:, :, None, None])
        return F.silu(self.norm2(self.conv2(h)))


class CrossAttention(nn.Module):
    """
    Multi-head attention from spatial features to caption tokens.

    PAD keys are masked out. A caption that is entirely PAD contributes a
    zero update, so blank captions leave the features unchanged.
    """

    def __init__(self, width: int, token_dim: int, heads: int, groups: int):
        super().__init__()
        self.heads = heads
        self.norm = nn.GroupNorm(groups, width)
        self.query = nn.Linear(width, width, bias=False)
        self.key = nn.Linear(token_dim, width, bias=False)
        self.value = nn.Linear(token_dim, width, bias=False)
        self.out = nn.Linear(width, width)

    def forward(
        self, x: torch.Tensor, context: torch.Tensor, mask: torch.Tensor
    ) -> torch.Tensor:
        """
        Args:
            x: ``B x C x H x W`` features.
            context: ``B x L x D`` token embeddings.
            mask: ``B x L`` boolean, True on real tokens.

        Returns:
            ``x`` plus the attended update.
        """
        height, width = x.shape[-2:]
        h = rearrange(self.norm(x), "b c y x -> b (y x) c")
        q = rearrange(self.query(h), "b n (h d) -> b h n d", h=self.heads)
        k = rearrange(self.key(context), "b l (h d) -> b h l d", h=self.heads)
        v = rearrange(
            self.value(context), "b l (h d) -> b h l d", h=self.heads
        )
        scores = torch.einsum("bhnd,bhld->bhnl", q, k) / math.sqrt(
            q.shape[-1]
        )
        scores = scores.masked_fill(
            ~mask[:, None, None, :], torch.finfo(scores.dtype).min
        )
        attended = torch.einsum("bhnl,bhld->bhnd", scores.softmax(-1), v)
        update = self.out(rearrange(attended, "b h n d -> b n (h d)"))
        has_tokens = mask.any(dim=1).to(update.dtype)[:, None, None]
        update = rearrange(
            update * has_tokens, "b (y x) c -> b c y x", y=height, x=width
        )
        return x + update


class Denoiser(nn.Module):
    """
    Small U-Net predicting epsilon or v for the depth latent.

    Layout (NCHW): stem conv on ``[z_t | x_latent]``, one ConvBlock per
    level followed by 2x average pooling, a bottleneck ConvBlock with
    cross-attention, then per level nearest 2x upsampling, skip
    concatenation and a ConvBlock, and a zero-initialized output conv.
    """

    def __init__(self, config: DenoiserConfig, num_timesteps: int) -> None:
        """
        Initialize the network with PyTorch's default weights.

        Call :func:`init_parameters` (or use :func:`build_denoiser`) for
        the seeded initialization.

        Args:
            config: Architecture.
            num_timesteps: T of the schedule the model is trained with.
        """
        super().__init__()
        self.config = config
        self.num_timesteps = num_timesteps
        temb = config.time_embed_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(SINUSOID_DIM, temb), nn.SiLU(), nn.Linear(temb, temb)
        )
        self.token_embedding = nn.Embedding(
            config.vocab_size, config.token_dim
        )
        self.stem = nn.Conv2d(
            config.latent_channels + config.image_channels,
            config.base_width,
            3,
            padding=1,
        )
        self.down = nn.ModuleList()
        current = config.base_width
        for width in config.level_widths:
            self.down.append(ConvBlock(current, width, config.groups, temb))
            current = width
        self.mid = ConvBlock(current, current, config.groups, temb)
        self.attention = CrossAttention(
            current, config.token_dim, config.heads, config.groups
        )
        self.up = nn.ModuleList()
        for width in reversed(config.level_widths):
            self.up.append(
                ConvBlock(current + width, width, config.groups, temb)
            )
            current = width
        self.head = nn.Conv2d(current, config.latent_channels, 3, padding=1)

    @property
    def parameterization(self) -> Parameterization:
        """Meaning of the output."""
        return Parameterization(self.config.parameterization)

    @property
    def dtype(self) -> torch.dtype:
        """Floating point type of the parameters."""
        return self.head.weight.dtype

    @property
    def max_tokens(self) -> int:
        """Token sequence length the network expects."""
        return self.config.max_tokens

    def _check_inputs(
        self,
        z_t: torch.Tensor,
        x_latent: torch.Tensor,
        t: torch.Tensor,
        tokens: torch.Tensor,
    ) -> None:
        config = self.config
        if z_t.ndim != 4 or z_t.shape[1] != config.latent_channels:
            raise ShapeError(f"Bad depth latent shape {tuple(z_t.shape)}")
        if (
            x_latent.ndim != 4
            or x_latent.shape[1] != config.image_channels
            or x_latent.shape[0] != z_t.shape[0]
            or x_latent.shape[2:] != z_t.shape[2:]
        ):
            raise ShapeError(
                f"Image latent {tuple(x_latent.shape)} does not align with "
                f"depth latent {tuple(z_t.shape)}"
            )
        if any(size % config.size_multiple for size in z_t.shape[2:]):
            raise ShapeError(
                f"Latent size {tuple(z_t.shape[2:])} is not a multiple of "
                f"{config.size_multiple}"
            )
        if tokens.shape != (z_t.shape[0], config.max_tokens):
            raise ShapeError(f"Bad token batch shape {tuple(tokens.shape)}")
        if t.shape != (z_t.shape[0],):
            raise ShapeError(f"Bad timestep batch shape {tuple(t.shape)}")
        if bool((t < 1).any()) or bool((t > self.num_timesteps).any()):
            raise ConfigurationError(
                f"Timesteps outside 1..{self.num_timesteps}: {t.tolist()}"
            )

    def forward(
        self,
        z_t: torch.Tensor,
        x_latent: torch.Tensor,
        t: Union[int, torch.Tensor],
        tokens: torch.Tensor,
    ) -> torch.Tensor:
        """
        Predict the configured target.

        Args:
            z_t: ``B x f^2 x H' x W'`` noisy depth latent.
            x_latent: ``B x 3f^2 x H' x W'`` image latent.
            t: Timestep, shared or one per batch element.
            tokens: ``B x max_tokens`` token ids.

        Returns:
            Prediction shaped like ``z_t``.
        """
        if not isinstance(t, torch.Tensor) or t.ndim == 0:
            t = torch.full((z_t.shape[0],), int(t), dtype=torch.long)
        self._check_inputs(z_t, x_latent, t, tokens)
        temb = self.time_mlp(timestep_embedding(t, z_t.dtype))
        context = self.token_embedding(tokens)
        mask = tokens != PAD_ID

        h = self.stem(torch.cat([z_t, x_latent], dim=1))
        skips: List[torch.Tensor] = []
        for block in self.down:
            h = block(h, temb)
            skips.append(h)
            h = F.avg_pool2d(h, 2)
        h = self.attention(self.mid(h, temb), context, mask)
        for block in self.up:
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = block(torch.cat([h, skips.pop()], dim=1), temb)
        return self.head(h)


def _truncated_normal_(tensor: torch.Tensor, gen: torch.Generator) -> None:
    nn.init.trunc_normal_(
        tensor,
        mean=0.0,
        std=INIT_STD,
        a=-2 * INIT_STD,
        b=2 * INIT_STD,
        generator=gen,
    )


@torch.no_grad()
def init_parameters(model: Denoiser, rng: np.random.Generator) -> Denoiser:
    """
    Seeded initialization, in place.

    Conv, linear and attention weights are normal(0, 0.02^2) truncated at
    two standard deviations; the token table is normal(0, 0.02^2); group
    norms start at scale 1, shift 0; biases and the output conv are zero.

    Args:
        model: The network.
        rng: Random stream; equal streams give bit-identical weights.

    Returns:
        The same model.
    """
    gen = torch.Generator().manual_seed(int(rng.integers(0, 2**63 - 1)))
    for module in model.modules():
        if isinstance(module, (nn.Conv2d, nn.Linear)):
            _truncated_normal_(module.weight, gen)
            if module.bias is not None:
                module.bias.zero_()
        elif isinstance(module, nn.GroupNorm):
            module.weight.fill_(1.0)
            module.bias.zero_()
        elif isinstance(module, nn.Embedding):
            module.weight.normal_(0.0, INIT_STD, generator=gen)
    model.head.weight.zero_()
    model.head.bias.zero_()
    return model


def build_denoiser(
    config: DenoiserConfig,
    num_timesteps: int,
    rng: np.random.Generator,
    dtype: torch.dtype = torch.float32,
) -> Denoiser:
    """Construct and seed-initialize a denoiser."""
    model = init_parameters(Denoiser(config, num_timesteps), rng).to(dtype)
    log.debug(
        "[denoiser] Built %d parameters (%s)",
        parameter_count(model),
        config.parameterization,
    )
    return model


@torch.no_grad()
def randomize_parameters(
    model: Denoiser, rng: np.random.Generator, scale: float = 0.5
) -> Denoiser:
    """
    Overwrite every parameter with normal(0, scale^2) draws.

    Used to exercise gradient paths the zero output conv would block.
    """
    gen = torch.Generator().manual_seed(int(rng.integers(0, 2**63 - 1)))
    for param in model.parameters():
        draw = torch.randn(param.shape, generator=gen, dtype=torch.float64)
        param.copy_((draw * scale).to(param.dtype))
    return model


def parameter_count(model: nn.Module) -> int:
    """Total number of scalar parameters."""
    return sum(p.numel() for p in model.parameters())


def gradient(
    model: nn.Module, loss_fn: Callable[[], torch.Tensor]
) -> Dict[str, torch.Tensor]:
    """
    Reverse-mode gradients of a scalar loss.

    Args:
        model: Module whose named parameters are differentiated.
        loss_fn: Closure building the scalar loss from ``model``.

    Returns:
        Gradient per parameter name, same shapes as the parameters;
        parameters the loss does not depend on get zeros.
    """
    names, params = zip(*model.named_parameters())
    loss = loss_fn()
    if loss.ndim != 0:
        raise ShapeError(f"Loss must be a scalar, got {tuple(loss.shape)}")
    if not bool(torch.isfinite(loss)):
        raise NumericError("Loss is not finite", tensor="loss")
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    result: Dict[str, torch.Tensor] = {}
    for name, param, grad in zip(names, params, grads):
        if grad is None:
            grad = torch.zeros_like(param)
        if not bool(torch.isfinite(grad).all()):
            raise NumericError("Non-finite gradient", tensor=name)
        result[name] = grad
    return result


def gradient_check(
    model: Denoiser,
    z_t: torch.Tensor,
    x_latent: torch.Tensor,
    t: Union[int, torch.Tensor],
    tokens: torch.Tensor,
    eps: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-5,
) -> Dict[str, bool]:
    """
    Compare reverse-mode and central-difference gradients.

    The loss is ``sum(output ** 2)``; each parameter tensor is checked on
    its own with :func:`torch.autograd.gradcheck`.

    Args:
        model: A float64 denoiser.
        z_t: Noisy depth latent.
        x_latent: Image latent.
        t: Timestep(s).
        tokens: Token ids.
        eps: Finite-difference step.
        rtol: Relative tolerance.
        atol: Absolute tolerance.

    Returns:
        Pass flag per parameter name.
    """
    if model.dtype != torch.float64:
        raise ConfigurationError("Gradient checks need a float64 model")
    inputs = (z_t, x_latent, t, tokens)
    results: Dict[str, bool] = {}
    for name, param in model.named_parameters():

        def loss(probe: torch.Tensor, name: str = name) -> torch.Tensor:
            out = torch.func.functional_call(model, {name: probe}, inputs)
            return (out**2).sum()

        probe = param.detach().clone().requires_grad_(True)
        results[name] = bool(
            torch.autograd.gradcheck(
                loss,
                (probe,),
                eps=eps,
                atol=atol,
                rtol=rtol,
                raise_exception=False,
            )
        )
        if not results[name]:
            log.warning("[denoiser] Gradient check failed for %s", name)
    return results
