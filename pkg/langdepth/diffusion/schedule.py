"""
This module contains the noise schedules and the diffusion-process math:
forward marginals, epsilon/v/x0 conversions, the deterministic DDPM reverse
transition and the eta = 0 DDIM sampler.

Tables are float64; coefficients are cast to the dtype of the tensor they
multiply. Timesteps are 1-based; alpha_bar(0) is defined as 1.
"""

import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Tuple, Union

import torch

from langdepth.utils.errors import (
    ConfigurationError,
    OrderingError,
    ShapeError,
)

Timestep = Union[int, torch.Tensor]


class ScheduleKind(str, Enum):
    """How beta is spaced between its endpoints."""

    LINEAR = "linear"
    SCALED_LINEAR = "scaled-linear"


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable beta / alpha / alpha-bar tables for steps 1..T."""

    kind: ScheduleKind
    betas: torch.Tensor
    alphas: torch.Tensor
    alpha_bars: torch.Tensor

    @property
    def num_timesteps(self) -> int:
        """T."""
        return int(self.betas.shape[0])

    @classmethod
    def from_betas(
        cls, betas: torch.Tensor, kind: ScheduleKind = ScheduleKind.LINEAR
    ) -> "NoiseSchedule":
        """
        Build the tables from an explicit beta sequence.

        Args:
            betas: beta_1..beta_T, each in [0, 1).
            kind: Recorded spacing kind.

        Returns:
            The schedule.
        """
        betas = torch.as_tensor(betas, dtype=torch.float64).reshape(-1)
        if betas.numel() < 1:
            raise ConfigurationError("A schedule needs at least one step")
        if bool((betas < 0).any()) or bool((betas >= 1).any()):
            raise ConfigurationError("Every beta must lie in [0, 1)")
        alphas = 1.0 - betas
        return cls(
            kind=kind,
            betas=betas,
            alphas=alphas,
            alpha_bars=torch.cumprod(alphas, dim=0),
        )

    def alpha_bar(self, t: int) -> float:
        """alpha_bar(t) for t in 0..T."""
        if not 0 <= t <= self.num_timesteps:
            raise ConfigurationError(f"Timestep {t} outside 0..T")
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def to_csv(self) -> str:
        """``t,beta,alpha,alpha_bar`` rows with 17 significant digits."""
        out = io.StringIO()
        out.write("t,beta,alpha,alpha_bar\n")
        for t in range(1, self.num_timesteps + 1):
            values = (
                float(self.betas[t - 1]),
                float(self.alphas[t - 1]),
                float(self.alpha_bars[t - 1]),
            )
            out.write(f"{t}," + ",".join(f"{v:.17g}" for v in values) + "\n")
        return out.getvalue()


def make_schedule(
    num_timesteps: int,
    kind: Union[str, ScheduleKind] = ScheduleKind.SCALED_LINEAR,
    beta_start: float = 8.5e-4,
    beta_end: float = 1.2e-2,
) -> NoiseSchedule:
    """
    Build a schedule.

    ``linear`` spaces beta evenly; ``scaled-linear`` spaces sqrt(beta)
    evenly. alpha_bar is the running product of 1 - beta.

    Args:
        num_timesteps: T >= 1.
        kind: Spacing kind.
        beta_start: First beta, in (0, beta_end].
        beta_end: Last beta, below 1.

    Returns:
        The schedule.
    """
    try:
        kind = ScheduleKind(kind)
    except ValueError as exc:
        raise ConfigurationError(f"Unknown schedule kind: {kind}") from exc
    if num_timesteps < 1:
        raise ConfigurationError(f"T must be >= 1, got {num_timesteps}")
    if not 0 < beta_start <= beta_end < 1:
        raise ConfigurationError(
            f"Need 0 < beta_start <= beta_end < 1, got {beta_start}, "
            f"{beta_end}"
        )
    if kind is ScheduleKind.LINEAR:
        betas = torch.linspace(
            beta_start, beta_end, num_timesteps, dtype=torch.float64
        )
    else:
        betas = (
            torch.linspace(
                beta_start**0.5,
                beta_end**0.5,
                num_timesteps,
                dtype=torch.float64,
            )
            ** 2
        )
    return NoiseSchedule.from_betas(betas, kind)


@dataclass(frozen=True)
class ScheduleConfig:
    """``schedule`` config section."""

    num_timesteps: int = 200
    kind: str = "scaled-linear"
    beta_start: float = 8.5e-4
    beta_end: float = 1.2e-2
    scale_with_steps: bool = True

    def build(self) -> NoiseSchedule:
        """
        Make the configured schedule.

        With ``scale_with_steps`` both endpoints are multiplied by
        ``1000 / T`` so short schedules still end close to pure noise. The
        scaled ``beta_end`` must stay below 1, so T must exceed
        ``1000 * beta_end`` (12 with the default endpoints).
        """
        scale = 1000.0 / self.num_timesteps if self.scale_with_steps else 1.0
        if self.num_timesteps >= 1 and self.beta_end * scale >= 1:
            shortest = math.floor(1000.0 * self.beta_end) + 1
            raise ConfigurationError(
                f"scale_with_steps pushes beta_end to "
                f"{self.beta_end * scale:.3g} at T={self.num_timesteps}; "
                f"use T >= {shortest} or disable scale_with_steps"
            )
        return make_schedule(
            self.num_timesteps,
            self.kind,
            self.beta_start * scale,
            self.beta_end * scale,
        )


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"Shape mismatch: {tuple(a.shape)} vs {b.shape}")


def _coefficient(
    table: torch.Tensor,
    t: Timestep,
    like: torch.Tensor,
    schedule: NoiseSchedule,
    allow_zero: bool = False,
    zero_value: float = 1.0,
) -> torch.Tensor:
    """
    Look ``table[t - 1]`` up and shape it to broadcast against ``like``.

    ``t`` is an int or a 1-D batch of timesteps matching ``like``'s first
    dimension; with ``allow_zero`` step 0 maps to ``zero_value``.
    """
    low = 0 if allow_zero else 1
    padded = torch.cat(
        [torch.tensor([zero_value], dtype=torch.float64), table]
    )
    if isinstance(t, torch.Tensor) and t.ndim > 0:
        steps = t.to(torch.long)
        if bool((steps < low).any()) or bool(
            (steps > schedule.num_timesteps).any()
        ):
            raise ConfigurationError(
                f"Timesteps outside {low}..{schedule.num_timesteps}"
            )
        values = padded[steps]
        return values.reshape(-1, *([1] * (like.ndim - 1))).to(like.dtype)
    step = int(t)
    if not low <= step <= schedule.num_timesteps:
        raise ConfigurationError(
            f"Timestep {step} outside {low}..{schedule.num_timesteps}"
        )
    return padded[step].to(like.dtype)


def _signal_and_noise(
    t: Timestep,
    like: torch.Tensor,
    schedule: NoiseSchedule,
    allow_zero: bool = False,
) -> Tuple[torch.Tensor, torch.Tensor]:
    alpha_bar = _coefficient(
        schedule.alpha_bars, t, like, schedule, allow_zero
    )
    return alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt()


def marginal_sample(
    z0: torch.Tensor,
    t: Timestep,
    eps: torch.Tensor,
    schedule: NoiseSchedule,
) -> torch.Tensor:
    """z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps."""
    _check_same_shape(z0, eps)
    signal, noise = _signal_and_noise(t, z0, schedule)
    return signal * z0 + noise * eps


def v_target(
    z0: torch.Tensor,
    eps: torch.Tensor,
    t: Timestep,
    schedule: NoiseSchedule,
) -> torch.Tensor:
    """v = sqrt(alpha_bar_t) eps - sqrt(1 - alpha_bar_t) z0."""
    _check_same_shape(z0, eps)
    signal, noise = _signal_and_noise(t, z0, schedule)
    return signal * eps - noise * z0


def eps_from_v(
    v: torch.Tensor,
    z_t: torch.Tensor,
    t: Timestep,
    schedule: NoiseSchedule,
) -> torch.Tensor:
    """eps = sqrt(alpha_bar_t) v + sqrt(1 - alpha_bar_t) z_t."""
    _check_same_shape(v, z_t)
    signal, noise = _signal_and_noise(t, z_t, schedule, allow_zero=True)
    return signal * v + noise * z_t


def x0_from_v(
    v: torch.Tensor,
    z_t: torch.Tensor,
    t: Timestep,
    schedule: NoiseSchedule,
) -> torch.Tensor:
    """x0 = sqrt(alpha_bar_t) z_t - sqrt(1 - alpha_bar_t) v."""
    _check_same_shape(v, z_t)
    signal, noise = _signal_and_noise(t, z_t, schedule, allow_zero=True)
    return signal * z_t - noise * v


def x0_from_eps(
    eps: torch.Tensor,
    z_t: torch.Tensor,
    t: Timestep,
    schedule: NoiseSchedule,
) -> torch.Tensor:
    """x0 = (z_t - sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_bar_t)."""
    _check_same_shape(eps, z_t)
    signal, noise = _signal_and_noise(t, z_t, schedule, allow_zero=True)
    return (z_t - noise * eps) / signal


def ddpm_reverse_step(
    z_t: torch.Tensor,
    eps_hat: torch.Tensor,
    t: Timestep,
    schedule: NoiseSchedule,
) -> torch.Tensor:
    """
    Deterministic reverse transition.

    z_{t-1} = (z_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) eps_hat)
    / sqrt(alpha_t); no noise term is added.
    """
    _check_same_shape(z_t, eps_hat)
    alpha = _coefficient(schedule.alphas, t, z_t, schedule)
    _, noise = _signal_and_noise(t, z_t, schedule)
    return (z_t - (1.0 - alpha) / noise * eps_hat) / alpha.sqrt()


def ddim_step(
    z_t: torch.Tensor,
    eps_hat: torch.Tensor,
    t: int,
    t_prev: int,
    schedule: NoiseSchedule,
) -> torch.Tensor:
    """
    One eta = 0 DDIM update from ``t`` to ``t_prev``.

    Returns the predicted x0 itself when ``t_prev`` is 0.
    """
    if t_prev >= t:
        raise OrderingError(f"DDIM step needs t_prev < t, got {t_prev}, {t}")
    if t_prev < 0:
        raise OrderingError(f"t_prev must be >= 0, got {t_prev}")
    x0 = x0_from_eps(eps_hat, z_t, t, schedule)
    if t_prev == 0:
        return x0
    signal, noise = _signal_and_noise(t_prev, z_t, schedule)
    return signal * x0 + noise * eps_hat


@dataclass(frozen=True)
class TimestepSubsequence:
    """Strictly decreasing sampling grid t_S > ... > t_1 >= 1."""

    steps: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.steps)

    def pairs(self) -> Iterator[Tuple[int, int]]:
        """(t, t_prev) transitions, ending with (t_1, 0)."""
        for i, t in enumerate(self.steps):
            yield t, self.steps[i + 1] if i + 1 < len(self.steps) else 0


def make_ddim_subsequence(
    num_timesteps: int, sampling_steps: int
) -> TimestepSubsequence:
    """
    Sampling grid t_k = round(k * T / S) for k = S..1.

    Rounding is half-up, done in integer arithmetic.

    Args:
        num_timesteps: T.
        sampling_steps: S, 1 <= S <= T.

    Returns:
        The grid; its first element is T.
    """
    if not 1 <= sampling_steps <= num_timesteps:
        raise ConfigurationError(
            f"Need 1 <= S <= T, got S={sampling_steps}, T={num_timesteps}"
        )
    steps = []
    for k in range(sampling_steps, 0, -1):
        t = (2 * k * num_timesteps + sampling_steps) // (2 * sampling_steps)
        if not steps or t < steps[-1]:
            steps.append(t)
    return TimestepSubsequence(tuple(steps))
