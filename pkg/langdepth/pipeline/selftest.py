"""
This module contains the built-in oracle suites run by ``selftest``: schedule
identities, a finite-difference gradient check of a tiny denoiser, affine
alignment against exhaustive search and the metrics against their direct
definitions.
"""

import time
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from langdepth.diffusion.schedule import (
    ddim_step,
    eps_from_v,
    make_schedule,
    marginal_sample,
    v_target,
    x0_from_eps,
    x0_from_v,
)
from langdepth.metrics.depth import (
    AlignMethod,
    DepthMap,
    absrel,
    align_affine,
    delta1,
    denormalize,
    normalize_depth,
    percentile,
)
from langdepth.models.denoiser import (
    DenoiserConfig,
    build_denoiser,
    gradient_check,
    randomize_parameters,
)
from langdepth.utils.errors import DegenerateInputError
from langdepth.utils.logger import logging as log
from langdepth.utils.rng import derive_rng

SELFTEST_SEED = 0
SCHEDULE_TOLERANCE = 1e-10
ORTHOGONALITY_TOLERANCE = 1e-9
L1_SLACK = 1e-6
NORMALIZATION_TOLERANCE = 1e-9

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
TINY_TIMESTEPS = 10

Check = Callable[[], Tuple[bool, str]]


@dataclass(frozen=True)
class SuiteResult:
    """Outcome of one oracle suite."""

    name: str
    passed: bool
    detail: str
    seconds: float


def _relative(actual: torch.Tensor, expected: torch.Tensor) -> float:
    scale = max(float(expected.abs().max()), 1.0)
    return float((actual - expected).abs().max()) / scale


def check_schedule_identities() -> Tuple[bool, str]:
    """
    alpha_bar recomputation, epsilon/v/x0 round trips and DDIM with the
    true noise against the closed-form marginal, for T in {2, 200, 1000}.
    """
    worst = 0.0
    for steps in (2, 200, 1000):
        schedule = make_schedule(steps)
        running = 1.0
        for t in range(1, steps + 1):
            running *= 1.0 - float(schedule.betas[t - 1])
            expected = torch.tensor(running, dtype=torch.float64)
            actual = schedule.alpha_bars[t - 1]
            worst = max(worst, _relative(actual, expected))
        rng = derive_rng(SELFTEST_SEED, "selftest", "schedule", steps)
        z0 = torch.from_numpy(rng.standard_normal((2, 4, 4, 4)))
        eps = torch.from_numpy(rng.standard_normal((2, 4, 4, 4)))
        for t in sorted({1, max(1, steps // 2), steps}):
            z_t = marginal_sample(z0, t, eps, schedule)
            v = v_target(z0, eps, t, schedule)
            worst = max(
                worst,
                _relative(eps_from_v(v, z_t, t, schedule), eps),
                _relative(x0_from_v(v, z_t, t, schedule), z0),
                _relative(x0_from_eps(eps, z_t, t, schedule), z0),
            )
            for t_prev in sorted({0, t - 1}):
                stepped = ddim_step(z_t, eps, t, t_prev, schedule)
                if t_prev == 0:
                    expected_prev = z0
                else:
                    expected_prev = marginal_sample(z0, t_prev, eps, schedule)
                worst = max(worst, _relative(stepped, expected_prev))
    return worst <= SCHEDULE_TOLERANCE, f"max relative error {worst:.3e}"


def check_gradients() -> Tuple[bool, str]:
    """
    Central differences against reverse mode on a tiny float64 denoiser,
    one captioned and one all-PAD row.
    """
    rng = derive_rng(SELFTEST_SEED, "selftest", "gradients")
    model = build_denoiser(
        TINY_DENOISER, TINY_TIMESTEPS, rng, dtype=torch.float64
    )
    randomize_parameters(model, rng)
    f = TINY_DENOISER.patch_factor
    size = 8 // f
    z_t = torch.from_numpy(
        rng.standard_normal((2, TINY_DENOISER.latent_channels, size, size))
    )
    x_latent = torch.from_numpy(
        rng.standard_normal((2, TINY_DENOISER.image_channels, size, size))
    )
    t = torch.tensor([3, TINY_TIMESTEPS], dtype=torch.long)
    tokens = torch.tensor([[5, 9, 12, 0], [0, 0, 0, 0]], dtype=torch.long)
    results = gradient_check(model, z_t, x_latent, t, tokens)
    failed = sorted(name for name, ok in results.items() if not ok)
    if failed:
        return False, f"{len(failed)} tensors failed: {', '.join(failed)}"
    return True, f"{len(results)} parameter tensors agree"


def _exhaustive_l1(pred: np.ndarray, gt: np.ndarray) -> float:
    best = float("inf")
    for i, j in combinations(range(pred.size), 2):
        if pred[i] == pred[j]:
            continue
        alpha = (gt[i] - gt[j]) / (pred[i] - pred[j])
        beta = gt[i] - alpha * pred[i]
        best = min(best, float(np.mean(np.abs(alpha * pred + beta - gt))))
    return best


def check_alignment(instances: int = 50) -> Tuple[bool, str]:
    """
    L2 residuals orthogonal to ``[pred, 1]``; the L1 objective no worse
    than exhaustive search over lines through pairs of points.
    """
    worst_orthogonality = 0.0
    worst_gap = -float("inf")
    for index in range(instances):
        rng = derive_rng(SELFTEST_SEED, "selftest", "alignment", index)
        pred = rng.uniform(0.1, 1.0, size=15)
        gt = (
            rng.uniform(0.5, 3.0) * pred
            + rng.uniform(-1.0, 1.0)
            + rng.laplace(scale=0.1, size=15)
        )
        l2 = align_affine(pred, gt, method=AlignMethod.L2)
        residual = l2.apply(pred) - gt
        worst_orthogonality = max(
            worst_orthogonality,
            abs(float(residual @ pred)),
            abs(float(residual.sum())),
        )
        l1 = align_affine(pred, gt, method=AlignMethod.L1)
        worst_gap = max(worst_gap, l1.objective - _exhaustive_l1(pred, gt))
    passed = (
        worst_orthogonality <= ORTHOGONALITY_TOLERANCE
        and worst_gap <= L1_SLACK
    )
    return passed, (
        f"L2 orthogonality {worst_orthogonality:.3e}, "
        f"L1 gap to exhaustive {worst_gap:.3e}"
    )


def _delta1_by_definition(pred: np.ndarray, gt: np.ndarray) -> float:
    passed = 0
    for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist()):
        if p > 0 and max(p / g, g / p) < 1.25:
            passed += 1
    return 100.0 * float(passed) / pred.size


def _absrel_by_definition(pred: np.ndarray, gt: np.ndarray) -> float:
    terms = [
        abs(g - p) / g
        for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist())
    ]
    return float(np.mean(np.array(terms)))


def check_metrics(maps: int = 1000) -> Tuple[bool, str]:
    """
    delta1 and AbsRel equal their direct definitions; the 1.25 boundary
    fails; normalization hits -1/+1 at the percentiles and inverts.
    """
    mismatches = 0
    for index in range(maps):
        rng = derive_rng(SELFTEST_SEED, "selftest", "metrics", index)
        gt = rng.uniform(0.5, 10.0, size=(8, 8))
        pred = gt * rng.uniform(0.6, 1.6, size=(8, 8))
        if delta1(pred, gt) != _delta1_by_definition(pred, gt):
            mismatches += 1
        if absrel(pred, gt) != _absrel_by_definition(pred, gt):
            mismatches += 1
    boundary = np.array([1.0, 2.0, 4.0])
    boundary_ok = delta1(boundary * 1.25, boundary) == 0.0

    rng = derive_rng(SELFTEST_SEED, "selftest", "normalize")
    # 51 values put the 2nd and 98th percentiles on the 2nd and 50th
    # smallest pixels.
    values = rng.uniform(1.0, 9.0, size=(1, 51))
    order = np.argsort(values, axis=None)
    normalized = normalize_depth(DepthMap.from_arrays(values))
    flat = normalized.depth.values.ravel()
    normalization_error = max(
        abs(flat[order[1]] + 1.0),
        abs(flat[order[49]] - 1.0),
        abs(normalized.low - percentile(values, 0.02)),
    )
    inside = np.abs(normalized.depth.values) < 1.05
    restored = denormalize(normalized.depth, normalized.low, normalized.high)
    inverse_error = float(
        np.max(np.abs(restored.values[inside] - values[inside]))
    )
    try:
        normalize_depth(DepthMap.from_arrays(np.full((4, 4), 3.0)))
        degenerate_ok = False
    except DegenerateInputError:
        degenerate_ok = True

    passed = (
        mismatches == 0
        and boundary_ok
        and degenerate_ok
        and normalization_error <= NORMALIZATION_TOLERANCE
        and inverse_error <= NORMALIZATION_TOLERANCE
    )
    return passed, (
        f"{mismatches} definition mismatches over {maps} maps, "
        f"boundary {'ok' if boundary_ok else 'broken'}, "
        f"normalization error {max(normalization_error, inverse_error):.3e}"
    )


SUITES: Dict[str, Check] = {
    "schedule-identities": check_schedule_identities,
    "gradient-check": check_gradients,
    "alignment-vs-exhaustive": check_alignment,
    "metrics-vs-definition": check_metrics,
}


def run_selftest(names: Optional[Sequence[str]] = None) -> List[SuiteResult]:
    """
    Run oracle suites.

    Args:
        names: Suites to run; every suite when None.

    Returns:
        One result per suite, in registry order.
    """
    selected = list(SUITES) if names is None else list(names)
    results: List[SuiteResult] = []
    for name in selected:
        check = SUITES[name]
        began = time.perf_counter()
        passed, detail = check()
        seconds = time.perf_counter() - began
        results.append(SuiteResult(name, passed, detail, seconds))
        log.debug("[selftest] %s %s (%.2fs)", name, passed, seconds)
    return results
