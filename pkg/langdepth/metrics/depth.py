"""
This module contains depth normalization, affine (scale/shift) alignment
and the delta1 / AbsRel metrics used to score affine-invariant predictions.

All arithmetic is float64 numpy.
"""

import csv
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from langdepth.utils.errors import (
    ConfigurationError,
    DataError,
    DegenerateInputError,
    ShapeError,
)
from langdepth.utils.logger import logging as log

LOW_QUANTILE = 0.02
HIGH_QUANTILE = 0.98
CLAMP = 1.05
DELTA1_THRESHOLD = 1.25
IRLS_DAMPING = 1e-8
IRLS_MAX_ITERATIONS = 100
IRLS_TOLERANCE = 1e-10
# Smallest-residual pixels whose pairwise lines are tried after IRLS.
VERTEX_CANDIDATES = 8

CSV_HEADER = (
    "image_id",
    "alpha",
    "beta",
    "method",
    "delta1_pct",
    "absrel",
    "valid_px",
)


class Space(str, Enum):
    """Units of a depth map."""

    METRIC = "metric"
    NORMALIZED = "normalized"


class AlignMethod(str, Enum):
    """Residual norm of the scale/shift fit."""

    L1 = "L1"
    L2 = "L2"


@dataclass(frozen=True)
class DepthMap:
    """H x W depth values with a validity mask."""

    values: np.ndarray
    mask: np.ndarray
    space: Space = Space.METRIC

    def __post_init__(self) -> None:
        if self.values.shape != self.mask.shape or self.values.ndim != 2:
            raise ShapeError(
                f"Depth {self.values.shape} and mask {self.mask.shape} "
                "must be equal 2-D shapes"
            )
        valid = self.valid_values
        if not np.isfinite(valid).all():
            raise DataError("Depth map has non-finite values under its mask")
        if self.space is Space.METRIC and (valid <= 0).any():
            raise DataError("Metric depth must be positive under its mask")

    @classmethod
    def from_arrays(
        cls,
        values: np.ndarray,
        mask: Optional[np.ndarray] = None,
        space: Space = Space.METRIC,
    ) -> "DepthMap":
        """Build from raw arrays; a missing mask means every pixel."""
        values = np.asarray(values, dtype=np.float64)
        if mask is None:
            mask = np.ones(values.shape, dtype=bool)
        return cls(values, np.asarray(mask).astype(bool), space)

    @property
    def valid_values(self) -> np.ndarray:
        """Values under the mask, flattened."""
        return self.values[self.mask.astype(bool)]


def _masked(
    values: np.ndarray, mask: Optional[np.ndarray]
) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if mask is None:
        return values.ravel()
    mask = np.asarray(mask).astype(bool)
    if mask.shape != values.shape:
        raise ShapeError(
            f"Mask {mask.shape} does not match values {values.shape}"
        )
    return values[mask]


def percentile(
    values: np.ndarray, q: float, mask: Optional[np.ndarray] = None
) -> float:
    """
    Linear-interpolation quantile of the valid values.

    Position ``q * (n - 1)`` in the ascending order, interpolated between
    its floor and ceiling.

    Args:
        values: Array of values.
        q: Quantile in [0, 1].
        mask: Validity mask; every value when None.

    Returns:
        The quantile.
    """
    if not 0.0 <= q <= 1.0:
        raise ConfigurationError(f"Quantile must lie in [0, 1], got {q}")
    valid = _masked(values, mask)
    if valid.size == 0:
        raise DataError("Cannot take a percentile of an empty mask")
    return float(np.quantile(valid, q, method="linear"))


@dataclass(frozen=True)
class NormalizedDepth:
    """Normalized map plus the percentiles that define the mapping."""

    depth: DepthMap
    low: float
    high: float


def normalize_depth(depth: DepthMap) -> NormalizedDepth:
    """
    Map the 2nd/98th percentiles of a metric map to -1/+1.

    ``n = ((y - y2) / (y98 - y2) - 0.5) * 2``, clamped to [-1.05, 1.05].

    Args:
        depth: Metric depth.

    Returns:
        The normalized map and (y2, y98).
    """
    low = percentile(depth.values, LOW_QUANTILE, depth.mask)
    high = percentile(depth.values, HIGH_QUANTILE, depth.mask)
    if not high > low:
        raise DegenerateInputError(
            f"Depth percentiles coincide (y2={low}, y98={high})"
        )
    values = ((depth.values - low) / (high - low) - 0.5) * 2.0
    values = np.clip(values, -CLAMP, CLAMP)
    return NormalizedDepth(
        DepthMap(values, depth.mask, Space.NORMALIZED), low, high
    )


def denormalize(depth: DepthMap, low: float, high: float) -> DepthMap:
    """Inverse of :func:`normalize_depth` on the unclamped range."""
    if not high > low:
        raise DegenerateInputError(
            f"Need y98 > y2 to denormalize, got {low}, {high}"
        )
    values = (depth.values / 2.0 + 0.5) * (high - low) + low
    return DepthMap(values, depth.mask, Space.METRIC)


@dataclass(frozen=True)
class AlignmentResult:
    """Fitted ``alpha * y + beta`` and its objective."""

    alpha: float
    beta: float
    method: AlignMethod
    objective: float
    iterations: int = 0
    history: Tuple[float, ...] = field(default=(), compare=False)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """The aligned prediction."""
        return self.alpha * np.asarray(values, dtype=np.float64) + self.beta


def _l1_objective(
    design: np.ndarray, target: np.ndarray, params: np.ndarray
) -> float:
    return float(np.mean(np.abs(design @ params - target)))


def _polish_vertices(
    design: np.ndarray,
    target: np.ndarray,
    params: np.ndarray,
    objective: float,
) -> Tuple[np.ndarray, float]:
    """
    Try the lines through pairs of the best-fitting pixels.

    An L1 line fit has an optimum passing through two data points.
    """
    residuals = np.abs(design @ params - target)
    order = np.argsort(residuals, kind="stable")[:VERTEX_CANDIDATES]
    for i, j in combinations(order, 2):
        y_i, y_j = design[i, 0], design[j, 0]
        if y_i == y_j:
            continue
        alpha = (target[i] - target[j]) / (y_i - y_j)
        candidate = np.array([alpha, target[i] - alpha * y_i])
        value = _l1_objective(design, target, candidate)
        if value < objective:
            params, objective = candidate, value
    return params, objective


def align_affine(
    pred: np.ndarray,
    gt: np.ndarray,
    mask: Optional[np.ndarray] = None,
    method: Union[str, AlignMethod] = AlignMethod.L1,
) -> AlignmentResult:
    """
    Fit scale and shift so ``alpha * pred + beta`` matches ``gt``.

    L2 solves the normal equations. L1 runs iteratively reweighted least
    squares with weights ``1 / max(|r|, 1e-8)`` for at most 100 rounds or
    until the parameters move less than 1e-10, never accepting a round that
    raises the mean absolute residual, then checks the lines through pairs
    of the best-fitting pixels.

    Args:
        pred: Prediction (any affine-equivalent units).
        gt: Ground truth.
        mask: Validity mask; every pixel when None.
        method: ``L1`` or ``L2``.

    Returns:
        The fit. ``objective`` is the mean absolute residual for L1 and the
        mean squared residual for L2.
    """
    try:
        method = AlignMethod(method)
    except ValueError as exc:
        raise ConfigurationError(
            f"Unknown alignment method: {method}"
        ) from exc
    if np.shape(pred) != np.shape(gt):
        raise ShapeError(
            f"Prediction {np.shape(pred)} and ground truth {np.shape(gt)} "
            "differ in shape"
        )
    y = _masked(pred, mask)
    target = _masked(gt, mask)
    if y.size < 2:
        raise DataError(f"Alignment needs >= 2 valid pixels, got {y.size}")
    if np.ptp(y) == 0.0:
        raise DegenerateInputError("Prediction is constant under the mask")
    design = np.stack([y, np.ones_like(y)], axis=1)
    params = np.linalg.lstsq(design, target, rcond=None)[0]

    if method is AlignMethod.L2:
        residual = design @ params - target
        return AlignmentResult(
            alpha=float(params[0]),
            beta=float(params[1]),
            method=method,
            objective=float(np.mean(residual**2)),
        )

    objective = _l1_objective(design, target, params)
    history = [objective]
    iterations = 0
    for iterations in range(1, IRLS_MAX_ITERATIONS + 1):
        weights = 1.0 / np.maximum(
            np.abs(design @ params - target), IRLS_DAMPING
        )
        root = np.sqrt(weights)
        candidate = np.linalg.lstsq(
            design * root[:, None], target * root, rcond=None
        )[0]
        value = _l1_objective(design, target, candidate)
        if value > objective:
            break
        step = float(np.max(np.abs(candidate - params)))
        params, objective = candidate, value
        history.append(objective)
        if step < IRLS_TOLERANCE:
            break
    params, polished = _polish_vertices(design, target, params, objective)
    if polished < objective:
        objective = polished
        history.append(objective)
    return AlignmentResult(
        alpha=float(params[0]),
        beta=float(params[1]),
        method=method,
        objective=objective,
        iterations=iterations,
        history=tuple(history),
    )


def delta1(
    pred: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray] = None
) -> float:
    """
    Percentage of pixels with ``max(pred/gt, gt/pred) < 1.25``.

    Non-positive predictions count as failures.
    """
    p = _masked(pred, mask)
    g = _masked(gt, mask)
    if p.size == 0:
        raise DataError("delta1 of an empty mask")
    positive = p > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(p / g, g / p)
    passed = positive & (ratio < DELTA1_THRESHOLD)
    return 100.0 * float(np.count_nonzero(passed)) / p.size


def absrel(
    pred: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray] = None
) -> float:
    """Mean of ``|gt - pred| / gt`` over valid pixels."""
    p = _masked(pred, mask)
    g = _masked(gt, mask)
    if p.size == 0:
        raise DataError("AbsRel of an empty mask")
    return float(np.mean(np.abs(g - p) / g))


@dataclass(frozen=True)
class ImageMetrics:
    """One CSV row."""

    image_id: str
    alpha: float
    beta: float
    method: AlignMethod
    delta1: float
    absrel: float
    valid_px: int


@dataclass(frozen=True)
class MetricsRecord:
    """Per-image rows and their unweighted means."""

    rows: Tuple[ImageMetrics, ...]
    mean_delta1: float
    mean_absrel: float
    valid_px: int

    @classmethod
    def from_rows(cls, rows: Sequence[ImageMetrics]) -> "MetricsRecord":
        """Aggregate rows in their given order."""
        if not rows:
            raise DataError("No metrics rows to aggregate")
        return cls(
            rows=tuple(rows),
            mean_delta1=float(np.mean([r.delta1 for r in rows])),
            mean_absrel=float(np.mean([r.absrel for r in rows])),
            valid_px=sum(r.valid_px for r in rows),
        )


def evaluate_pair(
    pred: np.ndarray,
    gt: np.ndarray,
    mask: Optional[np.ndarray] = None,
    method: Union[str, AlignMethod] = AlignMethod.L1,
    image_id: str = "",
) -> ImageMetrics:
    """
    Align a relative prediction to metric ground truth, then score it.

    The fitted scale may be negative; metrics are computed on the aligned
    values as they are.

    Args:
        pred: Relative (e.g. normalized) prediction.
        gt: Metric ground truth.
        mask: Validity mask; every pixel when None.
        method: Alignment method.
        image_id: Row label.

    Returns:
        The row.
    """
    fit = align_affine(pred, gt, mask, method)
    aligned = fit.apply(pred)
    valid = _masked(gt, mask).size
    return ImageMetrics(
        image_id=image_id,
        alpha=fit.alpha,
        beta=fit.beta,
        method=fit.method,
        delta1=delta1(aligned, gt, mask),
        absrel=absrel(aligned, gt, mask),
        valid_px=valid,
    )


def aggregate(rows: Sequence[ImageMetrics]) -> MetricsRecord:
    """Unweighted per-image means."""
    return MetricsRecord.from_rows(rows)


def write_metrics_csv(
    record: MetricsRecord, path: Union[str, Path]
) -> Path:
    """
    Write per-image rows followed by an ``AGGREGATE`` row.

    Args:
        record: Rows and aggregate.
        path: Destination CSV.

    Returns:
        The path written.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    method = record.rows[0].method.value if record.rows else ""
    with open(target, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in record.rows:
            writer.writerow(
                [
                    row.image_id,
                    repr(row.alpha),
                    repr(row.beta),
                    row.method.value,
                    repr(row.delta1),
                    repr(row.absrel),
                    row.valid_px,
                ]
            )
        writer.writerow(
            [
                "AGGREGATE",
                "",
                "",
                method,
                repr(record.mean_delta1),
                repr(record.mean_absrel),
                record.valid_px,
            ]
        )
    log.debug("[metrics] Wrote %d rows to %s", len(record.rows), target)
    return target


def read_metrics_csv(path: Union[str, Path]) -> List[dict]:
    """Rows of a metrics CSV as dictionaries (aggregate row included)."""
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            return list(csv.DictReader(f))
    except FileNotFoundError as exc:
        raise DataError("Metrics file not found", path) from exc
