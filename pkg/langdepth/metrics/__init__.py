"""
Depth normalization, affine alignment and evaluation metrics.
"""

from .depth import (
    AlignmentResult,
    AlignMethod,
    DepthMap,
    ImageMetrics,
    MetricsRecord,
    NormalizedDepth,
    Space,
    absrel,
    aggregate,
    align_affine,
    delta1,
    denormalize,
    evaluate_pair,
    normalize_depth,
    percentile,
    write_metrics_csv,
)

__all__ = [
    "AlignMethod",
    "AlignmentResult",
    "DepthMap",
    "ImageMetrics",
    "MetricsRecord",
    "NormalizedDepth",
    "Space",
    "absrel",
    "aggregate",
    "align_affine",
    "delta1",
    "denormalize",
    "evaluate_pair",
    "normalize_depth",
    "percentile",
    "write_metrics_csv",
]
