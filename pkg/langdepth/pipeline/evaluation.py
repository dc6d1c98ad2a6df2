"""
This module contains the evaluation harness: per-image inference, affine
alignment against metric ground truth, depth-ordering accuracy on the
ambiguity samples and the run report (``metrics.csv`` + ``report.json``).
"""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from langdepth import __version__
from langdepth.diffusion.schedule import NoiseSchedule
from langdepth.metrics.depth import (
    AlignMethod,
    DepthMap,
    ImageMetrics,
    MetricsRecord,
    Space,
    evaluate_pair,
    write_metrics_csv,
)
from langdepth.models.tokenizer import Vocabulary, default_vocabulary
from langdepth.pipeline.inference import (
    DATASET,
    InferenceConfig,
    NoisePredictor,
    infer,
)
from langdepth.pipeline.visualize import visualize
from langdepth.scenes.types import AmbiguityTag, Sample
from langdepth.utils.errors import (
    ConfigurationError,
    DataError,
    LangDepthError,
)
from langdepth.utils.logger import logging as log

METRICS_NAME = "metrics.csv"
REPORT_NAME = "report.json"


@dataclass(frozen=True)
class EvaluationConfig:
    """``evaluation`` config section."""

    method: str = AlignMethod.L1.value
    visualize_dir: Optional[str] = None

    def __post_init__(self) -> None:
        try:
            AlignMethod(self.method)
        except ValueError as exc:
            raise ConfigurationError(
                f"Unknown alignment method: {self.method}"
            ) from exc


@dataclass(frozen=True)
class FailedImage:
    """An image whose evaluation raised."""

    image_id: str
    error: str
    exit_code: int


@dataclass(frozen=True)
class ImageOutcome:
    """Everything one image contributes to a report."""

    image_id: str
    metrics: Optional[ImageMetrics] = None
    ordering_correct: Optional[bool] = None
    failure: Optional[FailedImage] = None


def ordering_correct(prediction: np.ndarray, sample: Sample) -> bool:
    """
    Whether the predicted left/right order matches the ambiguity tag.

    Each half of the image is reduced to the mean prediction over its
    valid pixels nearer than the far plane (the whole valid half when
    none are).

    Args:
        prediction: ``H x W`` relative depth, increasing with distance.
        sample: A sample tagged left-near or right-near.

    Returns:
        True when the nearer half is predicted nearer.
    """
    if sample.ambiguity is AmbiguityTag.NONE:
        raise DataError(f"{sample.sample_id} carries no ambiguity tag")
    width = prediction.shape[1]
    half = width // 2
    valid = sample.mask.astype(bool)
    foreground = valid & (sample.depth < sample.far_plane)
    means = []
    for columns in (slice(0, half), slice(width - half, width)):
        region = foreground[:, columns]
        if not region.any():
            region = valid[:, columns]
        if not region.any():
            raise DataError(f"{sample.sample_id} has an empty half")
        means.append(float(prediction[:, columns][region].mean()))
    left_nearer = means[0] < means[1]
    return left_nearer == (sample.ambiguity is AmbiguityTag.LEFT_NEAR)


def evaluate_sample(
    sample: Sample,
    model: NoisePredictor,
    schedule: NoiseSchedule,
    inference: InferenceConfig,
    method: AlignMethod,
    vocabulary: Vocabulary,
    visualize_dir: Optional[Path] = None,
) -> ImageOutcome:
    """
    Infer and score one sample; library errors become a failure record.
    """
    image_id = sample.sample_id
    try:
        caption = inference.resolve_caption(sample.caption)
        depth = infer(
            sample.image,
            caption,
            model,
            schedule,
            inference.steps,
            inference.seed,
            image_id,
            vocabulary,
        )
        metrics = evaluate_pair(
            depth.values, sample.depth, sample.mask, method, image_id
        )
        ordering = None
        if sample.ambiguity is not AmbiguityTag.NONE:
            ordering = ordering_correct(depth.values, sample)
        if visualize_dir is not None:
            mask = sample.mask.astype(bool)
            visualize(
                DepthMap.from_arrays(sample.depth, mask),
                visualize_dir / f"{image_id}.gt.pgm",
                visualize_dir / f"{image_id}.gt.ppm",
            )
            visualize(
                DepthMap(depth.values, mask, Space.NORMALIZED),
                visualize_dir / f"{image_id}.pred.pgm",
                visualize_dir / f"{image_id}.pred.ppm",
            )
    except LangDepthError as exc:
        log.warning("[evaluation] %s failed: %s", image_id, exc)
        return ImageOutcome(
            image_id,
            failure=FailedImage(image_id, str(exc), exc.exit_code),
        )
    return ImageOutcome(image_id, metrics=metrics, ordering_correct=ordering)


@dataclass
class RunReport:
    """Per-image rows, their aggregate and the run summary."""

    record: Optional[MetricsRecord]
    failures: List[FailedImage]
    ordering: List[bool]
    caption_mode: str
    caption: Optional[str]
    caption_dropout: Optional[float]
    wall_time: float
    config: Dict[str, Any] = field(default_factory=dict)
    version: str = __version__

    @property
    def images(self) -> int:
        """Number of successfully scored images."""
        return len(self.record.rows) if self.record is not None else 0

    @property
    def ordering_accuracy(self) -> Optional[float]:
        """Percentage of ambiguity samples ordered correctly."""
        if not self.ordering:
            return None
        return 100.0 * sum(self.ordering) / len(self.ordering)

    @property
    def mean_delta1(self) -> Optional[float]:
        """Aggregate delta1 in percent."""
        return self.record.mean_delta1 if self.record is not None else None

    @property
    def mean_absrel(self) -> Optional[float]:
        """Aggregate AbsRel."""
        return self.record.mean_absrel if self.record is not None else None

    def to_json(self) -> Dict[str, Any]:
        """The ``report.json`` document."""
        return {
            "version": self.version,
            "caption_mode": self.caption_mode,
            "caption": self.caption,
            "caption_dropout": self.caption_dropout,
            "images": self.images,
            "failed": len(self.failures),
            "failures": [
                {
                    "image_id": f.image_id,
                    "error": f.error,
                    "exit_code": f.exit_code,
                }
                for f in self.failures
            ],
            "delta1_pct": self.mean_delta1,
            "absrel": self.mean_absrel,
            "ordering_accuracy_pct": self.ordering_accuracy,
            "ordering_samples": len(self.ordering),
            "wall_time_seconds": self.wall_time,
            "config": self.config,
        }

    def write(self, output_dir: Union[str, Path]) -> Path:
        """
        Write ``metrics.csv`` (when any image succeeded) and
        ``report.json`` into ``output_dir``.
        """
        root = Path(output_dir)
        root.mkdir(parents=True, exist_ok=True)
        if self.record is not None:
            write_metrics_csv(self.record, root / METRICS_NAME)
        with open(root / REPORT_NAME, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2, sort_keys=True)
            f.write("\n")
        return root


def evaluate_run(
    samples: Sequence[Sample],
    model: NoisePredictor,
    schedule: NoiseSchedule,
    inference: InferenceConfig,
    method: Union[str, AlignMethod] = AlignMethod.L1,
    workers: int = 1,
    output_dir: Optional[Union[str, Path]] = None,
    visualize_dir: Optional[Union[str, Path]] = None,
    caption_dropout: Optional[float] = None,
    vocabulary: Optional[Vocabulary] = None,
    config: Optional[Mapping[str, Any]] = None,
) -> RunReport:
    """
    Evaluate a model on a set of samples.

    Inference runs in up to ``workers`` threads over the one read-only
    model; rows are ordered by image id regardless. Images whose
    evaluation raises a library error are listed as failures and left
    out of the aggregate.

    Args:
        samples: Evaluation samples (e.g. a SampleReader).
        model: Noise predictor.
        schedule: The schedule the model was trained with.
        inference: Sampling settings and caption mode.
        method: Alignment method.
        workers: Thread count.
        output_dir: Where ``metrics.csv`` and ``report.json`` go.
        visualize_dir: Where ground-truth and prediction images go.
        caption_dropout: Training dropout echoed in the report.
        vocabulary: Token table; the shipped one when None.
        config: Configuration echoed in the report.

    Returns:
        The run report.
    """
    if len(samples) == 0:
        raise DataError("Cannot evaluate an empty dataset")
    if workers < 1:
        raise ConfigurationError(f"Worker count must be >= 1: {workers}")
    method = AlignMethod(method)
    vocabulary = vocabulary or default_vocabulary()
    picture_dir = Path(visualize_dir) if visualize_dir is not None else None
    log.info(
        "[evaluation] Evaluating %d images (caption mode %s, %d steps, "
        "%d workers)",
        len(samples),
        inference.caption_mode,
        inference.steps,
        workers,
    )
    began = time.perf_counter()

    def job(index: int) -> ImageOutcome:
        return evaluate_sample(
            samples[index],
            model,
            schedule,
            inference,
            method,
            vocabulary,
            picture_dir,
        )

    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(job, range(len(samples))))
    outcomes.sort(key=lambda o: o.image_id)

    rows = [o.metrics for o in outcomes if o.metrics is not None]
    failures = [o.failure for o in outcomes if o.failure is not None]
    ordering = [
        o.ordering_correct for o in outcomes if o.ordering_correct is not None
    ]
    report = RunReport(
        record=MetricsRecord.from_rows(rows) if rows else None,
        failures=failures,
        ordering=ordering,
        caption_mode=inference.caption_mode,
        caption=(
            None
            if inference.caption_mode == DATASET
            else inference.resolve_caption()
        ),
        caption_dropout=caption_dropout,
        wall_time=time.perf_counter() - began,
        config=dict(config or {}),
    )
    if failures:
        log.warning(
            "[evaluation] %d of %d images failed", len(failures), len(samples)
        )
    if report.record is not None:
        log.info(
            "[evaluation] delta1 %.2f%% AbsRel %.4f over %d images",
            report.record.mean_delta1,
            report.record.mean_absrel,
            report.images,
        )
    if output_dir is not None:
        report.write(output_dir)
    return report
