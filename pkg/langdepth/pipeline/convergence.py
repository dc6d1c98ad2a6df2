"""
This module contains convergence logging: a training run that evaluates a
held-out split at a fixed interval and writes the resulting curve.
"""

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from langdepth.diffusion.schedule import ScheduleConfig
from langdepth.metrics.depth import AlignMethod
from langdepth.models.denoiser import Denoiser, DenoiserConfig
from langdepth.models.tokenizer import Vocabulary
from langdepth.pipeline.evaluation import evaluate_run
from langdepth.pipeline.inference import BLANK, InferenceConfig
from langdepth.scenes.types import Sample
from langdepth.training.trainer import TrainConfig, Trainer
from langdepth.utils.errors import ConfigurationError, DataError
from langdepth.utils.logger import logging as log

CONVERGENCE_NAME = "convergence.csv"
CONVERGENCE_HEADER = ("iteration", "delta1", "absrel")


@dataclass(frozen=True)
class ConvergencePoint:
    """One evaluation of the curve."""

    iteration: int
    delta1: float
    absrel: float
    ordering_accuracy: Optional[float] = None


def write_convergence_csv(
    points: Sequence[ConvergencePoint], path: Union[str, Path]
) -> Path:
    """Write ``iteration,delta1,absrel`` rows."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CONVERGENCE_HEADER)
        for point in points:
            writer.writerow(
                [point.iteration, repr(point.delta1), repr(point.absrel)]
            )
    return target


def convergence_log(
    config: TrainConfig,
    denoiser: DenoiserConfig,
    schedule: ScheduleConfig,
    train_samples: Sequence[Sample],
    eval_samples: Sequence[Sample],
    eval_interval: int,
    inference: InferenceConfig,
    output_dir: Union[str, Path],
    method: Union[str, AlignMethod] = AlignMethod.L1,
    blank: bool = False,
    workers: int = 1,
    vocabulary: Optional[Vocabulary] = None,
) -> List[ConvergencePoint]:
    """
    Train while evaluating every ``eval_interval`` iterations.

    The final iteration is always evaluated, so an interval beyond the
    run length yields exactly one point. A blank run trains with caption
    dropout 1 and evaluates with blank captions; everything else,
    including every random stream, is shared with the captioned run.

    Args:
        config: Optimization settings.
        denoiser: Architecture of the fresh model.
        schedule: Noise schedule settings.
        train_samples: Training split.
        eval_samples: Held-out split.
        eval_interval: Iterations between evaluations.
        inference: Sampling settings for the evaluations.
        output_dir: Checkpoints, the training log and the curve.
        method: Alignment method.
        blank: Train and evaluate without captions.
        workers: Evaluation thread count.
        vocabulary: Token table; the shipped one when None.

    Returns:
        Points in increasing iteration order.
    """
    if eval_interval < 1:
        raise ConfigurationError(
            f"Evaluation interval must be >= 1: {eval_interval}"
        )
    if len(eval_samples) == 0:
        raise DataError("Cannot log convergence on an empty eval split")
    config = replace(config, validation_interval=eval_interval)
    if blank:
        config = replace(config, caption_dropout=1.0)
        inference = replace(inference, caption_mode=BLANK)
    built = schedule.build()
    points: List[ConvergencePoint] = []

    def validate(model: Denoiser, iteration: int) -> Tuple[float, float]:
        report = evaluate_run(
            eval_samples,
            model,
            built,
            inference,
            method=method,
            workers=workers,
            vocabulary=vocabulary,
        )
        if report.record is None:
            raise DataError(
                f"Every evaluation image failed at iteration {iteration}"
            )
        point = ConvergencePoint(
            iteration,
            report.record.mean_delta1,
            report.record.mean_absrel,
            report.ordering_accuracy,
        )
        points.append(point)
        log.info(
            "[convergence] iteration %d delta1 %.2f%% AbsRel %.4f",
            iteration,
            point.delta1,
            point.absrel,
        )
        return point.delta1, point.absrel

    trainer = Trainer(
        config,
        denoiser,
        schedule,
        train_samples,
        output_dir,
        vocabulary,
        validate,
    )
    trainer.train()
    write_convergence_csv(points, Path(output_dir) / CONVERGENCE_NAME)
    return points
