"""
This module contains the caption ablation: one evaluation per caption mode
over the same images and the same initial noise, collected in one CSV.
"""

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union

from langdepth.diffusion.schedule import NoiseSchedule
from langdepth.metrics.depth import AlignMethod
from langdepth.models.tokenizer import Vocabulary
from langdepth.pipeline.evaluation import RunReport, evaluate_run
from langdepth.pipeline.inference import (
    BLANK,
    DATASET,
    TEMPLATE_PREFIX,
    InferenceConfig,
    NoisePredictor,
)
from langdepth.scenes.captions import load_templates
from langdepth.scenes.types import Sample
from langdepth.utils.logger import logging as log

ABLATION_NAME = "ablation.csv"
ABLATION_HEADER = (
    "mode",
    "caption",
    "delta1_pct",
    "absrel",
    "images",
    "failed",
    "ordering_accuracy_pct",
    "caption_dropout",
)


def ablation_modes(templates: Optional[Sequence[str]] = None) -> List[str]:
    """
    Caption modes of an ablation: dataset, blank, then each template.

    Args:
        templates: Prompt names; every shipped prompt when None.
    """
    if templates is None:
        templates = list(load_templates()["prompts"])
    return [DATASET, BLANK] + [f"{TEMPLATE_PREFIX}{n}" for n in templates]


@dataclass(frozen=True)
class AblationRow:
    """One caption mode's outcome."""

    mode: str
    report: RunReport

    def as_row(self) -> List[str]:
        """CSV cells."""
        report = self.report

        def cell(value: Optional[float]) -> str:
            return "" if value is None else repr(value)

        return [
            self.mode,
            report.caption if report.caption is not None else "",
            cell(report.mean_delta1),
            cell(report.mean_absrel),
            str(report.images),
            str(len(report.failures)),
            cell(report.ordering_accuracy),
            cell(report.caption_dropout),
        ]


def write_ablation_csv(
    rows: Sequence[AblationRow], path: Union[str, Path]
) -> Path:
    """Write the ablation table."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ABLATION_HEADER)
        writer.writerows(row.as_row() for row in rows)
    return target


def ablate(
    samples: Sequence[Sample],
    model: NoisePredictor,
    schedule: NoiseSchedule,
    inference: InferenceConfig,
    output_dir: Union[str, Path],
    method: Union[str, AlignMethod] = AlignMethod.L1,
    templates: Optional[Sequence[str]] = None,
    workers: int = 1,
    caption_dropout: Optional[float] = None,
    vocabulary: Optional[Vocabulary] = None,
) -> List[AblationRow]:
    """
    Evaluate every caption mode with paired noise.

    The initial noise of an image depends on the seed and the image id
    only, so rows differ by their caption alone. Each mode's report goes
    to its own subdirectory; ``ablation.csv`` collects the rows.

    Args:
        samples: Evaluation samples.
        model: Noise predictor.
        schedule: The schedule the model was trained with.
        inference: Sampling settings; its caption mode is replaced.
        output_dir: Destination directory.
        method: Alignment method.
        templates: Prompt names; every shipped prompt when None.
        workers: Thread count.
        caption_dropout: Training dropout echoed in every row.
        vocabulary: Token table; the shipped one when None.

    Returns:
        One row per mode, in mode order.
    """
    root = Path(output_dir)
    modes = ablation_modes(templates)
    configs = [replace(inference, caption_mode=mode) for mode in modes]
    rows: List[AblationRow] = []
    for mode, config in zip(modes, configs, strict=True):
        log.info("[ablation] Caption mode %s", mode)
        report = evaluate_run(
            samples,
            model,
            schedule,
            config,
            method=method,
            workers=workers,
            output_dir=root / mode.replace(":", "-"),
            caption_dropout=caption_dropout,
            vocabulary=vocabulary,
        )
        rows.append(AblationRow(mode, report))
    write_ablation_csv(rows, root / ABLATION_NAME)
    log.info("[ablation] Wrote %d rows to %s", len(rows), root)
    return rows
