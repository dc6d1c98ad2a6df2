"""
This module contains the command-line surface.

Every subcommand accepts ``--config <file>`` and any number of dotted
overrides placed after the subcommand (``--train.lr0 1e-4`` or
``--train.lr0=1e-4``). Library errors map to exit codes: 2 configuration,
3 data, 4 numeric, 1 anything else.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from termcolor import colored

from langdepth import __version__
from langdepth.diffusion.schedule import ScheduleConfig, make_schedule
from langdepth.models.checkpoint import load_checkpoint
from langdepth.models.denoiser import Denoiser, DenoiserConfig
from langdepth.pipeline.ablation import ablate
from langdepth.pipeline.convergence import convergence_log
from langdepth.pipeline.evaluation import EvaluationConfig, evaluate_run
from langdepth.pipeline.inference import (
    DATASET,
    PROVIDED,
    InferenceConfig,
    infer,
)
from langdepth.pipeline.selftest import SUITES, run_selftest
from langdepth.pipeline.visualize import visualize
from langdepth.scenes.dataset import read_dataset, write_dataset
from langdepth.scenes.generator import generate_samples
from langdepth.scenes.raster import read_ppm, write_pdr
from langdepth.scenes.types import CaptionDetail, GeneratorConfig
from langdepth.training.trainer import TrainConfig, train
from langdepth.utils.config import Config, section_from_mapping, worker_count
from langdepth.utils.errors import ConfigurationError, LangDepthError
from langdepth.utils.logger import logging as log
from langdepth.utils.logger import set_run_id, setup_logging


def build_parser() -> argparse.ArgumentParser:
    """
    Create the argument parser.

    Returns:
        The parser with one subparser per command.
    """
    parser = argparse.ArgumentParser(
        prog="langdepth",
        description="Language-conditioned diffusion depth estimation.",
        epilog="Config keys can be overridden as --section.key VALUE.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate a dataset")
    gen.add_argument("--out", required=True, help="dataset directory")

    trn = sub.add_parser("train", parents=[common], help="train a denoiser")
    trn.add_argument("--data", required=True, help="training dataset")
    trn.add_argument("--out", required=True, help="checkpoint directory")
    trn.add_argument("--resume", help="checkpoint to resume from")

    inf = sub.add_parser("infer", parents=[common], help="depth of an image")
    inf.add_argument("--checkpoint", help="model checkpoint")
    inf.add_argument("--image", required=True, help="input PPM")
    inf.add_argument("--caption", help="caption text (provided mode)")
    inf.add_argument("--image-id", help="noise stream key")
    inf.add_argument(
        "--out", required=True, help="output prefix (.pdr/.pgm/.ppm)"
    )

    evl = sub.add_parser("eval", parents=[common], help="evaluate a model")
    evl.add_argument("--checkpoint", help="model checkpoint")
    evl.add_argument("--data", required=True, help="evaluation dataset")
    evl.add_argument("--out", required=True, help="report directory")
    evl.add_argument("--visualize-dir", help="ground truth/pred images")

    abl = sub.add_parser("ablate", parents=[common], help="caption ablation")
    abl.add_argument("--checkpoint", help="model checkpoint")
    abl.add_argument("--data", required=True, help="evaluation dataset")
    abl.add_argument("--out", required=True, help="report directory")
    abl.add_argument(
        "--templates", nargs="+", help="prompt names (default: all)"
    )

    cnv = sub.add_parser(
        "converge", parents=[common], help="train with an eval curve"
    )
    cnv.add_argument("--data", required=True, help="training dataset")
    cnv.add_argument("--eval-data", required=True, help="held-out dataset")
    cnv.add_argument("--out", required=True, help="run directory")
    cnv.add_argument(
        "--interval", type=int, required=True, help="iterations per point"
    )
    cnv.add_argument(
        "--blank", action="store_true", help="train and evaluate uncaptioned"
    )

    sch = sub.add_parser("schedule", help="noise schedule tools")
    sch_sub = sch.add_subparsers(dest="action", required=True)
    dump = sch_sub.add_parser(
        "dump", parents=[common], help="print the schedule as CSV"
    )
    dump.add_argument("--T", type=int, dest="num_timesteps")
    dump.add_argument("--kind")
    dump.add_argument("--beta-start", type=float)
    dump.add_argument("--beta-end", type=float)

    slf = sub.add_parser("selftest", parents=[common], help="oracle suites")
    slf.add_argument("--suite", nargs="+", choices=sorted(SUITES))
    return parser


def split_overrides(
    parser: argparse.ArgumentParser, extra: Sequence[str]
) -> List[Tuple[str, str]]:
    """
    Turn leftover ``--section.key VALUE`` arguments into pairs.

    Anything else is a usage error (exit 2).
    """
    pairs: List[Tuple[str, str]] = []
    index = 0
    while index < len(extra):
        token = extra[index]
        if not token.startswith("--") or "." not in token:
            parser.error(f"unrecognized arguments: {' '.join(extra[index:])}")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            index += 1
            if index >= len(extra):
                parser.error(f"override {token} needs a value")
            value = extra[index]
        pairs.append((key, value))
        index += 1
    return pairs


class Settings:
    """Typed views of the loaded configuration."""

    def __init__(self, config: Config) -> None:
        self.config = config

    def section(self, cls: Any, name: str) -> Any:
        """Materialize one section as its dataclass."""
        return section_from_mapping(cls, self.config.get_config_of(name))

    @property
    def train(self) -> TrainConfig:
        """``train`` section."""
        return self.section(TrainConfig, "train")

    @property
    def inference(self) -> InferenceConfig:
        """``inference`` section."""
        return self.section(InferenceConfig, "inference")

    @property
    def evaluation(self) -> EvaluationConfig:
        """``evaluation`` section."""
        return self.section(EvaluationConfig, "evaluation")

    @property
    def workers(self) -> int:
        """Resolved worker count."""
        return worker_count(self.config)

    def load_model(
        self, checkpoint: Optional[str]
    ) -> Tuple[Denoiser, ScheduleConfig]:
        """Model and schedule config from the given or configured path."""
        path = checkpoint or self.inference.checkpoint
        if not path:
            raise ConfigurationError(
                "No checkpoint given (--checkpoint or inference.checkpoint)"
            )
        loaded = load_checkpoint(path)
        model = loaded.to_model(self.train.torch_dtype)
        model.eval()
        log.info(
            "[cli] Loaded %s (iteration %d)", path, loaded.iteration
        )
        return model, loaded.schedule


def cmd_gen(args: argparse.Namespace, settings: Settings) -> int:
    generator = settings.section(GeneratorConfig, "generator")
    dataset = dict(settings.config.get_config_of("dataset"))
    try:
        detail = CaptionDetail(dataset["caption_detail"])
    except ValueError as exc:
        raise ConfigurationError(
            f"Unknown caption detail: {dataset['caption_detail']}"
        ) from exc
    samples = generate_samples(
        generator,
        int(dataset["scenes"]),
        int(dataset["pairs"]),
        int(dataset["seed"]),
        detail,
        workers=settings.workers,
    )
    write_dataset(
        samples,
        args.out,
        int(dataset["seed"]),
        dict(settings.config.get_config_of("generator")),
    )
    return 0


def cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    set_run_id()
    _, reader = read_dataset(args.data)
    train(
        settings.train,
        settings.section(DenoiserConfig, "denoiser"),
        settings.section(ScheduleConfig, "schedule"),
        reader,
        args.out,
        vocabulary=reader.vocabulary,
        resume=args.resume,
    )
    return 0


def cmd_infer(args: argparse.Namespace, settings: Settings) -> int:
    inference = settings.inference
    if args.caption is not None:
        inference = replace(
            inference, caption_mode=PROVIDED, caption=args.caption
        )
    elif inference.caption_mode == DATASET:
        raise ConfigurationError(
            "infer has no dataset caption; pass --caption or set "
            "inference.caption_mode to blank or template:<name>"
        )
    model, schedule = settings.load_model(args.checkpoint)
    image = read_ppm(args.image)
    image_id = args.image_id or Path(args.image).stem
    depth = infer(
        image,
        inference.resolve_caption(),
        model,
        schedule.build(),
        inference.steps,
        inference.seed,
        image_id,
    )
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_pdr(depth.values.astype(np.float32), f"{prefix}.pdr")
    visualize(depth, f"{prefix}.pgm", f"{prefix}.ppm")
    log.info("[cli] Wrote %s.pdr/.pgm/.ppm", prefix)
    return 0


def cmd_eval(args: argparse.Namespace, settings: Settings) -> int:
    set_run_id()
    evaluation = settings.evaluation
    model, schedule = settings.load_model(args.checkpoint)
    _, reader = read_dataset(args.data)
    report = evaluate_run(
        reader,
        model,
        schedule.build(),
        settings.inference,
        method=evaluation.method,
        workers=settings.workers,
        output_dir=args.out,
        visualize_dir=args.visualize_dir or evaluation.visualize_dir,
        caption_dropout=settings.train.caption_dropout,
        vocabulary=reader.vocabulary,
        config=settings.config.as_dict(),
    )
    return 0 if report.record is not None else 3


def cmd_ablate(args: argparse.Namespace, settings: Settings) -> int:
    set_run_id()
    model, schedule = settings.load_model(args.checkpoint)
    _, reader = read_dataset(args.data)
    ablate(
        reader,
        model,
        schedule.build(),
        settings.inference,
        args.out,
        method=settings.evaluation.method,
        templates=args.templates,
        workers=settings.workers,
        caption_dropout=settings.train.caption_dropout,
        vocabulary=reader.vocabulary,
    )
    return 0


def cmd_converge(args: argparse.Namespace, settings: Settings) -> int:
    set_run_id()
    _, train_reader = read_dataset(args.data)
    _, eval_reader = read_dataset(args.eval_data)
    convergence_log(
        settings.train,
        settings.section(DenoiserConfig, "denoiser"),
        settings.section(ScheduleConfig, "schedule"),
        train_reader,
        eval_reader,
        args.interval,
        settings.inference,
        args.out,
        method=settings.evaluation.method,
        blank=args.blank,
        workers=settings.workers,
        vocabulary=train_reader.vocabulary,
    )
    return 0


def cmd_schedule(args: argparse.Namespace, settings: Settings) -> int:
    configured = settings.section(ScheduleConfig, "schedule")
    explicit = args.beta_start is not None or args.beta_end is not None
    steps = args.num_timesteps or configured.num_timesteps
    kind = args.kind or configured.kind
    if explicit:
        start = args.beta_start
        end = args.beta_end
        schedule = make_schedule(
            steps,
            kind,
            configured.beta_start if start is None else start,
            configured.beta_end if end is None else end,
        )
    else:
        schedule = ScheduleConfig(
            num_timesteps=steps,
            kind=kind,
            beta_start=configured.beta_start,
            beta_end=configured.beta_end,
            scale_with_steps=configured.scale_with_steps,
        ).build()
    sys.stdout.write(schedule.to_csv())
    return 0


def cmd_selftest(args: argparse.Namespace, settings: Settings) -> int:
    results = run_selftest(args.suite)
    for result in results:
        status = (
            colored("PASS", "green", attrs=["bold"])
            if result.passed
            else colored("FAIL", "red", attrs=["bold"])
        )
        print(
            f"{status} {result.name} ({result.seconds:.2f}s): "
            f"{result.detail}"
        )
    return 0 if all(r.passed for r in results) else 1


COMMANDS: Dict[str, Any] = {
    "gen": cmd_gen,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "converge": cmd_converge,
    "schedule": cmd_schedule,
    "selftest": cmd_selftest,
}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command.

    Args:
        argv: Arguments without the program name; ``sys.argv`` when None.

    Returns:
        The process exit code.
    """
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        overrides = split_overrides(parser, extra)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2

    try:
        config = Config(args.config)
        config.load()
        for key, value in overrides:
            config.set(key, value)
        setup_logging(config.get_config_of("logging"))
        return COMMANDS[args.command](args, Settings(config))
    except LangDepthError as exc:
        log.error("[cli] %s", exc)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        log.exception("[cli] Unexpected error: %s", exc)
        return 1
