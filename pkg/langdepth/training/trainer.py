"""
This module contains the optimization loop: per-sample noising, the
epsilon/v regression loss, warmup plus exponential learning-rate decay,
gradient accumulation, Adam, checkpointing and the training log.
"""

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Optional,
    Sequence,
    TextIO,
    Tuple,
    Union,
)

import numpy as np
import torch

from langdepth.diffusion.codec import depth_to_model, image_to_model
from langdepth.diffusion.schedule import (
    NoiseSchedule,
    ScheduleConfig,
    marginal_sample,
    v_target,
)
from langdepth.metrics.depth import DepthMap, normalize_depth
from langdepth.models.checkpoint import load_checkpoint, save_checkpoint
from langdepth.models.denoiser import (
    Denoiser,
    DenoiserConfig,
    Parameterization,
    build_denoiser,
    gradient,
)
from langdepth.models.tokenizer import (
    Vocabulary,
    default_vocabulary,
    tokenize,
)
from langdepth.scenes.captions import horizontal_flip
from langdepth.scenes.types import Sample
from langdepth.utils.errors import ConfigurationError, NumericError
from langdepth.utils.logger import logging as log
from langdepth.utils.rng import derive_rng, standard_normal

LOG_HEADER = ("iteration", "loss", "lr", "seconds", "val_delta1", "val_absrel")
LOG_NAME = "train_log.csv"
FINAL_NAME = "final.pdck"

DTYPES = {"float32": torch.float32, "float64": torch.float64}

Validation = Callable[[Denoiser, int], Tuple[float, float]]


@dataclass(frozen=True)
class TrainConfig:
    """``train`` config section."""

    iterations: int = 3000
    micro_batch: int = 2
    accumulation: int = 8
    lr0: float = 3e-5
    warmup_steps: int = 100
    decay_horizon: int = 25000
    lr_floor: float = 0.01
    flip_probability: float = 0.5
    caption_dropout: float = 0.1
    seed: int = 0
    checkpoint_interval: int = 50
    validation_interval: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    dtype: str = "float32"

    def __post_init__(self) -> None:
        for name in ("flip_probability", "caption_dropout"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1]: {value}")
        if self.accumulation < 1 or self.micro_batch < 1:
            raise ConfigurationError("accumulation and micro_batch >= 1")
        if self.iterations < 0 or self.warmup_steps < 0:
            raise ConfigurationError("iterations and warmup_steps >= 0")
        if self.decay_horizon <= self.warmup_steps:
            raise ConfigurationError("decay_horizon must exceed warmup_steps")
        if not 0.0 < self.lr_floor <= 1.0 or self.lr0 <= 0:
            raise ConfigurationError("Need lr0 > 0 and lr_floor in (0, 1]")
        if self.checkpoint_interval < 1 or self.validation_interval < 0:
            raise ConfigurationError(
                "checkpoint_interval >= 1 and validation_interval >= 0"
            )
        if self.dtype not in DTYPES:
            raise ConfigurationError(f"Unsupported dtype: {self.dtype}")

    @property
    def torch_dtype(self) -> torch.dtype:
        """Parameter and activation dtype."""
        return DTYPES[self.dtype]


def lr_at(iteration: int, config: TrainConfig) -> float:
    """
    Learning rate for a 0-based iteration.

    Linear warmup to ``lr0`` over ``warmup_steps``, then exponential decay
    reaching ``lr0 * lr_floor`` at ``decay_horizon``, constant afterwards.
    """
    if iteration < 0:
        raise ConfigurationError(f"Iteration must be >= 0: {iteration}")
    warmup, horizon = config.warmup_steps, config.decay_horizon
    if iteration < warmup:
        return config.lr0 * (iteration + 1) / warmup
    if iteration > horizon:
        return config.lr0 * config.lr_floor
    progress = (iteration - warmup) / (horizon - warmup)
    return config.lr0 * config.lr_floor**progress


@dataclass(frozen=True)
class TrainingBatch:
    """Model-ready tensors for one micro-batch."""

    x_latent: torch.Tensor
    z0: torch.Tensor
    tokens: torch.Tensor
    t: torch.Tensor
    eps: torch.Tensor


def prepare_batch(
    samples: Sequence[Sample],
    rngs: Sequence[np.random.Generator],
    schedule: NoiseSchedule,
    max_tokens: int,
    flip_probability: float = 0.0,
    caption_dropout: float = 0.0,
    vocabulary: Optional[Vocabulary] = None,
    dtype: torch.dtype = torch.float32,
) -> TrainingBatch:
    """
    Turn samples into a training batch.

    Each sample consumes its own stream in a fixed order: flip, caption
    dropout, timestep, noise.

    Args:
        samples: The micro-batch.
        rngs: One random stream per sample.
        schedule: Noise schedule (for T).
        max_tokens: Token sequence length of the model.
        flip_probability: Chance of a caption-aware horizontal flip.
        caption_dropout: Chance of replacing the caption by the blank one.
        vocabulary: Token table; the shipped one when None.
        dtype: Tensor dtype.

    Returns:
        The batch.
    """
    if not samples:
        raise ConfigurationError("A training batch needs at least one sample")
    vocabulary = vocabulary or default_vocabulary()
    images, depths, token_rows, steps, noises = [], [], [], [], []
    for sample, rng in zip(samples, rngs, strict=True):
        if rng.random() < flip_probability:
            sample = horizontal_flip(sample, vocabulary)
        caption = "" if rng.random() < caption_dropout else sample.caption
        normalized = normalize_depth(
            DepthMap.from_arrays(sample.depth, sample.mask)
        )
        images.append(sample.image)
        depths.append(normalized.depth.values)
        token_rows.append(tokenize(caption, vocabulary, max_tokens).ids)
        steps.append(int(rng.integers(1, schedule.num_timesteps + 1)))
        height, width = sample.depth.shape
        noises.append(standard_normal(rng, (height, width), torch.float64))

    z0 = depth_to_model(np.stack(depths), dtype)
    # Per-pixel N(0, 1) draws stay N(0, I) under the codec permutation.
    eps = depth_to_model(torch.stack(noises).numpy(), dtype)
    return TrainingBatch(
        x_latent=image_to_model(np.stack(images), dtype),
        z0=z0,
        tokens=torch.tensor(token_rows, dtype=torch.long),
        t=torch.tensor(steps, dtype=torch.long),
        eps=eps,
    )


def training_loss(
    model: Denoiser, batch: TrainingBatch, schedule: NoiseSchedule
) -> torch.Tensor:
    """
    Mean squared error between prediction and target.

    The target is the noise for epsilon models and
    ``v = sqrt(ab) eps - sqrt(1 - ab) z0`` for v models.
    """
    z_t = marginal_sample(batch.z0, batch.t, batch.eps, schedule)
    if model.parameterization is Parameterization.V:
        target = v_target(batch.z0, batch.eps, batch.t, schedule)
    else:
        target = batch.eps
    prediction = model(z_t, batch.x_latent, batch.t, batch.tokens)
    loss = torch.mean((prediction - target) ** 2)
    if not bool(torch.isfinite(loss)):
        raise NumericError("Training loss is not finite", tensor="loss")
    return loss


def build_optimizer(model: Denoiser, config: TrainConfig) -> torch.optim.Adam:
    """Adam over every parameter, single-tensor implementation."""
    return torch.optim.Adam(
        model.parameters(),
        lr=config.lr0,
        betas=(config.adam_beta1, config.adam_beta2),
        eps=config.adam_eps,
        foreach=False,
    )


def adam_step(
    model: Denoiser,
    optimizer: torch.optim.Optimizer,
    grads: Dict[str, torch.Tensor],
    lr: float,
) -> None:
    """
    Apply one bias-corrected Adam update in place.

    Args:
        model: The network owning the parameters.
        optimizer: Adam over ``model.parameters()``.
        grads: Gradient per parameter name.
        lr: Learning rate for this step.
    """
    for name, param in model.named_parameters():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ConfigurationError(f"Gradient shape mismatch for {name}")
        if not bool(torch.isfinite(grad).all()):
            raise NumericError("Non-finite gradient", tensor=name)
        param.grad = grad.detach().to(param.dtype).clone()
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.step()
    optimizer.zero_grad(set_to_none=True)


@dataclass(frozen=True)
class TrainLogRecord:
    """One training log row."""

    iteration: int
    loss: float
    lr: float
    seconds: float
    val_delta1: Optional[float] = None
    val_absrel: Optional[float] = None

    def as_row(self) -> List[str]:
        """CSV cells; missing validation values are empty."""
        return [
            str(self.iteration),
            repr(self.loss),
            repr(self.lr),
            f"{self.seconds:.3f}",
            "" if self.val_delta1 is None else repr(self.val_delta1),
            "" if self.val_absrel is None else repr(self.val_absrel),
        ]


@dataclass
class TrainResult:
    """Outcome of :meth:`Trainer.train`."""

    model: Denoiser
    checkpoint: Path
    records: List[TrainLogRecord] = field(default_factory=list)


class Trainer:
    """
    Single-writer training loop over an indexable dataset.

    Sample slot ``k`` of iteration ``i`` draws everything it needs (dataset
    index, flip, caption dropout, timestep, noise) from the stream
    ``(seed, "train", i, k)``, so runs are reproducible and resumable.
    """

    def __init__(
        self,
        config: TrainConfig,
        denoiser: DenoiserConfig,
        schedule: ScheduleConfig,
        dataset: Sequence[Sample],
        output_dir: Union[str, Path],
        vocabulary: Optional[Vocabulary] = None,
        validation: Optional[Validation] = None,
    ) -> None:
        """
        Initialize the trainer.

        Args:
            config: Optimization settings.
            denoiser: Architecture of a fresh model.
            schedule: Noise schedule settings.
            dataset: Training samples (e.g. a SampleReader).
            output_dir: Where checkpoints and the log go.
            vocabulary: Token table; the shipped one when None.
            validation: Callback returning (delta1, absrel) for a model.
        """
        if len(dataset) == 0:
            raise ConfigurationError("Cannot train on an empty dataset")
        self.config = config
        self.denoiser_config = denoiser
        self.schedule_config = schedule
        self.schedule = schedule.build()
        self.dataset = dataset
        self.output_dir = Path(output_dir)
        self.vocabulary = vocabulary or default_vocabulary()
        self.validation = validation
        if denoiser.vocab_size < len(self.vocabulary):
            raise ConfigurationError(
                f"vocab_size {denoiser.vocab_size} is smaller than the "
                f"vocabulary ({len(self.vocabulary)} tokens)"
            )

    def checkpoint_path(self, iteration: int) -> Path:
        """Interval checkpoint file for a completed-iteration count."""
        return self.output_dir / f"checkpoint-{iteration:06d}.pdck"

    def micro_batch(
        self, iteration: int, index: int, model: Denoiser
    ) -> TrainingBatch:
        """Assemble micro-batch ``index`` of ``iteration``."""
        config = self.config
        first = index * config.micro_batch
        rngs = [
            derive_rng(config.seed, "train", iteration, slot)
            for slot in range(first, first + config.micro_batch)
        ]
        samples = [
            self.dataset[int(rng.integers(len(self.dataset)))] for rng in rngs
        ]
        return prepare_batch(
            samples,
            rngs,
            self.schedule,
            model.config.max_tokens,
            config.flip_probability,
            config.caption_dropout,
            self.vocabulary,
            model.dtype,
        )

    def step_gradients(
        self, iteration: int, model: Denoiser
    ) -> Tuple[Dict[str, torch.Tensor], float]:
        """Gradients and loss averaged over the accumulation steps."""
        accumulation = self.config.accumulation
        total: Dict[str, torch.Tensor] = {}
        loss_sum = 0.0
        for index in range(accumulation):
            batch = self.micro_batch(iteration, index, model)
            losses: List[float] = []

            def closure() -> torch.Tensor:
                loss = training_loss(model, batch, self.schedule)
                losses.append(float(loss.detach()))
                return loss

            grads = gradient(model, closure)
            loss_sum += losses[0]
            for name, grad in grads.items():
                total[name] = total[name] + grad if name in total else grad
        averaged = {name: g / accumulation for name, g in total.items()}
        return averaged, loss_sum / accumulation

    def _start(
        self, resume: Optional[Union[str, Path]]
    ) -> Tuple[Denoiser, torch.optim.Adam, int]:
        dtype = self.config.torch_dtype
        if resume is None:
            model = build_denoiser(
                self.denoiser_config,
                self.schedule.num_timesteps,
                derive_rng(self.config.seed, "init"),
                dtype,
            )
            return model, build_optimizer(model, self.config), 0
        checkpoint = load_checkpoint(resume)
        if checkpoint.schedule != self.schedule_config:
            raise ConfigurationError(
                "Checkpoint schedule differs from the configured schedule"
            )
        model = checkpoint.to_model(dtype)
        optimizer = build_optimizer(model, self.config)
        checkpoint.restore_optimizer(optimizer, model)
        log.info(
            "[trainer] Resuming from %s at iteration %d",
            resume,
            checkpoint.iteration,
        )
        return model, optimizer, checkpoint.iteration

    def _open_log(self, start: int) -> Tuple[TextIO, Any]:
        path = self.output_dir / LOG_NAME
        kept: List[List[str]] = []
        if start > 0 and path.is_file():
            with open(path, "r", newline="", encoding="utf-8") as f:
                rows = list(csv.reader(f))[1:]
            kept = [row for row in rows if row and int(row[0]) <= start]
        handle = open(path, "w", newline="", encoding="utf-8")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(LOG_HEADER)
        writer.writerows(kept)
        return handle, writer

    def _validate(
        self, model: Denoiser, completed: int
    ) -> Tuple[Optional[float], Optional[float]]:
        config = self.config
        if self.validation is None or config.validation_interval == 0:
            return None, None
        due = completed % config.validation_interval == 0
        if not due and completed != config.iterations:
            return None, None
        with torch.no_grad():
            return self.validation(model, completed)

    def train(self, resume: Optional[Union[str, Path]] = None) -> TrainResult:
        """
        Run the accumulate-then-step loop to ``config.iterations``.

        Checkpoints are written every ``checkpoint_interval`` completed
        iterations and once more at the end (``final.pdck``). A numeric
        failure aborts the run and leaves earlier checkpoints untouched.

        Args:
            resume: Checkpoint to continue from.

        Returns:
            The trained model, the final checkpoint path and the log rows.
        """
        config = self.config
        self.output_dir.mkdir(parents=True, exist_ok=True)
        model, optimizer, start = self._start(resume)
        if start > config.iterations:
            raise ConfigurationError(
                f"Checkpoint iteration {start} exceeds the configured "
                f"{config.iterations} iterations"
            )
        log.info(
            "[trainer] Training iterations %d..%d (micro-batch %d x %d)",
            start,
            config.iterations,
            config.micro_batch,
            config.accumulation,
        )
        records: List[TrainLogRecord] = []
        handle, writer = self._open_log(start)
        began = time.perf_counter()
        try:
            for iteration in range(start, config.iterations):
                lr = lr_at(iteration, config)
                grads, loss = self.step_gradients(iteration, model)
                adam_step(model, optimizer, grads, lr)
                completed = iteration + 1
                val_delta1, val_absrel = self._validate(model, completed)
                record = TrainLogRecord(
                    iteration=completed,
                    loss=loss,
                    lr=lr,
                    seconds=time.perf_counter() - began,
                    val_delta1=val_delta1,
                    val_absrel=val_absrel,
                )
                records.append(record)
                writer.writerow(record.as_row())
                handle.flush()
                log.debug(
                    "[trainer] iteration %d loss %.6f lr %.3g",
                    completed,
                    loss,
                    lr,
                    extra={"metrics": {"loss": loss, "lr": lr}},
                )
                if completed % config.checkpoint_interval == 0:
                    save_checkpoint(
                        model,
                        optimizer,
                        completed,
                        self.checkpoint_path(completed),
                        self.schedule_config,
                    )
        except NumericError:
            log.error(
                "[trainer] Numeric failure; last good checkpoint kept in %s",
                self.output_dir,
            )
            raise
        finally:
            handle.close()
        final = save_checkpoint(
            model,
            optimizer,
            max(start, config.iterations),
            self.output_dir / FINAL_NAME,
            self.schedule_config,
        )
        log.info("[trainer] Finished; final checkpoint %s", final)
        return TrainResult(model=model, checkpoint=final, records=records)


def train(
    config: TrainConfig,
    denoiser: DenoiserConfig,
    schedule: ScheduleConfig,
    dataset: Sequence[Sample],
    output_dir: Union[str, Path],
    vocabulary: Optional[Vocabulary] = None,
    validation: Optional[Validation] = None,
    resume: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """Convenience wrapper around :class:`Trainer`."""
    trainer = Trainer(
        config, denoiser, schedule, dataset, output_dir, vocabulary, validation
    )
    return trainer.train(resume)
