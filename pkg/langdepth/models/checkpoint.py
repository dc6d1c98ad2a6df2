"""
This module contains the PDCK1 checkpoint format.

Layout: the magic ``PDCK1``, a little-endian u64 header length, a UTF-8
JSON header, then float32 little-endian payloads. The header holds the
format version, the model and schedule config, the iteration, the
optimizer step counter and a tensor directory ``name -> {shape, offset,
length}`` with offsets relative to the first payload byte.

Optimizer moments are stored as ``optimizer.exp_avg.<name>`` and
``optimizer.exp_avg_sq.<name>``.
"""

import dataclasses
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch

from langdepth.diffusion.schedule import ScheduleConfig
from langdepth.utils.config import section_from_mapping
from langdepth.utils.errors import ConfigurationError, DataError
from langdepth.utils.logger import logging as log

from .denoiser import Denoiser, DenoiserConfig

MAGIC = b"PDCK1"
FORMAT_VERSION = 1
EXP_AVG = "optimizer.exp_avg."
EXP_AVG_SQ = "optimizer.exp_avg_sq."
_LENGTH = struct.Struct("<Q")


@dataclass
class Checkpoint:
    """Everything needed to rebuild a model and resume its optimizer."""

    denoiser: DenoiserConfig
    schedule: ScheduleConfig
    iteration: int
    optimizer_step: int = 0
    tensors: Dict[str, torch.Tensor] = field(default_factory=dict)

    @classmethod
    def capture(
        cls,
        model: Denoiser,
        schedule: ScheduleConfig,
        iteration: int,
        optimizer: Optional[torch.optim.Optimizer] = None,
    ) -> "Checkpoint":
        """
        Snapshot a model and, optionally, its Adam state.

        Args:
            model: The network.
            schedule: Schedule config the model is trained with.
            iteration: Completed iterations.
            optimizer: Adam optimizer over ``model.parameters()``.

        Returns:
            The snapshot (tensors are float32 copies).
        """
        named = list(model.named_parameters())
        tensors = {
            name: p.detach().to(torch.float32).clone() for name, p in named
        }
        step = 0
        if optimizer is not None:
            moments_avg, moments_sq = {}, {}
            for name, param in named:
                state = optimizer.state.get(param)
                if not state:
                    continue
                step = int(state["step"])
                moments_avg[EXP_AVG + name] = state["exp_avg"]
                moments_sq[EXP_AVG_SQ + name] = state["exp_avg_sq"]
            for key, value in {**moments_avg, **moments_sq}.items():
                tensors[key] = value.detach().to(torch.float32).clone()
        return cls(
            denoiser=model.config,
            schedule=schedule,
            iteration=iteration,
            optimizer_step=step,
            tensors=tensors,
        )

    @property
    def parameters(self) -> Dict[str, torch.Tensor]:
        """Model tensors only."""
        return {
            k: v
            for k, v in self.tensors.items()
            if not k.startswith("optimizer.")
        }

    def to_model(self, dtype: torch.dtype = torch.float32) -> Denoiser:
        """Rebuild the network with the stored weights."""
        model = Denoiser(self.denoiser, self.schedule.num_timesteps)
        expected = {name for name, _ in model.named_parameters()}
        if expected != set(self.parameters):
            raise DataError(
                "Checkpoint tensors do not match the stored architecture"
            )
        with torch.no_grad():
            for name, param in model.named_parameters():
                stored = self.tensors[name]
                if stored.shape != param.shape:
                    raise DataError(f"Shape mismatch for tensor {name}")
                param.copy_(stored)
        return model.to(dtype)

    def restore_optimizer(
        self, optimizer: torch.optim.Optimizer, model: Denoiser
    ) -> None:
        """Load the stored Adam moments and step counter into optimizer."""
        if self.optimizer_step == 0:
            return
        for name, param in model.named_parameters():
            try:
                avg = self.tensors[EXP_AVG + name]
                avg_sq = self.tensors[EXP_AVG_SQ + name]
            except KeyError as exc:
                raise DataError(
                    f"Missing optimizer moments for {name}"
                ) from exc
            optimizer.state[param] = {
                "step": torch.tensor(float(self.optimizer_step)),
                "exp_avg": avg.to(param.dtype).clone(),
                "exp_avg_sq": avg_sq.to(param.dtype).clone(),
            }

    def header(self) -> Dict[str, Any]:
        """JSON header without the tensor directory."""
        return {
            "format_version": FORMAT_VERSION,
            "config": {
                "denoiser": self.denoiser.to_json(),
                "schedule": dataclasses.asdict(self.schedule),
            },
            "iteration": self.iteration,
            "optimizer_step": self.optimizer_step,
        }


def write_checkpoint(
    checkpoint: Checkpoint, path: Union[str, Path]
) -> Path:
    """
    Write a checkpoint atomically (temporary file, then rename).

    Payloads follow the insertion order of ``checkpoint.tensors``.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    directory: Dict[str, Dict[str, Any]] = {}
    payloads = []
    offset = 0
    for name, tensor in checkpoint.tensors.items():
        data = tensor.detach().to(torch.float32).contiguous().numpy()
        raw = data.astype("<f4", copy=False).tobytes()
        directory[name] = {
            "shape": list(tensor.shape),
            "offset": offset,
            "length": len(raw),
        }
        payloads.append(raw)
        offset += len(raw)
    header = checkpoint.header()
    header["tensors"] = directory
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")

    tmp = target.with_name(target.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(_LENGTH.pack(len(encoded)))
        f.write(encoded)
        for raw in payloads:
            f.write(raw)
    os.replace(tmp, target)
    log.debug(
        "[checkpoint] Wrote %s (iteration %d)", target, checkpoint.iteration
    )
    return target


def save_checkpoint(
    model: Denoiser,
    optimizer: Optional[torch.optim.Optimizer],
    iteration: int,
    path: Union[str, Path],
    schedule: ScheduleConfig,
) -> Path:
    """Snapshot and write in one call."""
    snapshot = Checkpoint.capture(model, schedule, iteration, optimizer)
    return write_checkpoint(snapshot, path)


def _read_header(blob: bytes, path: Path) -> Tuple[Dict[str, Any], int]:
    prefix = len(MAGIC) + _LENGTH.size
    if len(blob) < prefix or blob[: len(MAGIC)] != MAGIC:
        raise DataError("Not a PDCK1 checkpoint", path)
    (length,) = _LENGTH.unpack_from(blob, len(MAGIC))
    if prefix + length > len(blob):
        raise DataError("Checkpoint header is truncated", path)
    try:
        header = json.loads(blob[prefix : prefix + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError("Checkpoint header is not valid JSON", path) from exc
    if not isinstance(header, dict):
        raise DataError("Checkpoint header must be an object", path)
    return header, prefix + length


def _check_directory(
    directory: Dict[str, Any], payload_size: int, path: Path
) -> None:
    spans = []
    for name, entry in directory.items():
        try:
            shape = [int(s) for s in entry["shape"]]
            offset, length = int(entry["offset"]), int(entry["length"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"Bad directory entry for {name}", path) from exc
        if length != 4 * int(np.prod(shape, dtype=np.int64)):
            raise DataError(f"Length of {name} does not match shape", path)
        if offset < 0 or offset + length > payload_size:
            raise DataError(f"Tensor {name} lies outside the file", path)
        spans.append((offset, offset + length, name))
    spans.sort()
    for (_, end, first), (start, _, second) in zip(spans, spans[1:]):
        if start < end:
            raise DataError(f"Tensors {first} and {second} overlap", path)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read and validate a checkpoint.

    Args:
        path: PDCK1 file.

    Returns:
        The checkpoint, with tensors in payload order.
    """
    source = Path(path)
    try:
        blob = source.read_bytes()
    except FileNotFoundError as exc:
        raise DataError("Checkpoint not found", source) from exc
    header, start = _read_header(blob, source)
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(
            f"Unsupported checkpoint format version "
            f"{header.get('format_version')!r}",
            source,
        )
    try:
        config = header["config"]
        directory = header["tensors"]
        denoiser = section_from_mapping(DenoiserConfig, config["denoiser"])
        schedule = section_from_mapping(ScheduleConfig, config["schedule"])
        iteration = int(header["iteration"])
        optimizer_step = int(header["optimizer_step"])
    except (
        ConfigurationError,
        KeyError,
        TypeError,
        ValueError,
    ) as exc:
        raise DataError(f"Malformed checkpoint header: {exc}", source) from exc
    _check_directory(directory, len(blob) - start, source)

    tensors: Dict[str, torch.Tensor] = {}
    ordered = sorted(directory.items(), key=lambda item: item[1]["offset"])
    for name, entry in ordered:
        values = np.frombuffer(
            blob,
            dtype="<f4",
            count=entry["length"] // 4,
            offset=start + entry["offset"],
        )
        array = values.reshape(entry["shape"]).astype(np.float32)
        tensors[name] = torch.from_numpy(array)
    return Checkpoint(
        denoiser=denoiser,
        schedule=schedule,
        iteration=iteration,
        optimizer_step=optimizer_step,
        tensors=tensors,
    )
