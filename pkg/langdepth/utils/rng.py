"""
Deterministic random streams.

Every stream is ``numpy.random.Generator(PCG64(SeedSequence(entropy)))``
where ``entropy = [master_seed, key_1, key_2, ...]``. Integer keys enter the
entropy as-is; string keys are mixed in as the first 8 bytes (little endian)
of their BLAKE2b digest so the mapping does not depend on ``PYTHONHASHSEED``.
"""

import hashlib
from typing import List, Union

import numpy as np
import torch

Key = Union[int, str]


def _key_to_int(key: Key) -> int:
    if isinstance(key, bool) or not isinstance(key, (int, str)):
        raise TypeError(f"stream keys must be int or str, got {key!r}")
    if isinstance(key, int):
        if key < 0:
            raise ValueError(f"stream keys must be non-negative: {key}")
        return key
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream_entropy(master_seed: int, *keys: Key) -> List[int]:
    """Return the SeedSequence entropy for ``(master_seed, *keys)``."""
    return [_key_to_int(master_seed)] + [_key_to_int(k) for k in keys]


def derive_rng(master_seed: int, *keys: Key) -> np.random.Generator:
    """
    Derive an independent random stream.

    Args:
        master_seed: The run's master seed.
        *keys: Stream path, e.g. ``("scene", 12)`` or ``("train", 40, 3)``.

    Returns:
        A fresh generator; equal arguments give bit-identical streams.
    """
    sequence = np.random.SeedSequence(stream_entropy(master_seed, *keys))
    return np.random.Generator(np.random.PCG64(sequence))


def standard_normal(
    rng: np.random.Generator,
    shape: tuple,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Draw N(0, I) noise from a numpy stream as a torch tensor."""
    draw = rng.standard_normal(size=shape)
    return torch.from_numpy(draw).to(dtype)
