"""
This module contains depth visualization: min-max normalization to 8 bits,
a grayscale PGM and an optional color PPM through the shipped colormap.
"""

import json
from functools import lru_cache
from pathlib import Path
from typing import Optional, Union

import numpy as np

from langdepth.metrics.depth import DepthMap
from langdepth.scenes.raster import write_pgm, write_rgb_ppm
from langdepth.utils.errors import DataError

COLORMAP_PATH = Path(__file__).parent.parent / "data" / "colormap.json"
CONSTANT_LEVEL = 128


@lru_cache(maxsize=1)
def load_colormap(path: Optional[str] = None) -> np.ndarray:
    """The 256 x 3 uint8 lookup table."""
    source = Path(path) if path is not None else COLORMAP_PATH
    try:
        with open(source, "r", encoding="utf-8") as f:
            entries = json.load(f)["entries"]
    except (FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        raise DataError("Cannot read colormap", source) from exc
    table = np.asarray(entries, dtype=np.uint8)
    if table.shape != (256, 3):
        raise DataError(f"Colormap must be 256 x 3, got {table.shape}")
    return table


def to_gray_levels(depth: DepthMap) -> np.ndarray:
    """
    Min-max normalize the masked values to 0..255.

    A constant map becomes uniform 128; pixels outside the mask are 0.
    """
    mask = depth.mask.astype(bool)
    valid = depth.valid_values
    if valid.size == 0:
        raise DataError("Cannot visualize a depth map with an empty mask")
    levels = np.zeros(depth.values.shape, dtype=np.uint8)
    low, high = float(valid.min()), float(valid.max())
    if high == low:
        levels[mask] = CONSTANT_LEVEL
        return levels
    scaled = np.rint((depth.values - low) / (high - low) * 255.0)
    levels[mask] = np.clip(scaled, 0, 255).astype(np.uint8)[mask]
    return levels


def visualize(
    depth: DepthMap,
    pgm_path: Union[str, Path],
    ppm_path: Optional[Union[str, Path]] = None,
) -> np.ndarray:
    """
    Write a depth map as images.

    Args:
        depth: Depth in any space.
        pgm_path: Grayscale output (P5).
        ppm_path: Optional color output (P6).

    Returns:
        The gray levels written.
    """
    levels = to_gray_levels(depth)
    Path(pgm_path).parent.mkdir(parents=True, exist_ok=True)
    write_pgm(levels, pgm_path)
    if ppm_path is not None:
        Path(ppm_path).parent.mkdir(parents=True, exist_ok=True)
        write_rgb_ppm(load_colormap()[levels], ppm_path)
    return levels
