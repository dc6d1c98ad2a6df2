import numpy as np
import pytest

from langdepth.metrics.depth import DepthMap, Space
from langdepth.pipeline.visualize import (
    CONSTANT_LEVEL,
    load_colormap,
    to_gray_levels,
    visualize,
)
from langdepth.scenes.raster import read_ppm
from langdepth.utils.errors import DataError


def test_gray_levels_span_the_range():
    values = np.array([[1.0, 2.0], [3.0, 5.0]])
    levels = to_gray_levels(DepthMap.from_arrays(values))
    assert levels.dtype == np.uint8
    assert levels[0, 0] == 0
    assert levels[1, 1] == 255
    assert levels[0, 1] == 64


def test_masked_pixels_are_black():
    values = np.array([[-1.0, 0.0], [1.0, 40.0]])
    mask = np.array([[True, True], [True, False]])
    depth = DepthMap(values, mask, Space.NORMALIZED)
    levels = to_gray_levels(depth)
    assert levels.tolist() == [[0, 128], [255, 0]]


def test_constant_map_is_mid_gray():
    depth = DepthMap.from_arrays(np.full((3, 3), 4.0))
    assert (to_gray_levels(depth) == CONSTANT_LEVEL).all()


def test_empty_mask_raises():
    depth = DepthMap.from_arrays(np.ones((2, 2)), np.zeros((2, 2)))
    with pytest.raises(DataError):
        to_gray_levels(depth)


def test_colormap_table():
    table = load_colormap()
    assert table.shape == (256, 3)
    assert table.dtype == np.uint8


def test_visualize_writes_identical_files(tmp_path):
    rng = np.random.default_rng(5)
    depth = DepthMap.from_arrays(rng.uniform(1.0, 9.0, size=(6, 7)))
    first = visualize(depth, tmp_path / "a.pgm", tmp_path / "a.ppm")
    second = visualize(depth, tmp_path / "b" / "b.pgm", tmp_path / "b.ppm")
    assert first.tobytes() == second.tobytes()
    assert (tmp_path / "a.pgm").read_bytes() == (
        tmp_path / "b" / "b.pgm"
    ).read_bytes()
    assert (tmp_path / "a.ppm").read_bytes() == (
        tmp_path / "b.ppm"
    ).read_bytes()
    color = read_ppm(tmp_path / "a.ppm")
    assert color.shape == (6, 7, 3)


def test_visualize_without_color(tmp_path):
    depth = DepthMap.from_arrays(np.arange(1.0, 5.0).reshape(2, 2))
    visualize(depth, tmp_path / "only.pgm")
    assert (tmp_path / "only.pgm").exists()
    assert not (tmp_path / "only.ppm").exists()
