import struct

import numpy as np
import pytest

from langdepth.scenes.raster import (
    image_from_pixels,
    pixels_from_image,
    read_pdr,
    read_ppm,
    write_pdr,
    write_pgm,
    write_ppm,
)
from langdepth.utils.errors import DataError


def test_pdr_preserves_float_bits(tmp_path):
    depth = np.random.default_rng(0).uniform(0, 10, (5, 7)).astype(np.float32)
    write_pdr(depth, tmp_path / "d.pdr")
    restored = read_pdr(tmp_path / "d.pdr")
    assert restored.dtype == np.float32
    assert restored.tobytes() == depth.tobytes()


def test_pdr_header_layout(tmp_path):
    write_pdr(np.ones((2, 3), dtype=np.uint8), tmp_path / "m.pdr")
    blob = (tmp_path / "m.pdr").read_bytes()
    assert blob[:4] == b"PDR1"
    assert blob[4:20] == struct.pack("<4I", 2, 3, 1, 1)
    assert len(blob) == 20 + 6


def test_truncated_pdr_raises(tmp_path):
    path = tmp_path / "d.pdr"
    write_pdr(np.zeros((4, 4), dtype=np.float32), path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(DataError) as excinfo:
        read_pdr(path)
    assert excinfo.value.path == str(path)


@pytest.mark.parametrize("dtype", [np.float64, np.int32])
def test_unsupported_pdr_dtype(tmp_path, dtype):
    with pytest.raises(DataError):
        write_pdr(np.zeros((2, 2), dtype=dtype), tmp_path / "x.pdr")


def test_ppm_is_8_bit(tmp_path):
    image = np.random.default_rng(1).random((6, 5, 3)).astype(np.float32)
    write_ppm(image, tmp_path / "i.ppm")
    restored = read_ppm(tmp_path / "i.ppm")
    assert restored.shape == (6, 5, 3)
    assert np.array_equal(restored, image_from_pixels(pixels_from_image(image)))


def test_pgm_is_not_an_rgb_ppm(tmp_path):
    write_pgm(np.zeros((4, 4), dtype=np.uint8), tmp_path / "g.pgm")
    with pytest.raises(DataError):
        read_ppm(tmp_path / "g.pgm")


def test_missing_files(tmp_path):
    with pytest.raises(DataError):
        read_pdr(tmp_path / "nope.pdr")
    with pytest.raises(DataError):
        read_ppm(tmp_path / "nope.ppm")
