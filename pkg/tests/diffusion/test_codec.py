import numpy as np
import pytest
import torch

from langdepth.diffusion.codec import (
    Provenance,
    decode,
    depth_to_model,
    encode,
    image_to_model,
    model_to_depth,
)
from langdepth.utils.errors import NumericError, ShapeError


def test_encode_layout():
    raster = np.arange(4 * 4 * 3, dtype=np.float64).reshape(4, 4, 3)
    latent = encode(raster, Provenance.IMAGE)
    assert latent.data.shape == (2, 2, 12)
    assert latent.raster_channels == 3
    # latent[i, j, c*f*f + a*f + b] == raster[i*f + a, j*f + b, c]
    assert latent.data[1, 0, 2 * 4 + 1 * 2 + 0] == raster[3, 0, 2]


def test_decode_inverts_encode():
    raster = np.random.default_rng(0).standard_normal((8, 6, 1))
    assert np.array_equal(decode(encode(raster)), raster)


def test_codec_is_linear_and_preserves_norm():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2, 4, 4, 1))
    combined = encode(2.0 * a - b).data
    assert np.allclose(combined, 2.0 * encode(a).data - encode(b).data)
    assert np.linalg.norm(encode(a).data) == pytest.approx(np.linalg.norm(a))


def test_indivisible_raster():
    with pytest.raises(ShapeError):
        encode(np.zeros((5, 4)))


def test_non_finite_raster():
    raster = np.zeros((4, 4))
    raster[0, 0] = np.nan
    with pytest.raises(NumericError):
        encode(raster)


def test_channel_mismatch():
    with pytest.raises(ShapeError):
        decode(np.zeros((2, 2, 8)), channels=1)


def test_model_layout_shapes():
    images = np.zeros((2, 8, 8, 3), dtype=np.float32)
    assert tuple(image_to_model(images).shape) == (2, 12, 4, 4)
    depths = np.random.default_rng(2).standard_normal((2, 8, 8))
    batch = depth_to_model(depths, torch.float64)
    assert tuple(batch.shape) == (2, 4, 4, 4)
    assert np.array_equal(model_to_depth(batch), depths)


def test_images_are_rescaled():
    images = np.ones((1, 4, 4, 3), dtype=np.float32)
    assert bool((image_to_model(images) == 1.0).all())
    assert bool((image_to_model(images * 0) == -1.0).all())
