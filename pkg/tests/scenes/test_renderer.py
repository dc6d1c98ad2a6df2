import numpy as np
import pytest

from langdepth.scenes.renderer import render
from langdepth.scenes.types import (
    AmbiguityTag,
    CameraMode,
    CameraSpec,
    ObjectSpec,
    SceneSpec,
    Shape,
)
from langdepth.utils.errors import ConfigurationError


def _camera(mode=CameraMode.ORTHOGRAPHIC, size=16):
    return CameraSpec(mode=mode, height=size, width=size, far_plane=10.0)


def _square(x=0.0, z=5.0, half=1.0, albedo=0.6):
    return ObjectSpec(Shape.RECTANGLE, (x, 0.0, z), half, albedo, "cube")


def test_orthographic_rectangle_depth_and_shading():
    scene = SceneSpec(objects=(_square(),), camera=_camera())
    image, depth, mask = render(scene)

    # 0.25 m pixels: columns/rows 4..11 have centers within 1 m of the axis
    covered = np.zeros((16, 16), dtype=bool)
    covered[4:12, 4:12] = True
    assert depth.dtype == np.float32
    assert np.all(depth[covered] == 5.0)
    assert np.all(depth[~covered] == 10.0)
    assert np.all(mask == 1)
    assert image.shape == (16, 16, 3)
    assert image[8, 8, 0] == pytest.approx(153 / 255)
    assert np.all(image[~covered] == 0.0)


def test_empty_scene_is_far_background():
    scene = SceneSpec(objects=(), camera=_camera(), background_albedo=0.2)
    image, depth, mask = render(scene)
    assert np.all(depth == 10.0)
    assert np.all(mask == 1)
    assert np.all(image == np.float32(51) / np.float32(255))


def test_nearest_hit_wins():
    scene = SceneSpec(
        objects=(_square(z=8.0, half=1.5), _square(z=3.0, half=0.5)),
        camera=_camera(),
    )
    _, depth, _ = render(scene)
    assert depth[8, 8] == 3.0
    assert depth[4, 4] == 8.0


def test_objects_beyond_far_plane_are_ignored():
    scene = SceneSpec(objects=(_square(z=12.0),), camera=_camera())
    _, depth, _ = render(scene)
    assert np.all(depth == 10.0)


def test_perspective_sphere_front_surface():
    sphere = ObjectSpec(Shape.SPHERE, (0.0, 0.0, 5.0), 1.0, 0.8, "ball")
    scene = SceneSpec(
        objects=(sphere,), camera=_camera(CameraMode.PERSPECTIVE, 32)
    )
    _, depth, _ = render(scene)
    assert 4.0 < depth.min() < 4.01
    assert depth[0, 0] == 10.0


def test_ambiguity_images_do_not_depend_on_depth():
    near, far = _square(x=-1.0, z=2.0, half=0.5), _square(1.0, 8.0, 0.5)
    swapped = (_square(-1.0, 8.0, 0.5), _square(1.0, 2.0, 0.5))
    a = SceneSpec((near, far), _camera(), ambiguity=AmbiguityTag.LEFT_NEAR)
    b = SceneSpec(swapped, _camera(), ambiguity=AmbiguityTag.RIGHT_NEAR)
    image_a, depth_a, _ = render(a)
    image_b, depth_b, _ = render(b)
    assert image_a.tobytes() == image_b.tobytes()
    assert not np.array_equal(depth_a, depth_b)


def test_camera_needs_eight_pixels():
    with pytest.raises(ConfigurationError):
        CameraSpec(CameraMode.PERSPECTIVE, 4, 16, 10.0)


def test_ambiguity_scene_needs_two_rectangles():
    with pytest.raises(ConfigurationError):
        SceneSpec(
            (_square(),), _camera(), ambiguity=AmbiguityTag.LEFT_NEAR
        )
