"""
This module contains the nearest-hit ray caster that turns a SceneSpec into
an image, a ground-truth depth map and a validity mask.
"""

from abc import ABC, abstractmethod
from typing import Dict, Tuple, Type

import numpy as np

from .raster import image_from_pixels, pixels_from_image
from .types import CameraMode, ObjectSpec, SceneSpec, Shape

AMBIENT = 0.1


class Primitive(ABC):
    """Base class for all intersectable primitives."""

    def __init__(self, spec: ObjectSpec) -> None:
        """
        Initialize the primitive.

        Args:
            spec: The object description.
        """
        self.spec = spec
        self.center = np.asarray(spec.center, dtype=np.float64)

    @abstractmethod
    def intersect(
        self, origins: np.ndarray, directions: np.ndarray
    ) -> np.ndarray:
        """
        Ray parameter of the first hit in front of the camera.

        Args:
            origins: (N, 3) ray origins.
            directions: (N, 3) ray directions with unit z component.

        Returns:
            (N,) hit parameters, ``inf`` where the ray misses.
        """

    @abstractmethod
    def normals(self, points: np.ndarray) -> np.ndarray:
        """Unit surface normals at (N, 3) hit points."""


class Rectangle(Primitive):
    """Fronto-parallel square facing the camera."""

    def intersect(
        self, origins: np.ndarray, directions: np.ndarray
    ) -> np.ndarray:
        t = (self.center[2] - origins[:, 2]) / directions[:, 2]
        points = origins + t[:, None] * directions
        h = self.spec.half_extent
        inside = (np.abs(points[:, 0] - self.center[0]) <= h) & (
            np.abs(points[:, 1] - self.center[1]) <= h
        )
        return np.where(inside & (t > 0), t, np.inf)

    def normals(self, points: np.ndarray) -> np.ndarray:
        normal = np.array([0.0, 0.0, -1.0])
        return np.broadcast_to(normal, points.shape)


class Sphere(Primitive):
    """Sphere of radius ``half_extent``."""

    def intersect(
        self, origins: np.ndarray, directions: np.ndarray
    ) -> np.ndarray:
        offset = origins - self.center
        a = np.einsum("ij,ij->i", directions, directions)
        b = 2.0 * np.einsum("ij,ij->i", directions, offset)
        c = np.einsum("ij,ij->i", offset, offset) - self.spec.half_extent**2
        disc = b * b - 4.0 * a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        near = (-b - root) / (2.0 * a)
        far = (-b + root) / (2.0 * a)
        t = np.where(near > 0, near, far)
        return np.where((disc >= 0) & (t > 0), t, np.inf)

    def normals(self, points: np.ndarray) -> np.ndarray:
        return (points - self.center) / self.spec.half_extent


class FloorPlane(Primitive):
    """Horizontal square patch at height ``center.y``, facing up."""

    def intersect(
        self, origins: np.ndarray, directions: np.ndarray
    ) -> np.ndarray:
        dy = directions[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.center[1] - origins[:, 1]) / dy
        t = np.where(dy != 0, t, np.inf)
        points = origins + np.where(np.isfinite(t), t, 0.0)[:, None] * (
            directions
        )
        h = self.spec.half_extent
        inside = (np.abs(points[:, 0] - self.center[0]) <= h) & (
            np.abs(points[:, 2] - self.center[2]) <= h
        )
        return np.where(inside & (t > 0), t, np.inf)

    def normals(self, points: np.ndarray) -> np.ndarray:
        normal = np.array([0.0, 1.0, 0.0])
        return np.broadcast_to(normal, points.shape)


PRIMITIVES: Dict[Shape, Type[Primitive]] = {
    Shape.RECTANGLE: Rectangle,
    Shape.SPHERE: Sphere,
    Shape.FLOOR_PLANE: FloorPlane,
}


def camera_rays(scene: SceneSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-pixel rays through pixel centers, row-major.

    Directions have a unit z component, so a hit parameter is the hit's
    z-distance from the camera plane.

    Returns:
        (H*W, 3) origins and (H*W, 3) directions.
    """
    camera = scene.camera
    h, w = camera.height, camera.width
    rows, cols = np.meshgrid(
        np.arange(h, dtype=np.float64) + 0.5,
        np.arange(w, dtype=np.float64) + 0.5,
        indexing="ij",
    )
    u = (cols - w / 2).ravel()
    v = -(rows - h / 2).ravel()
    n = h * w
    if camera.mode is CameraMode.ORTHOGRAPHIC:
        pixel = camera.ortho_width / w
        origins = np.stack([u * pixel, v * pixel, np.zeros(n)], axis=1)
        directions = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    else:
        origins = np.zeros((n, 3))
        f = camera.focal_length
        directions = np.stack([u / f, v / f, np.ones(n)], axis=1)
    return origins, directions


def render(scene: SceneSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Ray cast a scene.

    Background pixels are a valid far surface: depth = far plane, mask = 1.

    Args:
        scene: The scene to render.

    Returns:
        image (H, W, 3) float32 quantized to 8 bits, depth (H, W) float32
        meters, mask (H, W) uint8.
    """
    camera = scene.camera
    h, w = camera.height, camera.width
    origins, directions = camera_rays(scene)
    n = origins.shape[0]

    nearest = np.full(n, np.inf)
    owner = np.full(n, -1, dtype=np.int64)
    for index, spec in enumerate(scene.objects):
        t = PRIMITIVES[spec.shape](spec).intersect(origins, directions)
        closer = (t < nearest) & (t <= camera.far_plane)
        nearest = np.where(closer, t, nearest)
        owner = np.where(closer, index, owner)

    hit = owner >= 0
    depth = np.where(hit, nearest, camera.far_plane)

    shade = np.full(n, scene.background_albedo, dtype=np.float64)
    light = np.asarray(scene.light_direction, dtype=np.float64)
    for index, spec in enumerate(scene.objects):
        mine = owner == index
        if not mine.any():
            continue
        if camera.mode is CameraMode.ORTHOGRAPHIC:
            shade[mine] = spec.albedo
            continue
        points = origins[mine] + nearest[mine][:, None] * directions[mine]
        normals = PRIMITIVES[spec.shape](spec).normals(points)
        lambert = np.maximum(0.0, normals @ light)
        shade[mine] = np.clip(spec.albedo * lambert + AMBIENT, 0.0, 1.0)

    gray = shade.reshape(h, w, 1).repeat(3, axis=2)
    image = image_from_pixels(pixels_from_image(gray))
    return (
        image,
        depth.reshape(h, w).astype(np.float32),
        np.ones((h, w), dtype=np.uint8),
    )
