"""
This module contains the scene description types and the generator config.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

import numpy as np

from langdepth.models.tokenizer import TokenSequence
from langdepth.utils.errors import ConfigurationError

Vector3 = Tuple[float, float, float]

RECTANGLE_LABELS = ("cube", "box", "block", "panel")
SPHERE_LABELS = ("sphere", "ball")
FLOOR_LABELS = ("floor",)


class Shape(str, Enum):
    """Primitive kinds the renderer can intersect."""

    RECTANGLE = "rectangle"
    SPHERE = "sphere"
    FLOOR_PLANE = "floor-plane"


class CameraMode(str, Enum):
    """Projection used to cast the per-pixel rays."""

    ORTHOGRAPHIC = "orthographic"
    PERSPECTIVE = "perspective"


class AmbiguityTag(str, Enum):
    """Which rectangle of an ambiguity scene is the near one."""

    NONE = "none"
    LEFT_NEAR = "left-near"
    RIGHT_NEAR = "right-near"


class CaptionDetail(str, Enum):
    """How much the simulated captioner says."""

    BLANK = "blank"
    GENERIC = "generic"
    FULL = "full"


@dataclass(frozen=True)
class ObjectSpec:
    """
    One primitive in camera coordinates (meters, +z away from the camera).

    Rectangles are fronto-parallel squares; ``half_extent`` is their half
    side, a sphere's radius, or the half size of a square floor patch.
    """

    shape: Shape
    center: Vector3
    half_extent: float
    albedo: float
    label: str

    def __post_init__(self) -> None:
        if self.center[2] <= 0:
            raise ConfigurationError(
                f"Object center must be in front of the camera: {self}"
            )
        if self.half_extent <= 0:
            raise ConfigurationError(f"Object size must be positive: {self}")
        if not 0.0 <= self.albedo <= 1.0:
            raise ConfigurationError(f"Albedo must be in [0, 1]: {self}")


@dataclass(frozen=True)
class CameraSpec:
    """Camera and image raster description."""

    mode: CameraMode
    height: int
    width: int
    far_plane: float
    focal_length: float = 64.0
    ortho_width: float = 4.0

    def __post_init__(self) -> None:
        if self.height < 8 or self.width < 8:
            raise ConfigurationError(
                f"Image must be at least 8x8: {self.height}x{self.width}"
            )
        if self.focal_length <= 0:
            raise ConfigurationError("Focal length must be positive")
        if self.far_plane <= 0:
            raise ConfigurationError("Far plane must be positive")
        if self.ortho_width <= 0:
            raise ConfigurationError("Orthographic width must be positive")

    def project_column(self, center: Vector3) -> float:
        """Image column (continuous, pixel units) of a camera-frame point."""
        x, _, z = center
        if self.mode is CameraMode.ORTHOGRAPHIC:
            return self.width / 2 + x * self.width / self.ortho_width
        return self.width / 2 + self.focal_length * x / z


@dataclass(frozen=True)
class SceneSpec:
    """A renderable scene."""

    objects: Tuple[ObjectSpec, ...]
    camera: CameraSpec
    light_direction: Vector3 = (0.0, 0.0, -1.0)
    ambiguity: AmbiguityTag = AmbiguityTag.NONE
    background_albedo: float = 0.0

    def __post_init__(self) -> None:
        norm = math.sqrt(sum(c * c for c in self.light_direction))
        if abs(norm - 1.0) > 1e-9:
            raise ConfigurationError(
                f"Light direction must be a unit vector: {norm}"
            )
        if self.ambiguity is not AmbiguityTag.NONE:
            rectangles = [
                o for o in self.objects if o.shape is Shape.RECTANGLE
            ]
            if (
                len(self.objects) != 2
                or len(rectangles) != 2
                or self.camera.mode is not CameraMode.ORTHOGRAPHIC
                or rectangles[0].albedo != rectangles[1].albedo
            ):
                raise ConfigurationError(
                    "Ambiguity scenes need two equal-albedo rectangles "
                    "under an orthographic camera"
                )


@dataclass(frozen=True, eq=False)
class Sample:
    """
    One training/evaluation record.

    ``image`` is HxWx3 float32 in [0, 1] (quantized to 8 bits), ``depth``
    is HxW float32 meters, ``mask`` is HxW uint8.
    """

    sample_id: str
    image: np.ndarray
    depth: np.ndarray
    mask: np.ndarray
    caption: str
    tokens: TokenSequence
    ambiguity: AmbiguityTag = AmbiguityTag.NONE
    far_plane: float = 10.0

    def with_caption(self, caption: str, tokens: TokenSequence) -> "Sample":
        """Copy of the sample with a different caption."""
        return replace(self, caption=caption, tokens=tokens)

    def equals(self, other: "Sample") -> bool:
        """Bit-exact comparison of every field."""
        return (
            self.sample_id == other.sample_id
            and self.caption == other.caption
            and self.tokens == other.tokens
            and self.ambiguity is other.ambiguity
            and self.far_plane == other.far_plane
            and self.image.dtype == other.image.dtype
            and self.image.tobytes() == other.image.tobytes()
            and self.depth.tobytes() == other.depth.tobytes()
            and self.mask.tobytes() == other.mask.tobytes()
        )


@dataclass(frozen=True)
class GeneratorConfig:
    """Procedural generator settings (``generator`` config section)."""

    image_height: int = 64
    image_width: int = 64
    far_plane: float = 10.0
    z_min: float = 1.5
    z_max: float = 9.0
    object_count: Tuple[int, int] = (1, 3)
    ambiguous_fraction: float = 0.0
    camera_mode: str = "perspective"
    focal_length: float = 64.0
    ortho_width: float = 4.0
    size_range: Tuple[float, float] = (0.3, 1.0)
    albedo_range: Tuple[float, float] = (0.3, 1.0)
    floor_probability: float = 0.3
    background_albedo: float = 0.0
    ambiguity_near: float = 2.0
    ambiguity_far: float = 8.0

    def __post_init__(self) -> None:
        if self.z_min <= 0:
            raise ConfigurationError(f"z_min must be positive: {self.z_min}")
        if not self.z_min < self.z_max < self.far_plane:
            raise ConfigurationError(
                "Depth range must satisfy 0 < z_min < z_max < far_plane"
            )
        low, high = self.object_count
        if low < 0 or high < low:
            raise ConfigurationError(
                f"Empty object-count range: {self.object_count}"
            )
        if not 0.0 <= self.ambiguous_fraction <= 1.0:
            raise ConfigurationError("ambiguous_fraction must be in [0, 1]")
        if not 0.0 <= self.floor_probability <= 1.0:
            raise ConfigurationError("floor_probability must be in [0, 1]")
        if not 0.0 <= self.background_albedo <= 1.0:
            raise ConfigurationError("background_albedo must be in [0, 1]")
        if not 0 < self.size_range[0] <= self.size_range[1]:
            raise ConfigurationError(f"Bad size range: {self.size_range}")
        if not 0 <= self.albedo_range[0] <= self.albedo_range[1] <= 1:
            raise ConfigurationError(f"Bad albedo range: {self.albedo_range}")
        try:
            CameraMode(self.camera_mode)
        except ValueError as exc:
            raise ConfigurationError(
                f"Unknown camera mode: {self.camera_mode}"
            ) from exc
        self.check_ambiguity_depths()

    def check_ambiguity_depths(self) -> None:
        """Validate the near/far pair used by ambiguity scenes."""
        if self.ambiguity_near >= self.ambiguity_far:
            raise ConfigurationError(
                "ambiguity_near must be smaller than ambiguity_far"
            )
        if not 0 < self.ambiguity_near or self.ambiguity_far > self.far_plane:
            raise ConfigurationError(
                "Ambiguity depths must lie in (0, far_plane]"
            )

    def camera(self, mode: CameraMode) -> CameraSpec:
        """Camera for this config in the given projection mode."""
        return CameraSpec(
            mode=mode,
            height=self.image_height,
            width=self.image_width,
            far_plane=self.far_plane,
            focal_length=self.focal_length,
            ortho_width=self.ortho_width,
        )

    def depth_word_index(self, z: float) -> int:
        """0/1/2 for the near/middle/far third of [z_min, z_max]."""
        third = (self.z_max - self.z_min) / 3.0
        if z < self.z_min + third:
            return 0
        if z < self.z_min + 2 * third:
            return 1
        return 2
