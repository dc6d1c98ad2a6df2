"""
This module contains the procedural scene generator, including the
ambiguity scenes whose two depth assignments render to identical images.
"""

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from langdepth.metrics.depth import HIGH_QUANTILE, LOW_QUANTILE, percentile
from langdepth.models.tokenizer import (
    Vocabulary,
    default_vocabulary,
    tokenize,
)
from langdepth.utils.errors import DataError
from langdepth.utils.logger import logging as log
from langdepth.utils.rng import derive_rng

from .captions import caption_for
from .renderer import render
from .types import (
    FLOOR_LABELS,
    RECTANGLE_LABELS,
    SPHERE_LABELS,
    AmbiguityTag,
    CameraMode,
    CameraSpec,
    CaptionDetail,
    GeneratorConfig,
    ObjectSpec,
    Sample,
    SceneSpec,
    Shape,
)


MAX_SCENE_DRAWS = 64

Rendered = Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class GeneratedSample:
    """A sample together with the random stream that produced it."""

    sample: Sample
    stream: str


def _unit(vector: Tuple[float, float, float]) -> Tuple[float, float, float]:
    norm = math.sqrt(sum(c * c for c in vector))
    return (vector[0] / norm, vector[1] / norm, vector[2] / norm)


def _visible_half_extents(
    camera: CameraSpec, z: float
) -> Tuple[float, float]:
    if camera.mode is CameraMode.ORTHOGRAPHIC:
        half_w = camera.ortho_width / 2
        return half_w, half_w * camera.height / camera.width
    return (
        z * camera.width / (2 * camera.focal_length),
        z * camera.height / (2 * camera.focal_length),
    )


def _random_object(
    rng: np.random.Generator, config: GeneratorConfig, camera: CameraSpec
) -> ObjectSpec:
    shape = Shape.RECTANGLE if rng.random() < 0.5 else Shape.SPHERE
    labels = RECTANGLE_LABELS if shape is Shape.RECTANGLE else SPHERE_LABELS
    z = rng.uniform(config.z_min, config.z_max)
    half_w, half_h = _visible_half_extents(camera, z)
    return ObjectSpec(
        shape=shape,
        center=(
            float(rng.uniform(-0.8, 0.8) * half_w),
            float(rng.uniform(-0.8, 0.8) * half_h),
            float(z),
        ),
        half_extent=float(rng.uniform(*config.size_range)),
        albedo=float(rng.uniform(*config.albedo_range)),
        label=str(labels[rng.integers(len(labels))]),
    )


def _floor(rng: np.random.Generator, config: GeneratorConfig) -> ObjectSpec:
    return ObjectSpec(
        shape=Shape.FLOOR_PLANE,
        center=(
            0.0,
            float(-rng.uniform(0.8, 1.5)),
            (config.z_min + config.z_max) / 2,
        ),
        half_extent=(config.z_max - config.z_min) / 2,
        albedo=float(rng.uniform(*config.albedo_range)),
        label=FLOOR_LABELS[0],
    )


def ambiguity_scene(
    rng: np.random.Generator, config: GeneratorConfig, tag: AmbiguityTag
) -> SceneSpec:
    """
    Two fronto-parallel equal-albedo rectangles under orthographic view.

    Args:
        rng: Random stream for sizes, positions, albedo and label.
        config: Generator config with ``ambiguity_near``/``ambiguity_far``.
        tag: Which rectangle gets the near depth.

    Returns:
        The scene.
    """
    config.check_ambiguity_depths()
    camera = config.camera(CameraMode.ORTHOGRAPHIC)
    width = camera.ortho_width
    label = str(RECTANGLE_LABELS[rng.integers(len(RECTANGLE_LABELS))])
    albedo = float(rng.uniform(*config.albedo_range))
    near, far = config.ambiguity_near, config.ambiguity_far
    left_z, right_z = (near, far) if tag is AmbiguityTag.LEFT_NEAR else (
        far,
        near,
    )
    objects = []
    for side, z in ((-1.0, left_z), (1.0, right_z)):
        half = float(rng.uniform(0.1, 0.18) * width)
        objects.append(
            ObjectSpec(
                shape=Shape.RECTANGLE,
                center=(
                    float(side * rng.uniform(0.22, 0.28) * width),
                    float(rng.uniform(-0.1, 0.1) * width),
                    float(z),
                ),
                half_extent=half,
                albedo=albedo,
                label=label,
            )
        )
    return SceneSpec(
        objects=tuple(objects),
        camera=camera,
        ambiguity=tag,
        background_albedo=config.background_albedo,
    )


def generate_scene(
    rng: np.random.Generator, config: GeneratorConfig
) -> SceneSpec:
    """
    Draw one scene.

    With probability ``ambiguous_fraction`` the scene is an ambiguity
    scene (tag drawn uniformly); otherwise it holds ``object_count``
    random rectangles/spheres and, with ``floor_probability``, a floor
    patch (perspective camera only).

    Args:
        rng: Random stream.
        config: Generator config.

    Returns:
        The scene.
    """
    if rng.random() < config.ambiguous_fraction:
        tag = (
            AmbiguityTag.LEFT_NEAR
            if rng.random() < 0.5
            else AmbiguityTag.RIGHT_NEAR
        )
        return ambiguity_scene(rng, config, tag)

    mode = CameraMode(config.camera_mode)
    camera = config.camera(mode)
    low, high = config.object_count
    count = int(rng.integers(low, high + 1))
    objects = [_random_object(rng, config, camera) for _ in range(count)]
    if mode is CameraMode.PERSPECTIVE and (
        rng.random() < config.floor_probability
    ):
        objects.append(_floor(rng, config))

    light = (0.0, 0.0, -1.0)
    if mode is CameraMode.PERSPECTIVE:
        light = _unit(
            (
                float(rng.uniform(-0.5, 0.5)),
                float(rng.uniform(0.3, 1.0)),
                -1.0,
            )
        )
    return SceneSpec(
        objects=tuple(objects),
        camera=camera,
        light_direction=light,
        background_albedo=config.background_albedo,
    )


def build_sample(
    sample_id: str,
    scene: SceneSpec,
    caption: str,
    vocabulary: Optional[Vocabulary] = None,
    rendered: Optional[Rendered] = None,
) -> Sample:
    """Render a scene (unless already rendered) into a captioned Sample."""
    image, depth, mask = rendered if rendered is not None else render(scene)
    vocabulary = vocabulary or default_vocabulary()
    return Sample(
        sample_id=sample_id,
        image=image,
        depth=depth,
        mask=mask,
        caption=caption,
        tokens=tokenize(caption, vocabulary),
        ambiguity=scene.ambiguity,
        far_plane=scene.camera.far_plane,
    )


def make_ambiguous_pair(
    rng: np.random.Generator,
    config: GeneratorConfig,
    pair_id: str = "pair",
    vocabulary: Optional[Vocabulary] = None,
) -> Tuple[Sample, Sample]:
    """
    Two samples with identical images and swapped rectangle depths.

    Sample A puts the left rectangle at ``ambiguity_near`` and the right
    one at ``ambiguity_far``; sample B is the mirror assignment. Each
    caption states its own assignment.

    Args:
        rng: Random stream.
        config: Generator config.
        pair_id: Prefix of the two sample ids (``-a`` / ``-b``).
        vocabulary: Token table; shipped one when None.

    Returns:
        (A, B).
    """
    scene_a = ambiguity_scene(rng, config, AmbiguityTag.LEFT_NEAR)
    left, right = scene_a.objects
    scene_b = replace(
        scene_a,
        objects=(
            replace(left, center=(*left.center[:2], right.center[2])),
            replace(right, center=(*right.center[:2], left.center[2])),
        ),
        ambiguity=AmbiguityTag.RIGHT_NEAR,
    )
    samples = []
    for suffix, scene in (("a", scene_a), ("b", scene_b)):
        caption = caption_for(scene, CaptionDetail.FULL, rng, config)
        samples.append(
            build_sample(f"{pair_id}-{suffix}", scene, caption, vocabulary)
        )
    return samples[0], samples[1]


def has_depth_range(depth: np.ndarray) -> bool:
    """True when the 2nd and 98th depth percentiles differ."""
    return percentile(depth, LOW_QUANTILE) < percentile(depth, HIGH_QUANTILE)


def draw_normalizable_scene(
    rng: np.random.Generator, config: GeneratorConfig
) -> Tuple[SceneSpec, Rendered]:
    """
    Draw scenes from ``rng`` until one renders to a normalizable depth map.

    Small far objects can cover less than 2% of the raster, leaving the
    normalization percentiles equal; such draws are discarded.

    Args:
        rng: Random stream.
        config: Generator config.

    Returns:
        The scene and its rendering.
    """
    for _ in range(MAX_SCENE_DRAWS):
        scene = generate_scene(rng, config)
        rendered = render(scene)
        if has_depth_range(rendered[1]):
            return scene, rendered
    raise DataError(
        f"No scene with a usable depth range in {MAX_SCENE_DRAWS} draws; "
        "increase size_range or decrease z_max"
    )


def _scene_job(
    args: Tuple[int, int, GeneratorConfig, CaptionDetail, Vocabulary],
) -> List[GeneratedSample]:
    seed, index, config, detail, vocabulary = args
    rng = derive_rng(seed, "scene", index)
    scene, rendered = draw_normalizable_scene(rng, config)
    caption = caption_for(scene, detail, rng, config)
    sample = build_sample(
        f"scene-{index:06d}", scene, caption, vocabulary, rendered
    )
    return [GeneratedSample(sample, f"scene/{index}")]


def _pair_job(
    args: Tuple[int, int, GeneratorConfig, CaptionDetail, Vocabulary],
) -> List[GeneratedSample]:
    seed, index, config, _, vocabulary = args
    rng = derive_rng(seed, "pair", index)
    a, b = make_ambiguous_pair(rng, config, f"pair-{index:06d}", vocabulary)
    return [
        GeneratedSample(a, f"pair/{index}"),
        GeneratedSample(b, f"pair/{index}"),
    ]


def generate_samples(
    config: GeneratorConfig,
    scenes: int,
    pairs: int,
    seed: int,
    detail: CaptionDetail = CaptionDetail.FULL,
    vocabulary: Optional[Vocabulary] = None,
    workers: int = 1,
) -> List[GeneratedSample]:
    """
    Generate a dataset's worth of samples.

    Each scene ``i`` uses stream ``(seed, "scene", i)`` and each pair ``j``
    stream ``(seed, "pair", j)``, so the output does not depend on the
    worker count.

    Args:
        config: Generator config.
        scenes: Number of independent scenes.
        pairs: Number of ambiguity pairs (two samples each).
        seed: Master seed.
        detail: Caption detail for the independent scenes.
        vocabulary: Token table; shipped one when None.
        workers: Thread count.

    Returns:
        Scenes in index order, then pairs in index order.
    """
    vocabulary = vocabulary or default_vocabulary()
    scene_args = [(seed, i, config, detail, vocabulary) for i in range(scenes)]
    pair_args = [(seed, j, config, detail, vocabulary) for j in range(pairs)]
    log.info(
        "[generator] Generating %d scenes and %d ambiguity pairs "
        "(seed %d, %d workers)",
        scenes,
        pairs,
        seed,
        workers,
    )
    results: List[GeneratedSample] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for batch in itertools.chain(
            pool.map(_scene_job, scene_args),
            pool.map(_pair_job, pair_args),
        ):
            results.extend(batch)
    return results

