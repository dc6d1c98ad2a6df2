"""
Procedural scenes: generation, rendering, captions and the dataset format.
"""

from .captions import caption_for, horizontal_flip, prompt_template
from .dataset import DatasetManifest, read_dataset, write_dataset
from .generator import generate_scene, generate_samples, make_ambiguous_pair
from .renderer import render
from .types import (
    AmbiguityTag,
    CaptionDetail,
    GeneratorConfig,
    Sample,
    SceneSpec,
)

__all__ = [
    "AmbiguityTag",
    "CaptionDetail",
    "DatasetManifest",
    "GeneratorConfig",
    "Sample",
    "SceneSpec",
    "caption_for",
    "generate_samples",
    "generate_scene",
    "horizontal_flip",
    "make_ambiguous_pair",
    "prompt_template",
    "read_dataset",
    "render",
    "write_dataset",
]
