"""
This module contains the template captioner that stands in for a human or
vision-language describer, and the caption-aware horizontal flip.
"""

import json
import re
from dataclasses import replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from langdepth.models.tokenizer import (
    TokenSequence,
    Vocabulary,
    default_vocabulary,
)
from langdepth.utils.errors import ConfigurationError, DataError

from .types import (
    AmbiguityTag,
    CaptionDetail,
    GeneratorConfig,
    Sample,
    SceneSpec,
)

TEMPLATES_PATH = Path(__file__).parent.parent / "data" / "templates.json"

_DIRECTION = re.compile(r"\b(left|right)\b", re.IGNORECASE)
_SWAP = {"left": "right", "right": "left"}
_MIRROR_TAG = {
    AmbiguityTag.LEFT_NEAR: AmbiguityTag.RIGHT_NEAR,
    AmbiguityTag.RIGHT_NEAR: AmbiguityTag.LEFT_NEAR,
}


@lru_cache(maxsize=4)
def load_templates(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load the caption template file.

    Args:
        path: Template JSON; the shipped file when None.

    Returns:
        The parsed templates.
    """
    source = Path(path) if path is not None else TEMPLATES_PATH
    try:
        with open(source, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise DataError("Template file not found", source) from exc
    except json.JSONDecodeError as exc:
        raise DataError("Template file is not valid JSON", source) from exc


def prompt_template(name: str, path: Optional[str] = None) -> str:
    """
    Resolve a named inference prompt (``template:<name>`` caption mode).

    Args:
        name: Key in the template file's ``prompts`` table.
        path: Template JSON; the shipped file when None.

    Returns:
        The prompt text, verbatim.
    """
    prompts = load_templates(path)["prompts"]
    if name not in prompts:
        raise ConfigurationError(
            f"Unknown prompt template {name!r}; known: {sorted(prompts)}"
        )
    return prompts[name]


def _position_key(scene: SceneSpec, index: int) -> str:
    camera = scene.camera
    column = camera.project_column(scene.objects[index].center)
    if column < camera.width / 3:
        return "left"
    if column > 2 * camera.width / 3:
        return "right"
    return "center"


def _ambiguity_label(scene: SceneSpec) -> str:
    return min(scene.objects, key=lambda o: o.center[0]).label


def caption_for(
    scene: SceneSpec,
    detail: CaptionDetail,
    rng: np.random.Generator,
    config: GeneratorConfig,
) -> str:
    """
    Describe a scene.

    ``blank`` gives the empty string and ``generic`` a fixed sentence;
    ``full`` names every object with a left/center/right position word and
    a near/middle/far word from the thirds of ``[z_min, z_max]``. The phrase
    order of multi-object captions is drawn from ``rng``.

    Args:
        scene: The scene.
        detail: Caption detail level.
        rng: Random stream.
        config: Generator config holding the depth range.

    Returns:
        The caption.
    """
    templates = load_templates()
    if detail is CaptionDetail.BLANK:
        return ""
    if detail is CaptionDetail.GENERIC or not scene.objects:
        return templates["generic"]

    if scene.ambiguity is not AmbiguityTag.NONE:
        template = templates["ambiguity"][scene.ambiguity.value]
        return template.format(label=_ambiguity_label(scene))

    phrases: List[str] = []
    for index, spec in enumerate(scene.objects):
        phrases.append(
            templates["object"].format(
                label=spec.label,
                position=templates["positions"][_position_key(scene, index)],
                depth=templates["depths"][
                    config.depth_word_index(spec.center[2])
                ],
            )
        )
    order = rng.permutation(len(phrases))
    return templates["joiner"].join(phrases[i] for i in order)


def _swap_word(match: "re.Match[str]") -> str:
    word = match.group(1)
    swapped = _SWAP[word.lower()]
    if word.isupper():
        return swapped.upper()
    if word[0].isupper():
        return swapped.capitalize()
    return swapped


def swap_directions(caption: str) -> str:
    """
    Swap the words "left" and "right", leaving everything else as is.

    Matching ignores case; each replacement keeps the case of the word it
    replaces ("Left" becomes "Right", "LEFT" becomes "RIGHT").
    """
    return _DIRECTION.sub(_swap_word, caption)


def horizontal_flip(
    sample: Sample, vocabulary: Optional[Vocabulary] = None
) -> Sample:
    """
    Mirror a sample about its vertical axis.

    Image, depth and mask are reversed along the width; the caption and its
    tokens have "left" and "right" swapped so direction words stay true, and
    a left-near ambiguity tag becomes right-near (and back).

    Args:
        sample: The sample.
        vocabulary: Token table of ``sample.tokens``; shipped one when None.

    Returns:
        The flipped sample.
    """
    vocabulary = vocabulary or default_vocabulary()
    left, right = vocabulary.id_of("left"), vocabulary.id_of("right")
    id_swap = {left: right, right: left}
    tokens = TokenSequence(
        tuple(id_swap.get(i, i) for i in sample.tokens.ids)
    )
    return replace(
        sample,
        image=np.ascontiguousarray(sample.image[:, ::-1]),
        depth=np.ascontiguousarray(sample.depth[:, ::-1]),
        mask=np.ascontiguousarray(sample.mask[:, ::-1]),
        caption=swap_directions(sample.caption),
        tokens=tokens,
        ambiguity=_MIRROR_TAG.get(sample.ambiguity, sample.ambiguity),
    )

