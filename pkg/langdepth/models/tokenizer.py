"""
This module contains the word-level tokenizer that turns captions into the
fixed-length id sequences the denoiser's token-embedding table consumes.
"""

import json
import string
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

from langdepth.utils.errors import DataError

VOCABULARY_PATH = Path(__file__).parent.parent / "data" / "vocabulary.json"

PAD_ID = 0
UNK_ID = 1
MAX_TOKENS = 16

_PUNCTUATION = string.punctuation


@dataclass(frozen=True)
class TokenSequence:
    """Fixed-length caption ids; PAD (0) fills the tail."""

    ids: Tuple[int, ...]

    @property
    def mask(self) -> Tuple[int, ...]:
        """Attention mask: 1 on real tokens, 0 on PAD."""
        return tuple(0 if i == PAD_ID else 1 for i in self.ids)

    @property
    def is_blank(self) -> bool:
        """True when every position is PAD."""
        return all(i == PAD_ID for i in self.ids)


class Vocabulary:
    """
    Token list loaded from a JSON array; the index of a string is its id.
    """

    def __init__(self, tokens: Sequence[str]) -> None:
        """
        Initialize the vocabulary.

        Args:
            tokens: Token strings; ``tokens[0]`` is PAD and ``tokens[1]``
                is UNK.
        """
        if len(tokens) < 2:
            raise DataError("Vocabulary needs at least PAD and UNK")
        if len(set(tokens)) != len(tokens):
            raise DataError("Vocabulary contains duplicate tokens")
        self.tokens: List[str] = list(tokens)
        self.index: Dict[str, int] = {t: i for i, t in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __hash__(self) -> int:
        return hash(tuple(self.tokens))

    def id_of(self, token: str) -> int:
        """Look a token up, falling back to UNK."""
        return self.index.get(token, UNK_ID)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        """
        Load a vocabulary file.

        Args:
            path: JSON array of token strings.

        Returns:
            The vocabulary.
        """
        try:
            with open(path, "r", encoding="utf-8") as f:
                tokens = json.load(f)
        except FileNotFoundError as exc:
            raise DataError("Vocabulary file not found", path) from exc
        except json.JSONDecodeError as exc:
            raise DataError("Vocabulary file is not valid JSON", path) from exc
        if not isinstance(tokens, list) or not all(
            isinstance(t, str) for t in tokens
        ):
            raise DataError("Vocabulary must be a JSON array of strings", path)
        return cls(tokens)

    def save(self, path: Union[str, Path]) -> None:
        """Write the vocabulary as a JSON array."""
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.tokens, f, indent=2, ensure_ascii=False)
            f.write("\n")


@lru_cache(maxsize=1)
def default_vocabulary() -> Vocabulary:
    """Return the shipped vocabulary."""
    return Vocabulary.load(VOCABULARY_PATH)


def split_words(caption: str) -> List[str]:
    """Lowercase, split on whitespace and strip surrounding punctuation."""
    words = (w.strip(_PUNCTUATION) for w in caption.lower().split())
    return [w for w in words if w]


def tokenize(
    caption: str,
    vocabulary: Vocabulary,
    max_tokens: int = MAX_TOKENS,
) -> TokenSequence:
    """
    Turn a caption into a PAD-filled id sequence.

    Args:
        caption: Free text; unknown words map to UNK.
        vocabulary: The token table.
        max_tokens: Output length; longer captions are truncated.

    Returns:
        The token sequence.
    """
    ids = [vocabulary.id_of(w) for w in split_words(caption)][:max_tokens]
    ids.extend([PAD_ID] * (max_tokens - len(ids)))
    return TokenSequence(tuple(ids))
