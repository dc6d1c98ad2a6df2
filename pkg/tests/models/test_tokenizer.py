import pytest

from langdepth.models.tokenizer import (
    PAD_ID,
    UNK_ID,
    Vocabulary,
    default_vocabulary,
    split_words,
    tokenize,
)
from langdepth.utils.errors import DataError


def test_caption_tokens():
    vocab = default_vocabulary()
    tokens = tokenize("The left cube is near.", vocab)
    words = ["the", "left", "cube", "is", "near"]
    assert tokens.ids[:5] == tuple(vocab.id_of(w) for w in words)
    assert tokens.ids[5:] == (PAD_ID,) * 11
    assert tokens.mask == (1,) * 5 + (0,) * 11
    assert not tokens.is_blank


def test_unknown_words_map_to_unk():
    tokens = tokenize("xyzzy", default_vocabulary())
    assert tokens.ids[0] == UNK_ID


def test_blank_caption():
    tokens = tokenize("", default_vocabulary())
    assert tokens.is_blank
    assert len(tokens.ids) == 16


def test_long_captions_truncate():
    tokens = tokenize(" ".join(["cube"] * 20), default_vocabulary(), 4)
    assert len(tokens.ids) == 4 and PAD_ID not in tokens.ids


def test_split_words_strips_punctuation():
    assert split_words("  A cube, (left)!  ") == ["a", "cube", "left"]


def test_shipped_vocabulary_fits_embedding():
    vocab = default_vocabulary()
    assert len(vocab) <= 64
    assert vocab.tokens[PAD_ID] == "<pad>"
    assert vocab.tokens[UNK_ID] == "<unk>"


def test_vocabulary_file_roundtrip(tmp_path):
    vocab = Vocabulary(["<pad>", "<unk>", "cube"])
    vocab.save(tmp_path / "v.json")
    assert Vocabulary.load(tmp_path / "v.json") == vocab


@pytest.mark.parametrize(
    "content", ["not json", '{"a": 1}', '["<pad>"]', '["a", "a", "b"]']
)
def test_bad_vocabulary_files(tmp_path, content):
    path = tmp_path / "v.json"
    path.write_text(content)
    with pytest.raises(DataError):
        Vocabulary.load(path)
