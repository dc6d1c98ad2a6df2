"""
This module contains the on-disk dataset format: a JSON manifest, a copy of
the vocabulary, PPM images and PDR1 depth/mask rasters.

Layout::

    <dir>/manifest.json
    <dir>/vocabulary.json
    <dir>/images/<id>.ppm
    <dir>/depths/<id>.pdr
    <dir>/masks/<id>.pdr
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import (
    Any,
    Dict,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from langdepth.models.tokenizer import Vocabulary, default_vocabulary, tokenize
from langdepth.utils.errors import DataError
from langdepth.utils.logger import logging as log

from .generator import GeneratedSample
from .raster import read_pdr, read_ppm, write_pdr, write_ppm
from .types import AmbiguityTag, Sample

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
VOCABULARY_NAME = "vocabulary.json"


@dataclass(frozen=True)
class ManifestEntry:
    """One sample's files and metadata."""

    id: str
    image: str
    depth: str
    mask: str
    caption: str
    ambiguity: str
    seed: int
    stream: str


@dataclass
class DatasetManifest:
    """Index of a dataset directory."""

    entries: List[ManifestEntry]
    far_plane: float
    vocabulary: str = VOCABULARY_NAME
    format_version: int = FORMAT_VERSION
    generator: Dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        """Check version and id uniqueness."""
        if self.format_version != FORMAT_VERSION:
            raise DataError(
                f"Dataset format version {self.format_version} is not "
                f"supported (expected {FORMAT_VERSION})"
            )
        seen = set()
        for entry in self.entries:
            if entry.id in seen:
                raise DataError(f"Duplicate sample id in manifest: {entry.id}")
            seen.add(entry.id)
            try:
                AmbiguityTag(entry.ambiguity)
            except ValueError as exc:
                raise DataError(
                    f"Unknown ambiguity tag {entry.ambiguity!r} for {entry.id}"
                ) from exc

    def to_json(self) -> Dict[str, Any]:
        """Plain-JSON form with a stable key order."""
        return {
            "format_version": self.format_version,
            "vocabulary": self.vocabulary,
            "far_plane": self.far_plane,
            "generator": self.generator,
            "entries": [asdict(e) for e in self.entries],
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "DatasetManifest":
        """Parse the JSON form; missing keys raise DataError."""
        try:
            return cls(
                entries=[ManifestEntry(**e) for e in data["entries"]],
                far_plane=float(data["far_plane"]),
                vocabulary=data["vocabulary"],
                format_version=int(data["format_version"]),
                generator=dict(data.get("generator", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"Malformed manifest: {exc}") from exc


class SampleReader:
    """
    Lazy, read-only access to a dataset's samples.

    Files are read on each access; nothing is cached.
    """

    def __init__(
        self,
        directory: Path,
        manifest: DatasetManifest,
        vocabulary: Vocabulary,
    ) -> None:
        """
        Initialize the reader.

        Args:
            directory: Dataset root.
            manifest: The parsed manifest.
            vocabulary: Token table used to recompute tokens.
        """
        self.directory = directory
        self.manifest = manifest
        self.vocabulary = vocabulary
        self._index = {e.id: i for i, e in enumerate(manifest.entries)}

    def __len__(self) -> int:
        return len(self.manifest.entries)

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, key: Union[int, str]) -> Sample:
        if isinstance(key, str):
            if key not in self._index:
                raise DataError(f"Unknown sample id: {key}")
            key = self._index[key]
        entry = self.manifest.entries[key]
        return self._load(entry)

    @property
    def ids(self) -> List[str]:
        """Sample ids in manifest order."""
        return [e.id for e in self.manifest.entries]

    def _load(self, entry: ManifestEntry) -> Sample:
        image = read_ppm(self.directory / entry.image)
        depth = read_pdr(self.directory / entry.depth)
        mask = read_pdr(self.directory / entry.mask)
        if depth.dtype != np.float32 or mask.dtype != np.uint8:
            raise DataError(
                "Depth must be float32 and mask uint8",
                self.directory / entry.depth,
            )
        if image.shape[:2] != depth.shape or depth.shape != mask.shape:
            raise DataError(
                f"Raster shapes disagree for {entry.id}: image "
                f"{image.shape}, depth {depth.shape}, mask {mask.shape}",
                self.directory / entry.image,
            )
        return Sample(
            sample_id=entry.id,
            image=image,
            depth=depth,
            mask=mask,
            caption=entry.caption,
            tokens=tokenize(entry.caption, self.vocabulary),
            ambiguity=AmbiguityTag(entry.ambiguity),
            far_plane=self.manifest.far_plane,
        )


def write_dataset(
    samples: Sequence[GeneratedSample],
    directory: Union[str, Path],
    seed: int,
    generator: Dict[str, Any],
    vocabulary: Optional[Vocabulary] = None,
) -> DatasetManifest:
    """
    Write samples and their manifest.

    Args:
        samples: Generated samples (with their stream keys).
        directory: Destination directory (created if needed).
        seed: Master seed the samples were generated with.
        generator: Generator config echo stored in the manifest.
        vocabulary: Token table copied next to the manifest.

    Returns:
        The written manifest.
    """
    root = Path(directory)
    vocabulary = vocabulary or default_vocabulary()
    if not samples:
        raise DataError("Refusing to write an empty dataset", root)
    ids = [gs.sample.sample_id for gs in samples]
    if len(set(ids)) != len(ids):
        raise DataError("Duplicate sample ids in dataset", root)
    far_planes = {gs.sample.far_plane for gs in samples}
    if len(far_planes) != 1:
        raise DataError(f"Samples disagree on far plane: {far_planes}")
    for sub in ("images", "depths", "masks"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    entries = []
    for generated in samples:
        sample = generated.sample
        entry = ManifestEntry(
            id=sample.sample_id,
            image=f"images/{sample.sample_id}.ppm",
            depth=f"depths/{sample.sample_id}.pdr",
            mask=f"masks/{sample.sample_id}.pdr",
            caption=sample.caption,
            ambiguity=sample.ambiguity.value,
            seed=seed,
            stream=generated.stream,
        )
        write_ppm(sample.image, root / entry.image)
        write_pdr(sample.depth, root / entry.depth)
        write_pdr(sample.mask, root / entry.mask)
        entries.append(entry)

    manifest = DatasetManifest(
        entries=entries,
        far_plane=far_planes.pop(),
        generator=generator,
    )
    manifest.validate()
    vocabulary.save(root / VOCABULARY_NAME)
    with open(root / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest.to_json(), f, indent=2, ensure_ascii=False)
        f.write("\n")
    log.info("[dataset] Wrote %d samples to %s", len(entries), root)
    return manifest


def read_dataset(
    directory: Union[str, Path], check_files: bool = True
) -> Tuple[DatasetManifest, SampleReader]:
    """
    Open a dataset directory.

    Args:
        directory: Dataset root.
        check_files: Verify that every referenced file exists.

    Returns:
        The manifest and a lazy sample reader.
    """
    root = Path(directory)
    manifest_path = root / MANIFEST_NAME
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        raise DataError("Manifest not found", manifest_path) from exc
    except json.JSONDecodeError as exc:
        raise DataError("Manifest is not valid JSON", manifest_path) from exc
    manifest = DatasetManifest.from_json(data)
    manifest.validate()
    if not manifest.entries:
        raise DataError("Dataset is empty", manifest_path)
    vocabulary = Vocabulary.load(root / manifest.vocabulary)
    if check_files:
        for entry in manifest.entries:
            for rel in (entry.image, entry.depth, entry.mask):
                if not (root / rel).is_file():
                    raise DataError("Missing dataset file", root / rel)
    log.debug("[dataset] Opened %s (%d samples)", root, len(manifest.entries))
    return manifest, SampleReader(root, manifest, vocabulary)
