"""Semantic maps: per-pixel class grids plus their class vocabulary.

A map is stored on disk as a binary PGM (P5) whose pixel values are the
class indices, next to a JSON sidecar {"0": "sky", "1": "road", ...}
mapping indices to class names contiguously from 0. Class 0 is background
by convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .netpbm import MalformedHeader, read_pgm, write_pgm

__all__ = [
    "SemanticMap",
    "SemanticMapError",
    "MalformedHeader",
    "MissingClass",
    "NonContiguousIndices",
    "load_semantic_map",
    "save_semantic_map",
    "one_hot_layout",
    "present_classes",
]


class SemanticMapError(ValueError):
    pass


class MissingClass(SemanticMapError):
    """A grid pixel refers to a class index the vocabulary does not define."""


class NonContiguousIndices(SemanticMapError):
    """Sidecar indices are not exactly 0..C-1."""


@dataclass(frozen=True)
class SemanticMap:
    """H x W grid of class indices with the class-name vocabulary."""

    classes: tuple[str, ...]
    grid: np.ndarray  # (H, W) uint8

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.uint8)
        if grid.ndim != 2 or grid.size == 0:
            raise SemanticMapError(f"grid must be 2-D and nonempty, got {grid.shape}")
        if len(self.classes) < 1:
            raise SemanticMapError("at least one class is required")
        if len(set(self.classes)) != len(self.classes):
            raise SemanticMapError("class names must be unique")
        if any(not name for name in self.classes):
            raise SemanticMapError("class names must be non-empty")
        if int(grid.max()) >= len(self.classes):
            raise MissingClass(
                f"grid value {int(grid.max())} outside 0..{len(self.classes) - 1}"
            )
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.classes)


def _classes_from_sidecar(sidecar: dict) -> tuple[str, ...]:
    try:
        indexed = {int(k): v for k, v in sidecar.items()}
    except (TypeError, ValueError) as exc:
        raise NonContiguousIndices(f"sidecar keys must be integers: {exc}") from exc
    if sorted(indexed) != list(range(len(indexed))) or not indexed:
        raise NonContiguousIndices(
            f"sidecar indices must be contiguous from 0, got {sorted(indexed)}"
        )
    return tuple(indexed[i] for i in range(len(indexed)))


def load_semantic_map(pgm_path, sidecar_path) -> SemanticMap:
    """Load a PGM grid plus JSON sidecar; pixel values are class indices."""
    grid = read_pgm(pgm_path)
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    classes = _classes_from_sidecar(sidecar)
    if int(grid.max()) >= len(classes):
        raise MissingClass(
            f"pixel value {int(grid.max())} has no sidecar entry "
            f"(classes cover 0..{len(classes) - 1})"
        )
    return SemanticMap(classes=classes, grid=grid)


def save_semantic_map(smap: SemanticMap, pgm_path, sidecar_path) -> None:
    """Inverse of load_semantic_map; round-trips bit-exactly."""
    write_pgm(pgm_path, smap.grid)
    sidecar = {str(i): name for i, name in enumerate(smap.classes)}
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=0, sort_keys=True)
        fh.write("\n")


def one_hot_layout(smap: SemanticMap) -> np.ndarray:
    """Row-major (H*W, C) one-hot matrix; row r*W+c is hot at grid[r, c]."""
    flat = smap.grid.reshape(-1).astype(np.int64)
    out = np.zeros((flat.size, smap.num_classes), dtype=np.uint8)
    out[np.arange(flat.size), flat] = 1
    return out


def present_classes(smap: SemanticMap) -> tuple[int, ...]:
    """Distinct class indices occurring in the grid, ascending."""
    return tuple(int(v) for v in np.unique(smap.grid))
