"""Layout control maps: exact class-coverage fractions per latent token.

Each latent token owns a rectangle of source pixels (a floor-partition
tiling, so the rectangles tile the map exactly even for non-divisible
ratios). A token's row of the layout control map holds, per text token,
the fraction of its rectangle covered by that token's class; channels
whose class never appears in the rectangle are MASKED. Tokens with no
class mapping (style or filler words) stay globally available with a
constant coverage of 1.

The masked state is kept as a boolean array next to the coverage values,
never as a floating -inf, and converts to -inf only inside the fusion
softmax.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .netpbm import write_pgm
from .semantic_map import SemanticMap, present_classes

__all__ = [
    "Rect",
    "LayoutControlMap",
    "LatentLargerThanSource",
    "UnmappedPresentClass",
    "receptive_field",
    "compute_lcm",
    "nearest_lcm_baseline",
    "reconstruct_map",
    "majority_downsample",
    "write_lcm_slices",
]


class LatentLargerThanSource(ValueError):
    pass


class UnmappedPresentClass(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    """Half-open pixel rectangle [row_start, row_end) x [col_start, col_end)."""

    row_start: int
    row_end: int
    col_start: int
    col_end: int

    def __post_init__(self):
        if not (0 <= self.row_start < self.row_end and 0 <= self.col_start < self.col_end):
            raise ValueError(f"empty or inverted rect {self}")

    @property
    def area(self) -> int:
        return (self.row_end - self.row_start) * (self.col_end - self.col_start)


@dataclass(frozen=True)
class LayoutControlMap:
    """(h*w, N) coverage fractions with a parallel boolean MASKED array."""

    values: np.ndarray  # float64, meaningful where ~masked; 0.0 at masked slots
    masked: np.ndarray  # bool, True where the channel's class misses the rect
    latent_dims: tuple[int, int]
    source_dims: tuple[int, int]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        masked = np.asarray(self.masked, dtype=bool)
        if values.shape != masked.shape or values.ndim != 2:
            raise ValueError("values and masked must share a 2-D shape")
        if values.shape[0] != self.latent_dims[0] * self.latent_dims[1]:
            raise ValueError("row count must equal h*w")
        if masked.all(axis=1).any():
            raise ValueError("every row needs at least one unmasked entry")
        values = values.copy()
        values[masked] = 0.0
        values.flags.writeable = False
        masked.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "masked", masked)

    @property
    def tokens(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


def _check_dims(latent_dims, source_dims):
    h, w = latent_dims
    H, W = source_dims
    if h < 1 or w < 1:
        raise ValueError(f"latent dims must be positive, got {latent_dims}")
    if h > H or w > W:
        raise LatentLargerThanSource(f"latent {latent_dims} exceeds source {source_dims}")


def _boundaries(n_latent: int, n_source: int) -> np.ndarray:
    # floor partition: cell r covers [floor(r*N/n), floor((r+1)*N/n))
    return (np.arange(n_latent + 1, dtype=np.int64) * n_source) // n_latent


def receptive_field(token_index: int, latent_dims, source_dims) -> Rect:
    """Source-pixel rectangle owned by a flat latent token index."""
    _check_dims(latent_dims, source_dims)
    h, w = latent_dims
    H, W = source_dims
    if not 0 <= token_index < h * w:
        raise IndexError(f"token {token_index} outside 0..{h * w - 1}")
    r, c = divmod(token_index, w)
    rows = _boundaries(h, H)
    cols = _boundaries(w, W)
    return Rect(int(rows[r]), int(rows[r + 1]), int(cols[c]), int(cols[c + 1]))


def _class_of_channel(tcm) -> list:
    return [None if c is None else int(c) for c in tcm]


def _require_mapped(smap: SemanticMap, tcm) -> None:
    mapped = {c for c in tcm if c is not None}
    missing = [c for c in present_classes(smap) if c not in mapped]
    if missing:
        raise UnmappedPresentClass(
            f"present classes {missing} have no text token in the token-class map"
        )


def _coverage_per_class(smap: SemanticMap, latent_dims) -> np.ndarray:
    """(h*w, C) exact coverage fraction of each class in each token's rect."""
    h, w = latent_dims
    H, W = smap.height, smap.width
    rows = _boundaries(h, H)
    cols = _boundaries(w, W)
    row_token = np.searchsorted(rows, np.arange(H), side="right") - 1
    col_token = np.searchsorted(cols, np.arange(W), side="right") - 1
    token_of_pixel = (row_token[:, None] * w + col_token[None, :]).ravel()
    C = smap.num_classes
    flat_class = smap.grid.reshape(-1).astype(np.int64)
    counts = np.bincount(token_of_pixel * C + flat_class, minlength=h * w * C)
    counts = counts.reshape(h * w, C).astype(np.float64)
    areas = np.diff(rows)[:, None] * np.diff(cols)[None, :]
    return counts / areas.reshape(-1, 1)


def compute_lcm(smap: SemanticMap, latent_dims, tcm) -> LayoutControlMap:
    """Exact-coverage layout control map for a prompt's token-class mapping.

    Entry (i, j) is the fraction of token i's rectangle occupied by the
    class of text token j, MASKED when that class has no pixel there.
    Unmapped channels (class None) get a constant finite 1.0.
    """
    _check_dims(latent_dims, (smap.height, smap.width))
    _require_mapped(smap, tcm)
    per_class = _coverage_per_class(smap, latent_dims)
    return _lcm_from_class_coverage(per_class, tcm, latent_dims, (smap.height, smap.width))


def _lcm_from_class_coverage(per_class, tcm, latent_dims, source_dims) -> LayoutControlMap:
    classes = _class_of_channel(tcm)
    n_tokens = per_class.shape[0]
    values = np.empty((n_tokens, len(classes)), dtype=np.float64)
    masked = np.zeros((n_tokens, len(classes)), dtype=bool)
    for j, cls in enumerate(classes):
        if cls is None:
            values[:, j] = 1.0
        else:
            col = per_class[:, cls]
            values[:, j] = col
            masked[:, j] = col == 0.0
    return LayoutControlMap(values, masked, tuple(latent_dims), tuple(source_dims))


def nearest_lcm_baseline(smap: SemanticMap, latent_dims, tcm) -> LayoutControlMap:
    """Nearest-pixel resize baseline: 1.0 for the center-sampled class only.

    Samples the source at (floor((r+0.5)*H/h), floor((c+0.5)*W/w)) per
    token; the sampled class gets coverage 1.0 and all other mapped
    classes are MASKED, which is exactly what resizing the map before
    building the control map would produce. Unmapped channels keep the
    constant 1.0 of compute_lcm.
    """
    _check_dims(latent_dims, (smap.height, smap.width))
    _require_mapped(smap, tcm)
    h, w = latent_dims
    H, W = smap.height, smap.width
    rr = ((2 * np.arange(h) + 1) * H) // (2 * h)
    cc = ((2 * np.arange(w) + 1) * W) // (2 * w)
    sampled = smap.grid[rr[:, None], cc[None, :]].astype(np.int64).ravel()
    per_class = np.zeros((h * w, smap.num_classes), dtype=np.float64)
    per_class[np.arange(h * w), sampled] = 1.0
    return _lcm_from_class_coverage(per_class, tcm, latent_dims, (H, W))


def _distinct_class_coverage(lcm: LayoutControlMap, tcm) -> tuple[np.ndarray, list[int]]:
    """Coverage per distinct mapped class, read from each class's first channel."""
    classes = _class_of_channel(tcm)
    first_channel: dict[int, int] = {}
    for j, cls in enumerate(classes):
        if cls is not None and cls not in first_channel:
            first_channel[cls] = j
    order = sorted(first_channel)
    cov = np.stack(
        [np.where(lcm.masked[:, first_channel[c]], 0.0, lcm.values[:, first_channel[c]]) for c in order],
        axis=1,
    )
    return cov, order


def reconstruct_map(lcm: LayoutControlMap, tcm, classes: tuple[str, ...]) -> SemanticMap:
    """Latent-resolution map: per token, the mapped class of largest coverage.

    Ties break toward the lowest class index, so the result is exactly the
    majority-class downsample when the lcm came from compute_lcm.
    """
    cov, order = _distinct_class_coverage(lcm, tcm)
    winner = np.asarray(order, dtype=np.int64)[np.argmax(cov, axis=1)]
    h, w = lcm.latent_dims
    return SemanticMap(classes=classes, grid=winner.reshape(h, w).astype(np.uint8))


def majority_downsample(smap: SemanticMap, latent_dims) -> SemanticMap:
    """Majority-class downsample over the same floor-partition rectangles."""
    per_class = _coverage_per_class(smap, latent_dims)
    winner = np.argmax(per_class, axis=1)  # argmax ties -> lowest index
    h, w = latent_dims
    return SemanticMap(classes=smap.classes, grid=winner.reshape(h, w).astype(np.uint8))


def write_lcm_slices(lcm: LayoutControlMap, tcm, classes, out_dir) -> list[str]:
    """Dump one PGM per distinct mapped class, values round(255*coverage)."""
    os.makedirs(out_dir, exist_ok=True)
    cov, order = _distinct_class_coverage(lcm, tcm)
    h, w = lcm.latent_dims
    written = []
    for k, cls in enumerate(order):
        name = classes[cls].replace(" ", "_")
        path = os.path.join(out_dir, f"{name}_{h}x{w}.pgm")
        write_pgm(path, np.rint(255.0 * cov[:, k]).astype(np.uint8).reshape(h, w))
        written.append(path)
    return written
