"""Canonical mask and bounding-box representations plus all pixel arithmetic.

Coordinate conventions used throughout the package:

* grids are row-major numpy arrays indexed ``[y, x]``,
* a pixel coordinate is an ``(x, y)`` pair (column, row),
* boxes are half-open: ``x0 <= x < x1`` and ``y0 <= y < y1``,
* frame dimensions are ``(width, height)`` pairs.

Masks are stored run-length encoded.  The encoding is row-major over the
flattened grid with alternating zero-run/one-run counts: the first count is
the leading zero-run (it may be 0, every later count is >= 1) and the counts
sum to ``width * height``.  Under these constraints the encoding of a grid is
unique, so equality of masks is equality of their runs.

All IoU arithmetic is done on exact integer pixel counts; the single division
happens at the end.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np


class DimensionMismatch(ValueError):
    """Raised when an operation requires masks of identical dimensions."""


@dataclass(frozen=True)
class BBox:
    """Integer pixel rectangle with half-open extents, never degenerate."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate bbox: {(self.x0, self.y0, self.x1, self.y1)}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_list(self) -> list[int]:
        """``[x0, y0, x1, y1]``, the wire and log form."""
        return [self.x0, self.y0, self.x1, self.y1]

    @staticmethod
    def from_list(coords: Iterable[int]) -> "BBox":
        x0, y0, x1, y1 = (int(c) for c in coords)
        return BBox(x0, y0, x1, y1)


@dataclass(frozen=True)
class Mask:
    """Binary per-frame, per-object pixel grid in canonical RLE form."""

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"mask dimensions must be >= 1, got {self.width}x{self.height}")
        runs = tuple(int(r) for r in self.runs)
        object.__setattr__(self, "runs", runs)
        if not runs:
            raise ValueError("runs may not be empty")
        if runs[0] < 0 or any(r < 1 for r in runs[1:]):
            raise ValueError(f"non-canonical runs: {runs}")
        if sum(runs) != self.width * self.height:
            raise ValueError(
                f"runs sum to {sum(runs)}, expected {self.width * self.height}"
            )

    # -- constructors ------------------------------------------------------

    @staticmethod
    def empty(width: int, height: int) -> "Mask":
        return Mask(width, height, (width * height,))

    @staticmethod
    def full(width: int, height: int) -> "Mask":
        return Mask(width, height, (0, width * height))

    @staticmethod
    def from_array(grid: np.ndarray) -> "Mask":
        """Encode a ``(height, width)`` boolean/integer grid."""
        if grid.ndim != 2:
            raise ValueError(f"expected a 2-D grid, got shape {grid.shape}")
        height, width = grid.shape
        flat = np.asarray(grid, dtype=bool).ravel()
        if not flat.any():
            return Mask.empty(width, height)
        changes = np.flatnonzero(np.diff(flat)) + 1
        bounds = np.concatenate(([0], changes, [flat.size]))
        lengths = np.diff(bounds)
        if flat[0]:
            runs = (0, *lengths.tolist())
        else:
            runs = tuple(lengths.tolist())
        return Mask(width, height, runs)

    @staticmethod
    def from_bbox(width: int, height: int, box: BBox) -> "Mask":
        """Mask whose 1-pixels are exactly ``box`` clipped to the frame."""
        grid = np.zeros((height, width), dtype=bool)
        grid[max(box.y0, 0) : max(box.y1, 0), max(box.x0, 0) : max(box.x1, 0)] = True
        return Mask.from_array(grid)

    # -- serialization -----------------------------------------------------

    def to_array(self) -> np.ndarray:
        """Decode to a ``(height, width)`` boolean grid."""
        values = np.zeros(len(self.runs), dtype=bool)
        values[1::2] = True
        flat = np.repeat(values, np.asarray(self.runs, dtype=np.int64))
        return flat.reshape(self.height, self.width)

    def to_rle_string(self) -> str:
        """Textual form ``"<w> <h> <c0> <c1> ..."`` used in manifests and on the wire."""
        return f"{self.width} {self.height} " + " ".join(str(r) for r in self.runs)

    @staticmethod
    def from_rle_string(text: str) -> "Mask":
        parts = text.split()
        if len(parts) < 3:
            raise ValueError(f"RLE string needs width, height and counts: {text!r}")
        try:
            numbers = [int(p) for p in parts]
        except ValueError as exc:
            raise ValueError(f"non-integer token in RLE string: {text!r}") from exc
        return Mask(numbers[0], numbers[1], tuple(numbers[2:]))

    # -- basic queries -----------------------------------------------------

    @property
    def area(self) -> int:
        """Number of 1-pixels."""
        return sum(self.runs[1::2])

    def is_empty(self) -> bool:
        return self.area == 0


def mask_area(mask: Mask) -> int:
    """Count of 1-pixels in the mask."""
    return mask.area


def mask_to_bbox(mask: Mask) -> Optional[BBox]:
    """Tightest axis-aligned box containing all 1-pixels, or None when empty."""
    if mask.is_empty():
        return None
    grid = mask.to_array()
    rows = np.flatnonzero(grid.any(axis=1))
    cols = np.flatnonzero(grid.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def bbox_iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, over exact pixel areas."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    inter = max(ix, 0) * max(iy, 0)
    union = a.area + b.area - inter
    return inter / union


def mask_iou(a: Mask, b: Mask) -> float:
    """Pixelwise IoU; 1.0 when both masks are empty (correct absence)."""
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    area_a = a.area
    area_b = b.area
    if area_a == 0 and area_b == 0:
        return 1.0
    inter = int(np.logical_and(a.to_array(), b.to_array()).sum())
    union = area_a + area_b - inter
    return inter / union


def boundary_array(mask: Mask) -> np.ndarray:
    """Boolean grid of 1-pixels with a 4-neighbor that is 0 or off-image."""
    grid = mask.to_array()
    interior = np.zeros_like(grid)
    interior[1:-1, 1:-1] = (
        grid[1:-1, 1:-1]
        & grid[:-2, 1:-1]
        & grid[2:, 1:-1]
        & grid[1:-1, :-2]
        & grid[1:-1, 2:]
    )
    return grid & ~interior


def boundary_pixels(mask: Mask) -> frozenset[tuple[int, int]]:
    """Boundary 1-pixels as a set of ``(x, y)`` coordinates."""
    ys, xs = np.nonzero(boundary_array(mask))
    return frozenset(zip(xs.tolist(), ys.tolist()))


def crop(frame_dims: tuple[int, int], box: BBox, pad: int) -> BBox:
    """Expand ``box`` by ``pad`` on each side, clamped to the frame bounds."""
    width, height = frame_dims
    return BBox(
        max(box.x0 - pad, 0),
        max(box.y0 - pad, 0),
        min(box.x1 + pad, width),
        min(box.y1 + pad, height),
    )


def translate(mask: Mask, dx: int, dy: int) -> Mask:
    """Shift 1-pixels by ``(dx, dy)``; pixels pushed off-frame are dropped."""
    if dx == 0 and dy == 0:
        return mask
    grid = mask.to_array()
    out = np.zeros_like(grid)
    h, w = grid.shape
    src_y = slice(max(-dy, 0), min(h - dy, h))
    src_x = slice(max(-dx, 0), min(w - dx, w))
    dst_y = slice(max(dy, 0), min(h + dy, h))
    dst_x = slice(max(dx, 0), min(w + dx, w))
    out[dst_y, dst_x] = grid[src_y, src_x]
    return Mask.from_array(out)


def mask_overlap_in_bbox(mask: Mask, box: BBox) -> int:
    """Number of 1-pixels of ``mask`` that fall inside ``box``."""
    grid = mask.to_array()
    h, w = grid.shape
    y0, y1 = max(box.y0, 0), min(box.y1, h)
    x0, x1 = max(box.x0, 0), min(box.x1, w)
    if y0 >= y1 or x0 >= x1:
        return 0
    return int(grid[y0:y1, x0:x1].sum())
