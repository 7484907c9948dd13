"""Run-length mask codec matching the pipeline's textual form.

``"<w> <h> <c0> <c1> ..."``: row-major, alternating zero-run/one-run counts,
the first count is the leading zero-run (possibly 0), every later count is
at least 1, and the counts sum to ``w * h``.  The form is canonical, so two
independent encoders agree byte for byte.
"""

from __future__ import annotations

from typing import Optional

import numpy as np


def encode(grid: np.ndarray) -> str:
    height, width = grid.shape
    flat = np.asarray(grid, dtype=bool).ravel()
    if not flat.any():
        counts = [width * height]
    else:
        changes = np.flatnonzero(np.diff(flat)) + 1
        bounds = np.concatenate(([0], changes, [flat.size]))
        counts = np.diff(bounds).tolist()
        if flat[0]:
            counts = [0] + counts
    return f"{width} {height} " + " ".join(str(c) for c in counts)


def decode(text: str) -> np.ndarray:
    parts = [int(p) for p in text.split()]
    if len(parts) < 3:
        raise ValueError(f"RLE string too short: {text!r}")
    width, height, counts = parts[0], parts[1], parts[2:]
    return decode_counts(width, height, counts)


def decode_counts(width: int, height: int, counts: list[int]) -> np.ndarray:
    if sum(counts) != width * height:
        raise ValueError(f"counts sum to {sum(counts)}, expected {width * height}")
    if counts[0] < 0 or any(c < 1 for c in counts[1:]):
        raise ValueError(f"non-canonical counts: {counts}")
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return flat.reshape(height, width)


def bbox_of(grid: np.ndarray) -> Optional[list[int]]:
    """Tight half-open ``[x0, y0, x1, y1]`` around the 1-pixels, or None."""
    ys, xs = np.nonzero(grid)
    if xs.size == 0:
        return None
    return [int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1]
