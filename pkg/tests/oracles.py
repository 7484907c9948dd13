"""Brute-force reference implementations, independent of the library code.

Everything here favors obviousness over speed: per-pixel loops, exhaustive
scans, all-pairs distance checks, and a literal transcription of the phase
labeling rules.  Tests compare the fast library paths against these.
"""

from __future__ import annotations

import numpy as np


def count_ones(grid: np.ndarray) -> int:
    total = 0
    for y in range(grid.shape[0]):
        for x in range(grid.shape[1]):
            if grid[y, x]:
                total += 1
    return total


def exhaustive_bbox(grid: np.ndarray):
    """(x0, y0, x1, y1) half-open, or None, by scanning every pixel."""
    xs, ys = [], []
    for y in range(grid.shape[0]):
        for x in range(grid.shape[1]):
            if grid[y, x]:
                xs.append(x)
                ys.append(y)
    if not xs:
        return None
    return (min(xs), min(ys), max(xs) + 1, max(ys) + 1)


def pixel_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = 0
    union = 0
    for y in range(a.shape[0]):
        for x in range(a.shape[1]):
            if a[y, x] and b[y, x]:
                inter += 1
            if a[y, x] or b[y, x]:
                union += 1
    if union == 0:
        return 1.0
    return inter / union


def bbox_iou_enumerate(box_a, box_b, dims) -> float:
    """IoU by classifying every pixel of an enclosing grid."""
    width, height = dims
    inter = 0
    union = 0
    for y in range(height):
        for x in range(width):
            in_a = box_a[0] <= x < box_a[2] and box_a[1] <= y < box_a[3]
            in_b = box_b[0] <= x < box_b[2] and box_b[1] <= y < box_b[3]
            if in_a and in_b:
                inter += 1
            if in_a or in_b:
                union += 1
    return inter / union


def boundary_scan(grid: np.ndarray) -> set[tuple[int, int]]:
    """Every 1-pixel with a 4-neighbor that is 0 or off-image, by direct check."""
    height, width = grid.shape
    out = set()
    for y in range(height):
        for x in range(width):
            if not grid[y, x]:
                continue
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nx, ny = x + dx, y + dy
                if not (0 <= nx < width and 0 <= ny < height) or not grid[ny, nx]:
                    out.add((x, y))
                    break
    return out


def boundary_f_bruteforce(pred: np.ndarray, gt: np.ndarray, tolerance: int) -> float:
    """All-pairs squared-distance matcher over the two boundary sets."""
    pred_b = boundary_scan(pred)
    gt_b = boundary_scan(gt)
    if not pred_b and not gt_b:
        return 1.0
    if not pred_b or not gt_b:
        return 0.0
    t2 = tolerance * tolerance

    def matched(source, targets):
        hits = 0
        for x, y in source:
            if any((x - u) ** 2 + (y - v) ** 2 <= t2 for u, v in targets):
                hits += 1
        return hits

    precision = matched(pred_b, gt_b) / len(pred_b)
    recall = matched(gt_b, pred_b) / len(gt_b)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def phases_reference(presence) -> list[str]:
    """Phase per frame, recomputed from scratch at every frame."""
    out = []
    for t, present in enumerate(presence):
        earlier_present = any(presence[:t])
        earlier_disappearance = any(
            (not presence[j]) and any(presence[:j]) for j in range(t)
        )
        if present:
            out.append("reappeared" if earlier_disappearance else "visible")
        elif earlier_present:
            out.append("disappeared")
        else:
            out.append("before_first_appearance")
    return out


def rasterize_reference(spec, frame_index: int) -> np.ndarray:
    """Per-pixel membership evaluation of a scenario frame, honoring draw order."""
    from tep.simulator import CLUTTER_ID, actor_extent, generate  # noqa: F401

    grid = np.zeros((spec.height, spec.width), dtype=np.int32)
    priority = {"target": 0, "distractor": 1, "occluder": 2}
    ordered = sorted(spec.actors, key=lambda a: (priority[a.identity], a.actor_id))
    for actor in ordered:
        if not actor.visible_at(frame_index):
            continue
        x0, y0 = actor_extent(actor, frame_index, (spec.width, spec.height))
        for y in range(spec.height):
            for x in range(spec.width):
                if not (x0 <= x < x0 + actor.size and y0 <= y < y0 + actor.size):
                    continue
                if actor.shape == "rect":
                    grid[y, x] = actor.actor_id
                else:
                    ddx = 2 * (x - x0) - (actor.size - 1)
                    ddy = 2 * (y - y0) - (actor.size - 1)
                    if ddx * ddx + ddy * ddy <= actor.size * actor.size:
                        grid[y, x] = actor.actor_id
    return grid


def random_grid(rng: np.random.Generator, width=16, height=16, density=0.35) -> np.ndarray:
    return rng.random((height, width)) < density
