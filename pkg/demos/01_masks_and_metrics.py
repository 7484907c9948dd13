"""Masks, boxes, and the evaluation metrics, from the ground up.

Run with:  python3 demos/01_masks_and_metrics.py
"""

import numpy as np

from tep import (
    BBox,
    Mask,
    bbox_iou,
    boundary_f,
    boundary_pixels,
    evaluate,
    mask_iou,
    mask_to_bbox,
)

# --- Masks are canonical run-length encodings over row-major grids ---------

grid = np.zeros((6, 8), dtype=bool)
grid[2:5, 3:7] = True
mask = Mask.from_array(grid)
print("mask:", mask.to_rle_string())
print("area:", mask.area, "bbox:", mask_to_bbox(mask))

# The encoding is unique, so equality of masks is equality of runs:
assert Mask.from_rle_string(mask.to_rle_string()) == mask

# --- Box and mask agreement -------------------------------------------------

a, b = BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)
print("\nbox IoU of two half-overlapping 10x10 boxes:", bbox_iou(a, b))

other = np.zeros((6, 8), dtype=bool)
other[2:5, 4:8] = True
print("mask IoU after a 1-px shift:", mask_iou(mask, Mask.from_array(other)))

# Correctly predicting absence is perfect agreement:
print("both-empty IoU:", mask_iou(Mask.empty(8, 6), Mask.empty(8, 6)))

# --- Boundary quality --------------------------------------------------------

print("\nboundary pixels of the block:", sorted(boundary_pixels(mask))[:5], "...")
for tol in (0, 1, 2):
    f = boundary_f(mask, Mask.from_array(other), tol)
    print(f"boundary F at tolerance {tol}: {f:.4f}")

# --- Sequence evaluation ------------------------------------------------------
# An object that disappears (both masks empty: correct absence) and reappears.

gt = [mask, Mask.empty(8, 6), mask]
pred_good = [mask, Mask.empty(8, 6), mask]
pred_lost = [mask, Mask.empty(8, 6), Mask.empty(8, 6)]  # never re-found

for name, pred in (("perfect", pred_good), ("loses the target", pred_lost)):
    report = evaluate({"obj": pred}, {"obj": gt})
    print(
        f"\n{name}: J={report.j:.3f} F={report.f:.3f} "
        f"J&F_disappear={report.jf_disappear} J&F_reappear={report.jf_reappear}"
    )
