"""Sequence evaluation: region similarity, boundary quality, phase-conditioned scores.

The report mirrors the usual VOS benchmark columns.  ``J`` is mean mask IoU,
``F`` is the boundary F-measure with a tolerance of ``ceil(0.8% * frame
diagonal)``, and ``F_dot`` is the same measure at a fixed absolute tolerance
(1 pixel unless overridden).  ``jf_disappear`` / ``jf_reappear`` average
``(J + F_dot) / 2`` over the frames labeled Disappeared / Reappeared.

Averaging rule per sequence: a frame contributes whenever the ground truth
has already appeared, or the prediction is non-empty (a spurious prediction
before first appearance is penalized).  Frames where both ground truth and
prediction are empty count as perfect (J = F = 1): correctly predicting
absence scores 1.0, which the disappearance column relies on.  Frames before
first appearance with an empty prediction are excluded so long leading
absences cannot inflate scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage

from .geometry import DimensionMismatch, Mask, boundary_array


class LengthMismatch(ValueError):
    """Prediction and ground-truth sequences have different frame counts."""


class ObjectSetMismatch(ValueError):
    """Prediction and ground-truth object id sets differ."""


class Phase(Enum):
    BEFORE_FIRST_APPEARANCE = "before_first_appearance"
    VISIBLE = "visible"
    DISAPPEARED = "disappeared"
    REAPPEARED = "reappeared"


@dataclass(frozen=True)
class FrameStatus:
    frame_index: int
    gt_present: bool
    phase: Phase


# Report field -> Table-style column header, in rendering order.
REPORT_COLUMNS: tuple[tuple[str, str], ...] = (
    ("jf_dot", "J&Ḟ"),
    ("j", "J"),
    ("f_dot", "Ḟ"),
    ("jf_disappear", "J&Ḟ_disappear"),
    ("jf_reappear", "J&Ḟ_reappear"),
    ("f", "F"),
    ("jf", "J&F"),
)


@dataclass(frozen=True)
class ObjectReport:
    object_id: str
    j: float
    f: float
    jf: float
    f_dot: float
    jf_dot: float
    jf_disappear: Optional[float]
    jf_reappear: Optional[float]
    jf_visible: Optional[float]


@dataclass(frozen=True)
class EvalReport:
    """All metric columns for one prediction/ground-truth pair."""

    j: float
    f: float
    jf: float
    f_dot: float
    jf_dot: float
    jf_disappear: Optional[float]
    jf_reappear: Optional[float]
    jf_visible: Optional[float]
    per_object: tuple[ObjectReport, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "j": self.j,
            "f": self.f,
            "jf": self.jf,
            "f_dot": self.f_dot,
            "jf_dot": self.jf_dot,
            "jf_disappear": self.jf_disappear,
            "jf_reappear": self.jf_reappear,
            "jf_visible": self.jf_visible,
            "per_object": [
                {
                    "object_id": o.object_id,
                    "j": o.j,
                    "f": o.f,
                    "jf": o.jf,
                    "f_dot": o.f_dot,
                    "jf_dot": o.jf_dot,
                    "jf_disappear": o.jf_disappear,
                    "jf_reappear": o.jf_reappear,
                    "jf_visible": o.jf_visible,
                }
                for o in self.per_object
            ],
        }

    @staticmethod
    def from_dict(doc: Mapping) -> "EvalReport":
        objects = tuple(
            ObjectReport(
                object_id=o["object_id"],
                j=o["j"],
                f=o["f"],
                jf=o["jf"],
                f_dot=o["f_dot"],
                jf_dot=o["jf_dot"],
                jf_disappear=o.get("jf_disappear"),
                jf_reappear=o.get("jf_reappear"),
                jf_visible=o.get("jf_visible"),
            )
            for o in doc.get("per_object", ())
        )
        return EvalReport(
            j=doc["j"],
            f=doc["f"],
            jf=doc["jf"],
            f_dot=doc["f_dot"],
            jf_dot=doc["jf_dot"],
            jf_disappear=doc.get("jf_disappear"),
            jf_reappear=doc.get("jf_reappear"),
            jf_visible=doc.get("jf_visible"),
            per_object=objects,
        )


def default_boundary_tolerance(frame_dims: tuple[int, int]) -> int:
    """``ceil(0.8% of the frame diagonal)``, the classical F tolerance."""
    width, height = frame_dims
    return math.ceil(0.008 * math.hypot(width, height))


def phases_from_presence(presence: Sequence[bool]) -> list[Phase]:
    """Label each frame given a ground-truth presence flag per frame.

    A frame is Disappeared when the target is absent after having appeared,
    and Reappeared when present again after any earlier Disappeared run; once
    reappeared, present frames stay Reappeared until the next disappearance.
    """
    labels: list[Phase] = []
    seen_present = False
    seen_disappeared = False
    for present in presence:
        if present:
            labels.append(Phase.REAPPEARED if seen_disappeared else Phase.VISIBLE)
            seen_present = True
        elif seen_present:
            labels.append(Phase.DISAPPEARED)
            seen_disappeared = True
        else:
            labels.append(Phase.BEFORE_FIRST_APPEARANCE)
    return labels


def classify_phases(gt: Sequence[Mask]) -> list[FrameStatus]:
    """Deterministic phase labeling of a ground-truth mask sequence."""
    presence = [not m.is_empty() for m in gt]
    return [
        FrameStatus(frame_index=t, gt_present=p, phase=phase)
        for t, (p, phase) in enumerate(zip(presence, phases_from_presence(presence)))
    ]


def _frame_iou(pred: np.ndarray, gt: np.ndarray) -> float:
    inter = int(np.logical_and(pred, gt).sum())
    union = int(np.logical_or(pred, gt).sum())
    if union == 0:
        return 1.0
    return inter / union


def region_similarity(pred: Sequence[Mask], gt: Sequence[Mask]) -> list[float]:
    """Per-frame mask IoU; both-empty frames score 1.0."""
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predicted frames vs {len(gt)} ground truth")
    values = []
    for p, g in zip(pred, gt):
        if (p.width, p.height) != (g.width, g.height):
            raise DimensionMismatch(
                f"frame dims differ: {p.width}x{p.height} vs {g.width}x{g.height}"
            )
        values.append(_frame_iou(p.to_array(), g.to_array()))
    return values


def boundary_f(pred: Mask, gt: Mask, tolerance: int) -> float:
    """Boundary F-measure under a Euclidean pixel-distance tolerance.

    A boundary pixel matches when its squared distance to the nearest
    opposite boundary pixel is <= tolerance**2; the comparison is done in
    exact integer arithmetic.  Returns 1.0 when both boundaries are empty and
    0.0 when exactly one is.
    """
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise DimensionMismatch(
            f"mask dimensions differ: {pred.width}x{pred.height} vs {gt.width}x{gt.height}"
        )
    if tolerance < 0:
        raise ValueError(f"tolerance must be >= 0, got {tolerance}")
    pred_b = boundary_array(pred)
    gt_b = boundary_array(gt)
    n_pred = int(pred_b.sum())
    n_gt = int(gt_b.sum())
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    matched_pred = _matched_count(pred_b, gt_b, tolerance)
    matched_gt = _matched_count(gt_b, pred_b, tolerance)
    precision = matched_pred / n_pred
    recall = matched_gt / n_gt
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _matched_count(source: np.ndarray, targets: np.ndarray, tolerance: int) -> int:
    """Count source-boundary pixels within ``tolerance`` of a target-boundary pixel.

    Uses the exact nearest-feature indices of the Euclidean distance
    transform, so the squared distances are integers and no float enters the
    comparison.
    """
    indices = ndimage.distance_transform_edt(
        ~targets, return_distances=False, return_indices=True
    )
    ys, xs = np.nonzero(source)
    near_y = indices[0][ys, xs].astype(np.int64)
    near_x = indices[1][ys, xs].astype(np.int64)
    d2 = (ys.astype(np.int64) - near_y) ** 2 + (xs.astype(np.int64) - near_x) ** 2
    return int((d2 <= tolerance * tolerance).sum())


def _included(phases: Sequence[Phase], pred_nonempty: Sequence[bool]) -> list[bool]:
    # A frame counts once the target has appeared, or when the prediction
    # wrongly claims presence before that.
    return [
        phase is not Phase.BEFORE_FIRST_APPEARANCE or nonempty
        for phase, nonempty in zip(phases, pred_nonempty)
    ]


def _mean(values: Sequence[float]) -> float:
    # An all-excluded sequence (nothing ever appears, nothing predicted) is
    # vacuously perfect.
    if not values:
        return 1.0
    return float(sum(values) / len(values))


def _optional_mean(values: Sequence[float]) -> Optional[float]:
    if not values:
        return None
    return float(sum(values) / len(values))


def _evaluate_object(
    object_id: str,
    pred: Sequence[Mask],
    gt: Sequence[Mask],
    f_dot_tolerance: int,
) -> ObjectReport:
    per_frame_j = region_similarity(pred, gt)
    statuses = classify_phases(gt)
    phases = [s.phase for s in statuses]
    pred_nonempty = [not m.is_empty() for m in pred]
    included = _included(phases, pred_nonempty)

    f_tol = default_boundary_tolerance((gt[0].width, gt[0].height))
    per_frame_f = [boundary_f(p, g, f_tol) for p, g in zip(pred, gt)]
    per_frame_f_dot = [boundary_f(p, g, f_dot_tolerance) for p, g in zip(pred, gt)]

    j = _mean([v for v, inc in zip(per_frame_j, included) if inc])
    f = _mean([v for v, inc in zip(per_frame_f, included) if inc])
    f_dot = _mean([v for v, inc in zip(per_frame_f_dot, included) if inc])

    def phase_jf_dot(phase: Phase) -> Optional[float]:
        values = [
            (jv + fv) / 2
            for jv, fv, ph in zip(per_frame_j, per_frame_f_dot, phases)
            if ph is phase
        ]
        return _optional_mean(values)

    return ObjectReport(
        object_id=object_id,
        j=j,
        f=f,
        jf=(j + f) / 2,
        f_dot=f_dot,
        jf_dot=(j + f_dot) / 2,
        jf_disappear=phase_jf_dot(Phase.DISAPPEARED),
        jf_reappear=phase_jf_dot(Phase.REAPPEARED),
        jf_visible=phase_jf_dot(Phase.VISIBLE),
    )


def evaluate(
    pred: Mapping[str, Sequence[Mask]],
    gt: Mapping[str, Sequence[Mask]],
    f_dot_tolerance: int = 1,
) -> EvalReport:
    """Evaluate per object, then average over objects in id order."""
    if set(pred) != set(gt):
        raise ObjectSetMismatch(
            f"prediction objects {sorted(pred)} vs ground truth {sorted(gt)}"
        )
    if not gt:
        raise ObjectSetMismatch("no objects to evaluate")
    objects = tuple(
        _evaluate_object(oid, pred[oid], gt[oid], f_dot_tolerance)
        for oid in sorted(gt)
    )
    return aggregate_object_reports(objects)


def aggregate_object_reports(objects: Sequence[ObjectReport]) -> EvalReport:
    """Mean-over-objects aggregation; optional fields average the objects that have them."""

    def opt_mean(values: list[Optional[float]]) -> Optional[float]:
        present = [v for v in values if v is not None]
        return _optional_mean(present)

    j = _mean([o.j for o in objects])
    f = _mean([o.f for o in objects])
    f_dot = _mean([o.f_dot for o in objects])
    return EvalReport(
        j=j,
        f=f,
        jf=_mean([o.jf for o in objects]),
        f_dot=f_dot,
        jf_dot=_mean([o.jf_dot for o in objects]),
        jf_disappear=opt_mean([o.jf_disappear for o in objects]),
        jf_reappear=opt_mean([o.jf_reappear for o in objects]),
        jf_visible=opt_mean([o.jf_visible for o in objects]),
        per_object=tuple(objects),
    )


def mean_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Mean over a set of reports (e.g. one per video), field by field."""

    def opt_mean(values: list[Optional[float]]) -> Optional[float]:
        present = [v for v in values if v is not None]
        return _optional_mean(present)

    if not reports:
        raise ValueError("no reports to aggregate")
    return EvalReport(
        j=_mean([r.j for r in reports]),
        f=_mean([r.f for r in reports]),
        jf=_mean([r.jf for r in reports]),
        f_dot=_mean([r.f_dot for r in reports]),
        jf_dot=_mean([r.jf_dot for r in reports]),
        jf_disappear=opt_mean([r.jf_disappear for r in reports]),
        jf_reappear=opt_mean([r.jf_reappear for r in reports]),
        jf_visible=opt_mean([r.jf_visible for r in reports]),
    )


def format_percent(value: Optional[float]) -> str:
    """Ratios render as percentages with two decimals; absent values as a dash."""
    if value is None:
        return "--"
    return f"{value * 100:.2f}"


def format_report(report: EvalReport, name: str = "run") -> str:
    """Flat text table in the standard column order."""
    headers = [header for _, header in REPORT_COLUMNS]
    values = [format_percent(getattr(report, fld)) for fld, _ in REPORT_COLUMNS]
    name_w = max(len("Method"), len(name))
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    head = " | ".join(["Method".ljust(name_w)] + [h.rjust(w) for h, w in zip(headers, widths)])
    rule = "-+-".join(["-" * name_w] + ["-" * w for w in widths])
    row = " | ".join([name.ljust(name_w)] + [v.rjust(w) for v, w in zip(values, widths)])
    return "\n".join([head, rule, row]) + "\n"
