"""Per-frame prompt fusion: keep the baseline mask or inject an auxiliary box.

The gate compares the bounding box of the segmenter's predicted mask against
the auxiliary box.  Agreement (IoU at or above the threshold) always keeps
the baseline, and the judge is never consulted in that case.  Disagreement is
arbitrated by confidence (tracker path) or by a forced-choice crop judge
(detector path).  An empty baseline mask counts as IoU 0; on the detector
path it skips the judge entirely because there is no baseline crop to show.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

from . import geometry
from .backends import CropRef, FrameRef, Judge, JudgeChoice, TrackOutput
from .geometry import BBox, Mask
from .protocol import BackendTimeout


class FusionAction(Enum):
    KEEP_BASELINE = "keep_baseline"
    INJECT_AUXILIARY = "inject_auxiliary"
    JUDGE_ARBITRATED = "judge_arbitrated"


class FusionReason(Enum):
    IOU_ABOVE_THRESHOLD = "iou_above_threshold"
    AUX_MISSING = "aux_missing"
    LOW_CONFIDENCE = "low_confidence"
    HIGH_CONFIDENCE_INJECT = "high_confidence_inject"
    JUDGE_CHOSE_BASELINE = "judge_chose_baseline"
    JUDGE_CHOSE_AUXILIARY = "judge_chose_auxiliary"


@dataclass(frozen=True)
class FusionConfig:
    """Every knob of the decision policy, all config-file overridable."""

    iou_threshold: float = 0.5
    confidence_threshold: float = 0.5
    tiny_area_ratio: float = 0.001
    judge_crop_pad: int = 8
    evaluate_every: int = 1
    f_dot_tolerance: int = 1

    def __post_init__(self) -> None:
        for name in ("iou_threshold", "confidence_threshold", "tiny_area_ratio"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.evaluate_every < 1:
            raise ValueError(f"evaluate_every must be >= 1, got {self.evaluate_every}")
        if self.judge_crop_pad < 0:
            raise ValueError(f"judge_crop_pad must be >= 0, got {self.judge_crop_pad}")
        if self.f_dot_tolerance < 0:
            raise ValueError(f"f_dot_tolerance must be >= 0, got {self.f_dot_tolerance}")

    def to_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "confidence_threshold": self.confidence_threshold,
            "tiny_area_ratio": self.tiny_area_ratio,
            "judge_crop_pad": self.judge_crop_pad,
            "evaluate_every": self.evaluate_every,
            "f_dot_tolerance": self.f_dot_tolerance,
        }

    @staticmethod
    def from_mapping(values: Mapping[str, str]) -> "FusionConfig":
        """Build from string-valued config entries (e.g. a parsed config file section)."""
        kwargs = {}
        for fld, caster in (
            ("iou_threshold", float),
            ("confidence_threshold", float),
            ("tiny_area_ratio", float),
            ("judge_crop_pad", int),
            ("evaluate_every", int),
            ("f_dot_tolerance", int),
        ):
            if fld in values:
                kwargs[fld] = caster(values[fld])
        unknown = set(values) - {name for name, _ in FusionConfig.__dataclass_fields__.items()}
        if unknown:
            raise ValueError(f"unknown fusion config keys: {sorted(unknown)}")
        return FusionConfig(**kwargs)


@dataclass(frozen=True)
class FusionDecision:
    action: FusionAction
    chosen_bbox: Optional[BBox]
    iou_observed: Optional[float]
    reason: FusionReason

    def __post_init__(self) -> None:
        if self.action is FusionAction.INJECT_AUXILIARY and self.chosen_bbox is None:
            raise ValueError("inject decisions must carry the chosen bbox")
        if (
            self.reason is FusionReason.LOW_CONFIDENCE
            and self.action is not FusionAction.KEEP_BASELINE
        ):
            raise ValueError("low confidence always keeps the baseline")


def _keep(reason: FusionReason, iou: Optional[float] = None) -> FusionDecision:
    return FusionDecision(FusionAction.KEEP_BASELINE, None, iou, reason)


def _gate_iou(sam_mask: Mask, aux_bbox: BBox) -> float:
    sam_bbox = geometry.mask_to_bbox(sam_mask)
    if sam_bbox is None:
        return 0.0
    return geometry.bbox_iou(sam_bbox, aux_bbox)


def fuse_tiny(sam_mask: Mask, aux: TrackOutput, cfg: FusionConfig) -> FusionDecision:
    """Confidence-gated fusion for the tracker path.

    Only the bounding box of the mask is inspected; two masks with the same
    bbox always produce the same decision.
    """
    if aux.bbox is None:
        return _keep(FusionReason.AUX_MISSING)
    iou = _gate_iou(sam_mask, aux.bbox)
    if iou >= cfg.iou_threshold:
        return _keep(FusionReason.IOU_ABOVE_THRESHOLD, iou)
    if aux.confidence < cfg.confidence_threshold:
        return _keep(FusionReason.LOW_CONFIDENCE, iou)
    return FusionDecision(
        FusionAction.INJECT_AUXILIARY, aux.bbox, iou, FusionReason.HIGH_CONFIDENCE_INJECT
    )


def fuse_semantic(
    sam_mask: Mask,
    det: TrackOutput,
    reference_crop: CropRef,
    frame: FrameRef,
    judge: Judge,
    cfg: FusionConfig,
    frame_dims: tuple[int, int],
) -> FusionDecision:
    """Judge-arbitrated fusion for the detector path.

    The judge sees padded crops around both candidate boxes together with the
    first-frame reference crop.  A judge timeout degrades to the baseline; it
    never aborts the run.
    """
    if det.bbox is None:
        return _keep(FusionReason.AUX_MISSING)
    iou = _gate_iou(sam_mask, det.bbox)
    if iou >= cfg.iou_threshold:
        return _keep(FusionReason.IOU_ABOVE_THRESHOLD, iou)
    sam_bbox = geometry.mask_to_bbox(sam_mask)
    if sam_bbox is None:
        # Total baseline failure: nothing to show the judge, inject outright.
        return FusionDecision(
            FusionAction.INJECT_AUXILIARY, det.bbox, iou, FusionReason.HIGH_CONFIDENCE_INJECT
        )
    video_id, frame_index = frame
    baseline_crop = CropRef(
        video_id, frame_index, geometry.crop(frame_dims, sam_bbox, cfg.judge_crop_pad)
    )
    auxiliary_crop = CropRef(
        video_id, frame_index, geometry.crop(frame_dims, det.bbox, cfg.judge_crop_pad)
    )
    try:
        verdict = judge.compare(reference_crop, baseline_crop, auxiliary_crop)
    except BackendTimeout:
        return _keep(FusionReason.AUX_MISSING, iou)
    if verdict.choice is JudgeChoice.AUXILIARY_CROP:
        return FusionDecision(
            FusionAction.INJECT_AUXILIARY, det.bbox, iou, FusionReason.JUDGE_CHOSE_AUXILIARY
        )
    return _keep(FusionReason.JUDGE_CHOSE_BASELINE, iou)
