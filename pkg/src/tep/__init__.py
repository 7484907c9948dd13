"""Tracking-enhanced prompting for video object segmentation.

The package orchestrates a prompt-fusion pipeline over pluggable
segmentation/tracking/detection/judge backends, and ships a synthetic
scenario generator, deterministic mock backends, a wire protocol for remote
backends, and a full evaluation suite, so every decision rule is executable
and testable without any foundation model.
"""

from .backends import (
    BackendSet,
    CropRef,
    DriftModel,
    JudgeChoice,
    JudgeVerdict,
    SegmenterInit,
    SemanticVerdict,
    TrackOutput,
)
from .classification import TargetClass, TargetVariant, classify_target
from .fusion import FusionAction, FusionConfig, FusionDecision, FusionReason, fuse_semantic, fuse_tiny
from .geometry import BBox, Mask, bbox_iou, boundary_pixels, crop, mask_area, mask_iou, mask_to_bbox
from .metrics import EvalReport, FrameStatus, Phase, boundary_f, classify_phases, evaluate, region_similarity
from .pipeline import Manifest, load_manifest, run_dataset, run_video
from .simulator import ScenarioSpec, SyntheticVideo, generate, scenario_suite

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "BackendSet",
    "CropRef",
    "DriftModel",
    "EvalReport",
    "FrameStatus",
    "FusionAction",
    "FusionConfig",
    "FusionDecision",
    "FusionReason",
    "JudgeChoice",
    "JudgeVerdict",
    "Manifest",
    "Mask",
    "Phase",
    "ScenarioSpec",
    "SegmenterInit",
    "SemanticVerdict",
    "SyntheticVideo",
    "TargetClass",
    "TargetVariant",
    "TrackOutput",
    "bbox_iou",
    "boundary_f",
    "boundary_pixels",
    "classify_phases",
    "classify_target",
    "crop",
    "evaluate",
    "fuse_semantic",
    "fuse_tiny",
    "generate",
    "load_manifest",
    "mask_area",
    "mask_iou",
    "mask_to_bbox",
    "region_similarity",
    "run_dataset",
    "run_video",
    "scenario_suite",
]
