"""Stage orchestration: classify, attach enhancement, propagate, fuse, emit.

One video runs as: per object, open a segmenter session from the first-frame
annotation, classify the target, and walk the remaining frames.  Non-regular
targets are gated every ``evaluate_every`` frames: the auxiliary backend
proposes a box, the fusion policy decides, and an injected box is applied to
the same frame and the frame re-propagated (at most once), so a correction is
visible at the frame that needed it.

Objects never share state; videos are independent and may run in parallel
when the backend provider allows it.  Auxiliary backend failures degrade to
the baseline, only a segmenter failure fails the video.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import metrics
from .backends import (
    BackendError,
    BackendProvider,
    BackendSet,
    CropRef,
    EmptyAnnotation,
    SegmenterInit,
    TrackOutput,
)
from .classification import TargetClass, TargetVariant, classify_target
from .fusion import FusionAction, FusionConfig, FusionDecision, fuse_semantic, fuse_tiny
from .geometry import BBox, Mask, crop, mask_to_bbox
from .metrics import EvalReport
from .protocol import ProtocolError


class ManifestError(ValueError):
    """A malformed or inconsistent dataset manifest."""


@dataclass(frozen=True)
class ObjectEntry:
    object_id: str
    first_frame_index: int
    first_mask: Mask


@dataclass(frozen=True)
class VideoEntry:
    video_id: str
    frame_count: int
    width: int
    height: int
    objects: tuple[ObjectEntry, ...]
    gt_path: Optional[str] = None


@dataclass(frozen=True)
class Manifest:
    dataset_root: Path
    videos: tuple[VideoEntry, ...]

    def to_json(self) -> str:
        # Paths are resolved relative to the manifest file at load time, so
        # the document itself stays relocatable.
        doc = {
            "videos": [
                {
                    "video_id": v.video_id,
                    "frame_count": v.frame_count,
                    "width": v.width,
                    "height": v.height,
                    "objects": [
                        {
                            "object_id": o.object_id,
                            "first_frame_index": o.first_frame_index,
                            "first_mask": o.first_mask.to_rle_string(),
                        }
                        for o in v.objects
                    ],
                    "gt_path": v.gt_path,
                }
                for v in self.videos
            ]
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def load_manifest(path: Path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    videos = []
    for v in doc.get("videos", []):
        try:
            objects = []
            seen = set()
            for o in v["objects"]:
                if o["object_id"] in seen:
                    raise ManifestError(
                        f"duplicate object id {o['object_id']!r} in video {v['video_id']!r}"
                    )
                seen.add(o["object_id"])
                mask = Mask.from_rle_string(o["first_mask"])
                if (mask.width, mask.height) != (v["width"], v["height"]):
                    raise ManifestError(
                        f"first mask of {o['object_id']!r} has wrong dimensions"
                    )
                if not 0 <= o["first_frame_index"] < v["frame_count"]:
                    raise ManifestError(
                        f"first_frame_index of {o['object_id']!r} out of range"
                    )
                objects.append(
                    ObjectEntry(o["object_id"], o["first_frame_index"], mask)
                )
            videos.append(
                VideoEntry(
                    video_id=v["video_id"],
                    frame_count=v["frame_count"],
                    width=v["width"],
                    height=v["height"],
                    objects=tuple(objects),
                    gt_path=v.get("gt_path"),
                )
            )
        except (KeyError, ValueError) as exc:
            if isinstance(exc, ManifestError):
                raise
            raise ManifestError(f"malformed video entry: {exc}") from exc
    return Manifest(dataset_root=path.parent, videos=tuple(videos))


@dataclass(frozen=True)
class DecisionRecord:
    object_id: str
    frame_index: int
    action: str
    reason: str
    iou_observed: Optional[float]
    chosen_bbox: Optional[BBox]

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "object_id": self.object_id,
                "frame": self.frame_index,
                "action": self.action,
                "reason": self.reason,
                "iou": self.iou_observed,
                "bbox": self.chosen_bbox.as_list() if self.chosen_bbox else None,
            },
            sort_keys=True,
        )


@dataclass
class VideoRunResult:
    video_id: str
    predictions: dict[str, list[Mask]]
    decisions: list[DecisionRecord]
    target_classes: dict[str, TargetClass]
    timings: dict[str, float]
    config: FusionConfig


@dataclass(frozen=True)
class VideoFailure:
    video_id: str
    error: str


@dataclass
class DatasetRunResult:
    results: list[VideoRunResult] = field(default_factory=list)
    failures: list[VideoFailure] = field(default_factory=list)
    reports: dict[str, EvalReport] = field(default_factory=dict)
    aggregate: Optional[EvalReport] = None


def _record(object_id: str, frame_index: int, decision: FusionDecision) -> DecisionRecord:
    return DecisionRecord(
        object_id=object_id,
        frame_index=frame_index,
        action=decision.action.value,
        reason=decision.reason.value,
        iou_observed=decision.iou_observed,
        chosen_bbox=decision.chosen_bbox,
    )


def _auxiliary(call) -> TrackOutput:
    # Auxiliary backends are advisory: a timeout or outage means "no proposal
    # this frame", never an aborted video.
    try:
        return call()
    except (ProtocolError, BackendError):
        return TrackOutput(bbox=None, confidence=0.0)


def run_video(
    entry: VideoEntry,
    backends: BackendSet,
    cfg: FusionConfig,
    *,
    baseline_only: bool = False,
    apply_same_frame: bool = True,
) -> VideoRunResult:
    """Run the full pipeline (or the bare segmenter) over one video."""
    dims = (entry.width, entry.height)
    predictions: dict[str, list[Mask]] = {}
    decisions: list[DecisionRecord] = []
    target_classes: dict[str, TargetClass] = {}
    timings = {"classify": 0.0, "propagate": 0.0, "fuse": 0.0}

    for obj in entry.objects:
        masks = [Mask.empty(entry.width, entry.height)] * entry.frame_count
        masks[obj.first_frame_index] = obj.first_mask
        session = backends.segmenter.init(
            SegmenterInit(
                video_id=entry.video_id,
                object_id=obj.object_id,
                first_frame_index=obj.first_frame_index,
                first_mask=obj.first_mask,
            )
        )

        target_class: Optional[TargetClass] = None
        tracker_session = None
        description: Optional[str] = None
        reference_crop: Optional[CropRef] = None
        if not baseline_only:
            t0 = time.perf_counter()
            try:
                target_class = classify_target(
                    obj.first_mask,
                    dims,
                    cfg,
                    backends.judge,
                    (entry.video_id, obj.first_frame_index),
                )
            except (ProtocolError, BackendError):
                # An unreachable oracle cannot route the object anywhere
                # special; only segmenter failures are fatal.
                target_class = TargetClass(TargetVariant.REGULAR, area_ratio=0.0)
            timings["classify"] += time.perf_counter() - t0
            target_classes[obj.object_id] = target_class
            first_bbox = mask_to_bbox(obj.first_mask)
            assert first_bbox is not None  # SegmenterInit rejected empty masks
            if target_class.variant is TargetVariant.TINY:
                try:
                    tracker_session = backends.tracker.init(
                        first_bbox, (entry.video_id, obj.first_frame_index)
                    )
                except (ProtocolError, BackendError):
                    tracker_session = None  # every gate sees a missing auxiliary
            elif target_class.variant is TargetVariant.SEMANTIC_DOMINATED:
                try:
                    description = backends.detector.describe(
                        (entry.video_id, obj.first_frame_index), obj.first_mask
                    )
                except (ProtocolError, BackendError):
                    description = None
                reference_crop = CropRef(
                    entry.video_id,
                    obj.first_frame_index,
                    crop(dims, first_bbox, cfg.judge_crop_pad),
                )

        for t in range(obj.first_frame_index + 1, entry.frame_count):
            t0 = time.perf_counter()
            mask = session.propagate(t)
            timings["propagate"] += time.perf_counter() - t0
            gate_now = (
                not baseline_only
                and target_class is not None
                and target_class.variant is not TargetVariant.REGULAR
                and t % cfg.evaluate_every == 0
            )
            if gate_now:
                t0 = time.perf_counter()
                if target_class.variant is TargetVariant.TINY:
                    if tracker_session is None:
                        aux = TrackOutput(bbox=None, confidence=0.0)
                    else:
                        aux = _auxiliary(lambda: tracker_session.track(t))
                    decision = fuse_tiny(mask, aux, cfg)
                else:
                    if description is None:
                        aux = TrackOutput(bbox=None, confidence=0.0)
                    else:
                        aux = _auxiliary(lambda: backends.detector.detect(t, description))
                    decision = fuse_semantic(
                        mask,
                        aux,
                        reference_crop,
                        (entry.video_id, t),
                        backends.judge,
                        cfg,
                        dims,
                    )
                decisions.append(_record(obj.object_id, t, decision))
                if decision.action is FusionAction.INJECT_AUXILIARY:
                    session.prompt_box(t, decision.chosen_bbox)
                    if apply_same_frame:
                        mask = session.propagate(t)
                timings["fuse"] += time.perf_counter() - t0
            masks[t] = mask
        predictions[obj.object_id] = masks

    return VideoRunResult(
        video_id=entry.video_id,
        predictions=predictions,
        decisions=decisions,
        target_classes=target_classes,
        timings=timings,
        config=cfg,
    )


def load_gt_masks(manifest: Manifest, entry: VideoEntry) -> dict[str, list[Mask]]:
    """Ground-truth mask sequences from the per-frame RLE layout."""
    if entry.gt_path is None:
        raise ManifestError(f"video {entry.video_id} has no gt_path")
    gt_root = Path(manifest.dataset_root) / entry.gt_path
    out: dict[str, list[Mask]] = {}
    for obj in entry.objects:
        seq = []
        for t in range(entry.frame_count):
            path = gt_root / obj.object_id / f"{t:05d}.rle"
            try:
                seq.append(Mask.from_rle_string(path.read_text()))
            except OSError as exc:
                raise ManifestError(f"missing ground truth file {path}") from exc
        out[obj.object_id] = seq
    return out


def run_dataset(
    manifest: Manifest,
    provider: BackendProvider,
    cfg: FusionConfig,
    *,
    parallelism: int = 1,
    baseline_only: bool = False,
    apply_same_frame: bool = True,
    evaluate_gt: bool = True,
) -> DatasetRunResult:
    """Run every video in the manifest; failures are isolated per video."""
    if not manifest.videos:
        raise ManifestError("manifest lists no videos")

    def one(entry: VideoEntry):
        try:
            backends = provider.backends_for(entry.video_id)
            return run_video(
                entry,
                backends,
                cfg,
                baseline_only=baseline_only,
                apply_same_frame=apply_same_frame,
            )
        except Exception as exc:  # noqa: BLE001 -- per-video isolation is the contract
            return VideoFailure(entry.video_id, f"{type(exc).__name__}: {exc}")

    jobs = max(1, parallelism) if provider.supports_parallel else 1
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, manifest.videos))
    else:
        outcomes = [one(entry) for entry in manifest.videos]

    result = DatasetRunResult()
    for entry, outcome in zip(manifest.videos, outcomes):
        if isinstance(outcome, VideoFailure):
            result.failures.append(outcome)
            continue
        result.results.append(outcome)
        if evaluate_gt and entry.gt_path is not None:
            gt = load_gt_masks(manifest, entry)
            result.reports[entry.video_id] = metrics.evaluate(
                outcome.predictions, gt, cfg.f_dot_tolerance
            )
    if result.reports:
        result.aggregate = metrics.mean_reports(
            [result.reports[vid] for vid in sorted(result.reports)]
        )
    return result


# ---------------------------------------------------------------------------
# Run artifact layout: <out>/<video>/<object>/<frame>.rle, decisions.log,
# report.txt / report.json at the top level.
# ---------------------------------------------------------------------------


def write_video_artifacts(out_dir: Path, result: VideoRunResult) -> None:
    video_dir = Path(out_dir) / result.video_id
    for object_id, masks in result.predictions.items():
        obj_dir = video_dir / object_id
        obj_dir.mkdir(parents=True, exist_ok=True)
        for t, mask in enumerate(masks):
            (obj_dir / f"{t:05d}.rle").write_text(mask.to_rle_string() + "\n")
    video_dir.mkdir(parents=True, exist_ok=True)
    log_lines = [record.to_json_line() for record in result.decisions]
    (video_dir / "decisions.log").write_text("\n".join(log_lines) + ("\n" if log_lines else ""))


def write_reports(
    out_dir: Path,
    aggregate: EvalReport,
    per_video: dict[str, EvalReport],
    name: str = "run",
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "aggregate": aggregate.to_dict(),
        "videos": {vid: report.to_dict() for vid, report in sorted(per_video.items())},
    }
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    lines = [metrics.format_report(aggregate, name=name)]
    for vid in sorted(per_video):
        lines.append(metrics.format_report(per_video[vid], name=vid))
    (out / "report.txt").write_text("\n".join(lines))


def read_predictions(pred_dir: Path, entry: VideoEntry) -> dict[str, list[Mask]]:
    """Load a prediction tree written by :func:`write_video_artifacts`."""
    video_dir = Path(pred_dir) / entry.video_id
    if not video_dir.is_dir():
        raise metrics.ObjectSetMismatch(f"no predictions for video {entry.video_id}")
    found = sorted(p.name for p in video_dir.iterdir() if p.is_dir())
    expected = sorted(o.object_id for o in entry.objects)
    if found != expected:
        raise metrics.ObjectSetMismatch(
            f"video {entry.video_id}: predicted objects {found} vs manifest {expected}"
        )
    out: dict[str, list[Mask]] = {}
    for object_id in expected:
        seq = []
        for t in range(entry.frame_count):
            path = video_dir / object_id / f"{t:05d}.rle"
            try:
                seq.append(Mask.from_rle_string(path.read_text()))
            except OSError as exc:
                raise metrics.LengthMismatch(
                    f"missing prediction file {path}"
                ) from exc
        out[object_id] = seq
    return out
