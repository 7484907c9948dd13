"""Geometric reference backend: all four capabilities served from label grids.

The segmenter follows the actor identified under the first-frame mask and can
inject configured translation drift (cleared for good by the first corrective
box prompt).  The tracker returns ground-truth boxes with confidence 1 or 0.
The detector resolves the actor id embedded in the description string.  The
judge picks the crop covering more of the reference actor's ground truth.

Real model wrappers plug in the same way: register a callable per wire
method on a :class:`HandlerRegistry`; ``handler(params) -> payload`` or raise
:class:`BridgeError` with a machine-readable kind.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from . import rle
from .world import Dataset

METHODS = frozenset(
    {
        "init_segmenter",
        "propagate",
        "prompt_box",
        "init_tracker",
        "track",
        "describe",
        "detect",
        "judge",
        "classify_semantic",
        "shutdown",
    }
)

ROLES = {
    "segmenter": ("init_segmenter", "propagate", "prompt_box"),
    "tracker": ("init_tracker", "track"),
    "detector": ("describe", "detect"),
    "judge": ("judge", "classify_semantic"),
}


class BridgeError(Exception):
    """Handler failure with a wire-visible error kind."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind
        self.message = message


class HandlerRegistry:
    """Method name -> handler; capabilities are exactly the registered set."""

    def __init__(self) -> None:
        self._handlers: dict[str, Callable[[Mapping], dict]] = {}

    def register(self, method: str, handler: Callable[[Mapping], dict]) -> None:
        if method not in METHODS:
            raise ValueError(f"{method!r} is not in the protocol method set")
        self._handlers[method] = handler

    def capabilities(self) -> list[str]:
        return sorted(self._handlers) + ["shutdown"]

    def get(self, method: str) -> Optional[Callable[[Mapping], dict]]:
        return self._handlers.get(method)


@dataclass(frozen=True)
class DriftConfig:
    start: int
    dx: int
    dy: int


def _translated(grid: np.ndarray, dx: int, dy: int) -> np.ndarray:
    if dx == 0 and dy == 0:
        return grid
    out = np.zeros_like(grid)
    h, w = grid.shape
    src_y = slice(max(-dy, 0), min(h - dy, h))
    src_x = slice(max(-dx, 0), min(w - dx, w))
    dst_y = slice(max(dy, 0), min(h + dy, h))
    dst_x = slice(max(dx, 0), min(w + dx, w))
    out[dst_y, dst_x] = grid[src_y, src_x]
    return out


def _require(params: Mapping, *keys):
    values = []
    for key in keys:
        if key not in params:
            raise BridgeError("ProtocolViolation", f"missing parameter {key!r}")
        values.append(params[key])
    return values


class _SegmenterSessions:
    def __init__(self, dataset: Dataset, drift: Optional[DriftConfig]):
        self._dataset = dataset
        self._drift = drift
        self._sessions: dict[str, dict] = {}
        self._owners: set[tuple[str, str]] = set()
        self._counter = 0

    def init(self, params: Mapping) -> dict:
        video_id, object_id, first_index, mask_text = _require(
            params, "video_id", "object_id", "first_frame_index", "first_mask"
        )
        owner = (video_id, object_id)
        if owner in self._owners:
            raise BridgeError("DuplicateSession", f"session for {owner} already exists")
        mask = rle.decode(mask_text)
        if not mask.any():
            raise BridgeError("EmptyAnnotation", "first mask has no pixels")
        video = self._dataset.video(video_id)
        self._owners.add(owner)
        self._counter += 1
        session_id = f"seg-{self._counter}"
        self._sessions[session_id] = {
            "video": video,
            "anchor": video.actor_under_mask(mask, first_index),
            "anchor_frame": first_index,
            "current": first_index,
            "prompted": set(),
            "drift_disabled": False,
        }
        return {"session": session_id}

    def _session(self, params: Mapping) -> dict:
        (session_id,) = _require(params, "session")
        state = self._sessions.get(session_id)
        if state is None:
            raise BridgeError("UnknownSession", f"no segmenter session {session_id!r}")
        return state

    def propagate(self, params: Mapping) -> dict:
        state = self._session(params)
        (frame_index,) = _require(params, "frame_index")
        if frame_index not in (state["current"], state["current"] + 1):
            raise BridgeError(
                "OutOfOrderFrame",
                f"propagate({frame_index}) after frame {state['current']}",
            )
        state["current"] = frame_index
        video = state["video"]
        if state["anchor"] is None:
            grid = np.zeros((video.height, video.width), dtype=bool)
            return {"mask": rle.encode(grid)}
        grid = video.actor_grid(state["anchor"], frame_index)
        if self._drift is not None and not state["drift_disabled"]:
            steps = max(0, frame_index - max(self._drift.start, state["anchor_frame"]))
            grid = _translated(grid, self._drift.dx * steps, self._drift.dy * steps)
        return {"mask": rle.encode(grid)}

    def prompt_box(self, params: Mapping) -> dict:
        state = self._session(params)
        frame_index, box = _require(params, "frame_index", "bbox")
        if frame_index != state["current"]:
            raise BridgeError(
                "StaleFrame",
                f"prompt at frame {frame_index}, current frame is {state['current']}",
            )
        if frame_index in state["prompted"]:
            raise BridgeError("StaleFrame", f"frame {frame_index} was already prompted")
        state["prompted"].add(frame_index)
        state["anchor"] = state["video"].actor_under_bbox(box, frame_index)
        state["anchor_frame"] = frame_index
        state["drift_disabled"] = True
        return {"ok": True}


class _TrackerSessions:
    def __init__(self, dataset: Dataset):
        self._dataset = dataset
        self._sessions: dict[str, dict] = {}
        self._counter = 0

    def init(self, params: Mapping) -> dict:
        video_id, frame_index, box = _require(params, "video_id", "frame_index", "bbox")
        video = self._dataset.video(video_id)
        self._counter += 1
        session_id = f"trk-{self._counter}"
        self._sessions[session_id] = {
            "video": video,
            "actor": video.actor_under_bbox(box, frame_index),
        }
        return {"session": session_id}

    def track(self, params: Mapping) -> dict:
        (session_id,) = _require(params, "session")
        state = self._sessions.get(session_id)
        if state is None:
            raise BridgeError("UnknownSession", f"no tracker session {session_id!r}")
        (frame_index,) = _require(params, "frame_index")
        if state["actor"] is None:
            return {"bbox": None, "confidence": 0.0}
        box = state["video"].actor_bbox(state["actor"], frame_index)
        if box is None:
            return {"bbox": None, "confidence": 0.0}
        return {"bbox": box, "confidence": 1.0}


class _Detector:
    def __init__(self, dataset: Dataset):
        self._dataset = dataset
        self._described: set[str] = set()

    def describe(self, params: Mapping) -> dict:
        video_id, frame_index, mask_text = _require(
            params, "video_id", "frame_index", "mask"
        )
        video = self._dataset.video(video_id)
        actor = video.actor_under_mask(rle.decode(mask_text), frame_index)
        self._described.add(video_id)
        if actor is None:
            return {"description": "actor-0 unknown 0px []"}
        return {"description": video.description_for(actor)}

    def detect(self, params: Mapping) -> dict:
        video_id, frame_index, description = _require(
            params, "video_id", "frame_index", "description"
        )
        if video_id not in self._described:
            raise BridgeError("NotInitialized", "detect before describe")
        video = self._dataset.video(video_id)
        actor = None
        if description.startswith("actor-"):
            head = description.split()[0][len("actor-") :]
            if head.isdigit():
                actor = int(head)
        if actor is None or actor not in video.actors:
            return {"bbox": None, "confidence": 0.0}
        box = video.actor_bbox(actor, frame_index)
        if box is None:
            return {"bbox": None, "confidence": 0.0}
        return {"bbox": box, "confidence": 1.0}


class _Judge:
    def __init__(self, dataset: Dataset):
        self._dataset = dataset

    def judge(self, params: Mapping) -> dict:
        reference, baseline, auxiliary = _require(
            params, "reference", "baseline", "auxiliary"
        )
        video = self._dataset.video(reference["video_id"])
        actor = video.actor_under_bbox(reference["bbox"], reference["frame_index"])
        if actor is None:
            return {"choice": "baseline", "rationale": "no actor under reference crop"}
        overlap_base = video.overlap_in_bbox(actor, baseline["frame_index"], baseline["bbox"])
        overlap_aux = video.overlap_in_bbox(actor, auxiliary["frame_index"], auxiliary["bbox"])
        choice = "auxiliary" if overlap_aux > overlap_base else "baseline"
        return {
            "choice": choice,
            "rationale": f"overlap baseline={overlap_base} auxiliary={overlap_aux}",
        }

    def classify_semantic(self, params: Mapping) -> dict:
        video_id, frame_index, mask_text = _require(
            params, "video_id", "frame_index", "mask"
        )
        video = self._dataset.video(video_id)
        actor = video.actor_under_mask(rle.decode(mask_text), frame_index)
        if actor is None or not video.actors[actor].get("attributes"):
            return {"semantic": False, "description": None}
        return {"semantic": True, "description": video.description_for(actor)}


def reference_backend(
    dataset_root, roles: tuple[str, ...] = ("segmenter", "tracker", "detector", "judge"),
    drift: Optional[DriftConfig] = None,
) -> HandlerRegistry:
    """Registry serving the requested roles from simulator label grids."""
    dataset = Dataset(dataset_root)
    registry = HandlerRegistry()
    if "segmenter" in roles:
        segmenter = _SegmenterSessions(dataset, drift)
        registry.register("init_segmenter", segmenter.init)
        registry.register("propagate", segmenter.propagate)
        registry.register("prompt_box", segmenter.prompt_box)
    if "tracker" in roles:
        tracker = _TrackerSessions(dataset)
        registry.register("init_tracker", tracker.init)
        registry.register("track", tracker.track)
    if "detector" in roles:
        detector = _Detector(dataset)
        registry.register("describe", detector.describe)
        registry.register("detect", detector.detect)
    if "judge" in roles:
        judge = _Judge(dataset)
        registry.register("judge", judge.judge)
        registry.register("classify_semantic", judge.classify_semantic)
    return registry
