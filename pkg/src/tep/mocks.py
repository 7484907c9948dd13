"""Deterministic in-process backends driven by simulator label grids.

Every mock is a pure function of (scenario on disk, profile, call history),
so identical runs produce identical outputs.  The failure profiles are the
minimal family that exercises all three fusion outcomes:

* ``drift``: from ``drift_start`` the segmenter's masks translate (and
  optionally shrink) a step per frame; the first corrective box prompt
  re-anchors the mask and permanently stops the drift.
* ``blind``: the segmenter loses the target during each full disappearance
  and keeps emitting empty masks after reappearance until a corrective
  prompt re-anchors it; a later disappearance blinds it again.
* ``noisy`` tracker: seeded +/-2 px box jitter, confidence decaying by 0.05
  per occluded frame, snapping back to 1.0 on reappearance.
* ``confused`` detector: a scripted window of frames where it returns a
  distractor's box instead of the target's.

The identity-aware judge resolves the actor under the reference crop and
picks the candidate crop covering more of that actor's ground truth; exact
ties keep the baseline.
"""

from __future__ import annotations

import json
import re
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .backends import (
    BackendSet,
    BackendProvider,
    CropRef,
    Detector,
    DriftModel,
    DuplicateSession,
    EmptyAnnotation,
    FrameRef,
    Judge,
    JudgeChoice,
    JudgeVerdict,
    NotInitialized,
    OutOfOrderFrame,
    Segmenter,
    SegmenterInit,
    SegmenterSession,
    SemanticVerdict,
    StaleFrame,
    TrackOutput,
    Tracker,
    TrackerSession,
)
from .geometry import BBox, Mask, mask_overlap_in_bbox, mask_to_bbox, translate
from .simulator import CLUTTER_ID, ScenarioSpec, parse_labels_text

SEGMENTER_PROFILES = ("oracle", "drift", "blind")
TRACKER_PROFILES = ("oracle", "noisy")
DETECTOR_PROFILES = ("oracle", "confused")
JUDGE_PROFILES = ("oracle",)

#: Translation drift used by the ``drift`` profile.
DRIFT_PROFILE = DriftModel(drift_start=3, drift_offset_per_frame=(2, 1))

#: Occlusion blindness used by the ``blind`` profile.
BLIND_PROFILE = DriftModel(occlusion_blindness=True)

_DESCRIPTION_RE = re.compile(r"^actor-(\d+)\b")


class DatasetMissing(FileNotFoundError):
    """The dataset root does not contain the expected video layout."""


def describe_actor(actor_id: int, shape: str, size: int, attributes) -> str:
    """The deterministic description string shared by detector and judge."""
    return f"actor-{actor_id} {shape} {size}px [{','.join(attributes)}]"


def actor_id_from_description(description: str) -> Optional[int]:
    match = _DESCRIPTION_RE.match(description)
    return int(match.group(1)) if match else None


class VideoWorld:
    """Read-only view of one generated video: label grids plus actor metadata."""

    def __init__(self, dataset_root: Path, video_id: str):
        self.video_id = video_id
        self._root = Path(dataset_root) / video_id
        scenario_path = self._root / "scenario.json"
        if not scenario_path.is_file():
            raise DatasetMissing(f"no scenario at {scenario_path}")
        self.spec = ScenarioSpec.from_dict(json.loads(scenario_path.read_text()))
        self._actors = {a.actor_id: a for a in self.spec.actors}
        self._grids: dict[int, np.ndarray] = {}
        self._masks: dict[tuple[int, int], Mask] = {}

    @property
    def frame_dims(self) -> tuple[int, int]:
        return self.spec.width, self.spec.height

    @property
    def num_frames(self) -> int:
        return self.spec.num_frames

    def actor_ids(self) -> list[int]:
        return sorted(self._actors)

    def actor(self, actor_id: int):
        return self._actors[actor_id]

    def distractor_ids(self) -> list[int]:
        return [a.actor_id for a in self.spec.actors if a.identity == "distractor"]

    def label_grid(self, frame_index: int) -> np.ndarray:
        if frame_index not in self._grids:
            path = self._root / "frames" / f"{frame_index:05d}.labels"
            if not path.is_file():
                raise DatasetMissing(f"no label grid at {path}")
            self._grids[frame_index] = parse_labels_text(path.read_text())
        return self._grids[frame_index]

    def actor_mask(self, actor_id: int, frame_index: int) -> Mask:
        key = (actor_id, frame_index)
        if key not in self._masks:
            self._masks[key] = Mask.from_array(self.label_grid(frame_index) == actor_id)
        return self._masks[key]

    def actor_bbox(self, actor_id: int, frame_index: int) -> Optional[BBox]:
        return mask_to_bbox(self.actor_mask(actor_id, frame_index))

    def actor_visible(self, actor_id: int, frame_index: int) -> bool:
        return not self.actor_mask(actor_id, frame_index).is_empty()

    def actor_under_mask(self, mask: Mask, frame_index: int) -> Optional[int]:
        """Actor with the most pixels under the mask; ties pick the lowest id."""
        grid = self.label_grid(frame_index)
        values = grid[mask.to_array()]
        return self._majority(values)

    def actor_under_bbox(self, box: BBox, frame_index: int) -> Optional[int]:
        grid = self.label_grid(frame_index)
        h, w = grid.shape
        y0, y1 = max(box.y0, 0), min(box.y1, h)
        x0, x1 = max(box.x0, 0), min(box.x1, w)
        if y0 >= y1 or x0 >= x1:
            return None
        return self._majority(grid[y0:y1, x0:x1].ravel())

    @staticmethod
    def _majority(values: np.ndarray) -> Optional[int]:
        ids, counts = np.unique(values, return_counts=True)
        keep = (ids > 0) & (ids != CLUTTER_ID)
        ids, counts = ids[keep], counts[keep]
        if ids.size == 0:
            return None
        best = counts.max()
        return int(ids[counts == best].min())

    def description_for(self, actor_id: int) -> str:
        actor = self._actors[actor_id]
        return describe_actor(actor_id, actor.shape, actor.size, actor.attributes)


def _shrunk(mask: Mask, factor: float) -> Mask:
    """Keep only the center-scaled portion of the mask's bounding box."""
    box = mask_to_bbox(mask)
    if box is None or factor >= 1.0:
        return mask
    new_w = max(1, int(round(box.width * factor)))
    new_h = max(1, int(round(box.height * factor)))
    x0 = box.x0 + (box.width - new_w) // 2
    y0 = box.y0 + (box.height - new_h) // 2
    window = Mask.from_bbox(mask.width, mask.height, BBox(x0, y0, x0 + new_w, y0 + new_h))
    return Mask.from_array(mask.to_array() & window.to_array())


class _MockSegmenterSession(SegmenterSession):
    def __init__(self, world: VideoWorld, init: SegmenterInit, drift: Optional[DriftModel]):
        self._world = world
        self._drift = drift
        self._anchor = world.actor_under_mask(init.first_mask, init.first_frame_index)
        self._anchor_frame = init.first_frame_index
        self._current = init.first_frame_index
        self._prompted: set[int] = set()
        self._drift_disabled = False
        self._lost = False

    def propagate(self, frame_index: int) -> Mask:
        if frame_index not in (self._current, self._current + 1):
            raise OutOfOrderFrame(
                f"propagate({frame_index}) after frame {self._current}"
            )
        self._current = frame_index
        width, height = self._world.frame_dims
        if self._anchor is None:
            return Mask.empty(width, height)
        gt = self._world.actor_mask(self._anchor, frame_index)
        if self._drift is not None and self._drift.occlusion_blindness:
            if gt.is_empty():
                self._lost = True
            if self._lost:
                return Mask.empty(width, height)
        steps = 0
        if self._drift is not None and not self._drift_disabled:
            steps = max(0, frame_index - max(self._drift.drift_start, self._anchor_frame))
        if steps == 0:
            return gt
        dx, dy = self._drift.drift_offset_per_frame
        mask = translate(gt, dx * steps, dy * steps)
        if self._drift.shrink_per_frame > 0:
            mask = _shrunk(mask, (1.0 - self._drift.shrink_per_frame) ** steps)
        return mask

    def prompt_box(self, frame_index: int, box: BBox) -> None:
        if frame_index != self._current:
            raise StaleFrame(
                f"prompt at frame {frame_index}, current frame is {self._current}"
            )
        if frame_index in self._prompted:
            raise StaleFrame(f"frame {frame_index} was already prompted")
        self._prompted.add(frame_index)
        self._anchor = self._world.actor_under_bbox(box, frame_index)
        self._anchor_frame = frame_index
        self._drift_disabled = True
        self._lost = False


class MockSegmenter(Segmenter):
    def __init__(self, world: VideoWorld, drift: Optional[DriftModel] = None):
        self._world = world
        self._drift = drift
        self._sessions: set[tuple[str, str]] = set()

    def init(self, init: SegmenterInit) -> SegmenterSession:
        if init.first_mask.is_empty():
            raise EmptyAnnotation("segmenter needs a non-empty first mask")
        key = (init.video_id, init.object_id)
        if key in self._sessions:
            raise DuplicateSession(f"session for {key} already exists")
        self._sessions.add(key)
        return _MockSegmenterSession(self._world, init, self._drift)


def _stable_seed(*parts) -> int:
    text = "/".join(str(p) for p in parts)
    return zlib.crc32(text.encode("utf-8"))


def _clamp_box(box: BBox, dims: tuple[int, int]) -> BBox:
    width, height = dims
    x0 = min(max(box.x0, 0), width - box.width)
    y0 = min(max(box.y0, 0), height - box.height)
    return BBox(x0, y0, x0 + box.width, y0 + box.height)


class _MockTrackerSession(TrackerSession):
    def __init__(self, world: VideoWorld, actor_id: Optional[int], noisy: bool):
        self._world = world
        self._actor = actor_id
        self._noisy = noisy
        self._rng = np.random.default_rng(_stable_seed(world.video_id, actor_id, "tracker"))

    def _absence_run(self, frame_index: int) -> int:
        run = 0
        t = frame_index
        while t >= 0 and not self._world.actor_visible(self._actor, t):
            run += 1
            t -= 1
        return run

    def _last_seen_bbox(self, frame_index: int) -> Optional[BBox]:
        for t in range(frame_index, -1, -1):
            box = self._world.actor_bbox(self._actor, t)
            if box is not None:
                return box
        return None

    def track(self, frame_index: int) -> TrackOutput:
        if self._actor is None:
            return TrackOutput(bbox=None, confidence=0.0)
        if not self._noisy:
            box = self._world.actor_bbox(self._actor, frame_index)
            if box is None:
                return TrackOutput(bbox=None, confidence=0.0)
            return TrackOutput(bbox=box, confidence=1.0)
        # Noisy profile: the jitter stream advances once per call so a
        # standalone replay of the seeded generator reproduces it exactly.
        dx, dy = (int(v) for v in self._rng.integers(-2, 3, size=2))
        if self._world.actor_visible(self._actor, frame_index):
            base = self._world.actor_bbox(self._actor, frame_index)
            confidence = 1.0
        else:
            base = self._last_seen_bbox(frame_index)
            confidence = max(0.0, 1.0 - 0.05 * self._absence_run(frame_index))
        if base is None or confidence == 0.0:
            return TrackOutput(bbox=None, confidence=0.0)
        jittered = _clamp_box(
            BBox(base.x0 + dx, base.y0 + dy, base.x1 + dx, base.y1 + dy),
            self._world.frame_dims,
        )
        return TrackOutput(bbox=jittered, confidence=confidence)


class MockTracker(Tracker):
    def __init__(self, world: VideoWorld, noisy: bool = False):
        self._world = world
        self._noisy = noisy

    def init(self, template_bbox: BBox, first_frame: FrameRef) -> TrackerSession:
        _, frame_index = first_frame
        actor = self._world.actor_under_bbox(template_bbox, frame_index)
        return _MockTrackerSession(self._world, actor, self._noisy)


class MockDetector(Detector):
    """Detection scripted off the description string's embedded actor id."""

    def __init__(self, world: VideoWorld, confusion: Optional[Mapping[int, int]] = None):
        self._world = world
        self._confusion = dict(confusion) if confusion else {}
        self._initialized = False

    def describe(self, first_frame: FrameRef, mask: Mask) -> str:
        _, frame_index = first_frame
        actor = self._world.actor_under_mask(mask, frame_index)
        self._initialized = True
        if actor is None:
            return "actor-0 unknown 0px []"
        return self._world.description_for(actor)

    def detect(self, frame_index: int, description: str) -> TrackOutput:
        if not self._initialized:
            raise NotInitialized("detect before describe")
        actor = self._confusion.get(frame_index, actor_id_from_description(description))
        if actor is None or actor not in self._world.actor_ids():
            return TrackOutput(bbox=None, confidence=0.0)
        box = self._world.actor_bbox(actor, frame_index)
        if box is None:
            return TrackOutput(bbox=None, confidence=0.0)
        return TrackOutput(bbox=box, confidence=1.0)


def default_confusion_schedule(world: VideoWorld) -> dict[int, int]:
    """The ``confused`` profile: mid-video window redirected to the first distractor."""
    distractors = world.distractor_ids()
    if not distractors:
        return {}
    start = world.num_frames // 3
    end = world.num_frames // 2
    return {t: distractors[0] for t in range(start, end)}


class MockJudge(Judge):
    def __init__(self, world: VideoWorld, script: Optional[Mapping[int, JudgeChoice]] = None):
        self._world = world
        self._script = dict(script) if script else None

    def compare(self, reference: CropRef, baseline: CropRef, auxiliary: CropRef) -> JudgeVerdict:
        if self._script is not None and baseline.frame_index in self._script:
            choice = self._script[baseline.frame_index]
            return JudgeVerdict(choice=choice, rationale="scripted")
        actor = self._world.actor_under_bbox(reference.bbox, reference.frame_index)
        if actor is None:
            return JudgeVerdict(
                choice=JudgeChoice.BASELINE_CROP, rationale="no actor under reference crop"
            )
        gt_base = self._world.actor_mask(actor, baseline.frame_index)
        gt_aux = self._world.actor_mask(actor, auxiliary.frame_index)
        overlap_base = mask_overlap_in_bbox(gt_base, baseline.bbox)
        overlap_aux = mask_overlap_in_bbox(gt_aux, auxiliary.bbox)
        choice = (
            JudgeChoice.AUXILIARY_CROP
            if overlap_aux > overlap_base
            else JudgeChoice.BASELINE_CROP
        )
        return JudgeVerdict(
            choice=choice,
            rationale=f"overlap baseline={overlap_base} auxiliary={overlap_aux}",
        )

    def classify_semantic(self, frame: FrameRef, mask: Mask) -> SemanticVerdict:
        _, frame_index = frame
        actor = self._world.actor_under_mask(mask, frame_index)
        if actor is None:
            return SemanticVerdict(semantic=False, description=None)
        attributes = self._world.actor(actor).attributes
        if not attributes:
            return SemanticVerdict(semantic=False, description=None)
        return SemanticVerdict(semantic=True, description=self._world.description_for(actor))


class WorldCache:
    """Shares one :class:`VideoWorld` per video across backend instances."""

    def __init__(self, dataset_root: Path):
        self.dataset_root = Path(dataset_root)
        self._worlds: dict[str, VideoWorld] = {}

    def world(self, video_id: str) -> VideoWorld:
        if video_id not in self._worlds:
            self._worlds[video_id] = VideoWorld(self.dataset_root, video_id)
        return self._worlds[video_id]


def make_mock_backend(role: str, profile: str, world: VideoWorld):
    """Instantiate one mock backend from a CLI profile name."""
    if role == "segmenter":
        if profile == "oracle":
            return MockSegmenter(world)
        if profile == "drift":
            return MockSegmenter(world, drift=DRIFT_PROFILE)
        if profile == "blind":
            return MockSegmenter(world, drift=BLIND_PROFILE)
        raise ValueError(
            f"unknown segmenter profile {profile!r}; valid: {', '.join(SEGMENTER_PROFILES)}"
        )
    if role == "tracker":
        if profile in TRACKER_PROFILES:
            return MockTracker(world, noisy=profile == "noisy")
        raise ValueError(
            f"unknown tracker profile {profile!r}; valid: {', '.join(TRACKER_PROFILES)}"
        )
    if role == "detector":
        if profile == "oracle":
            return MockDetector(world)
        if profile == "confused":
            return MockDetector(world, confusion=default_confusion_schedule(world))
        raise ValueError(
            f"unknown detector profile {profile!r}; valid: {', '.join(DETECTOR_PROFILES)}"
        )
    if role == "judge":
        if profile == "oracle":
            return MockJudge(world)
        raise ValueError(
            f"unknown judge profile {profile!r}; valid: {', '.join(JUDGE_PROFILES)}"
        )
    raise ValueError(f"unknown backend role {role!r}")


@dataclass
class MockProvider(BackendProvider):
    """All-mock backend provider reading scenarios from a dataset root."""

    dataset_root: Path
    segmenter: str = "oracle"
    tracker: str = "oracle"
    detector: str = "oracle"
    judge: str = "oracle"

    supports_parallel = True

    def __post_init__(self) -> None:
        self._cache = WorldCache(self.dataset_root)

    def backends_for(self, video_id: str) -> BackendSet:
        world = self._cache.world(video_id)
        return BackendSet(
            segmenter=make_mock_backend("segmenter", self.segmenter, world),
            tracker=make_mock_backend("tracker", self.tracker, world),
            detector=make_mock_backend("detector", self.detector, world),
            judge=make_mock_backend("judge", self.judge, world),
        )
