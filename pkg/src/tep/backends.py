"""Abstract interfaces for the four external capabilities.

A backend is anything that can stand in for the segmenter, the box tracker,
the text-prompted detector, or the crop judge: an in-process mock
(:mod:`tep.mocks`), or a remote server reached through :mod:`tep.protocol`.
Sessions are single-owner; calls on one session are strictly sequential.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .geometry import BBox, Mask


class BackendError(Exception):
    """Base class for backend failures."""


class BackendUnavailable(BackendError):
    """The backend cannot serve requests at all."""


class DuplicateSession(BackendError):
    """A session for this (video, object) pair already exists."""


class OutOfOrderFrame(BackendError):
    """Frames must be propagated in increasing order (same-frame repeats allowed)."""


class StaleFrame(BackendError):
    """Box prompts apply only to the current frame, at most once per frame."""


class NotInitialized(BackendError):
    """track/detect called before init/describe."""


class EmptyAnnotation(BackendError):
    """A first-frame annotation with no pixels."""


FrameRef = tuple[str, int]
"""``(video_id, frame_index)`` against the shared dataset root."""


@dataclass(frozen=True)
class SegmenterInit:
    video_id: str
    object_id: str
    first_frame_index: int
    first_mask: Mask

    def __post_init__(self) -> None:
        if self.first_mask.is_empty():
            raise EmptyAnnotation(
                f"object {self.object_id} of {self.video_id} has an empty first mask"
            )


@dataclass(frozen=True)
class TrackOutput:
    """One auxiliary localization: a box (or nothing) plus its confidence."""

    bbox: Optional[BBox]
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")
        if self.bbox is None and self.confidence != 0.0:
            raise ValueError("absent bbox requires confidence 0")


class JudgeChoice(Enum):
    BASELINE_CROP = "baseline"
    AUXILIARY_CROP = "auxiliary"


@dataclass(frozen=True)
class JudgeVerdict:
    """Forced choice between the two candidate crops; there is no abstention."""

    choice: JudgeChoice
    rationale: str


@dataclass(frozen=True)
class SemanticVerdict:
    """Answer to "can this target be singled out in words?"."""

    semantic: bool
    description: Optional[str]


@dataclass(frozen=True)
class CropRef:
    """A rectangular view into one frame, resolvable by any backend."""

    video_id: str
    frame_index: int
    bbox: BBox


@dataclass(frozen=True)
class DriftModel:
    """Failure injection for mock segmenters.

    Translation/shrink drift accumulates per propagated frame once
    ``drift_start`` is reached and is permanently cleared by the first
    corrective box prompt.  With ``occlusion_blindness`` the segmenter loses
    the target during each full disappearance and stays blind until the next
    corrective prompt.
    """

    drift_start: int = 0
    drift_offset_per_frame: tuple[int, int] = (0, 0)
    shrink_per_frame: float = 0.0
    occlusion_blindness: bool = False
    seed: int = 0


class SegmenterSession(ABC):
    @abstractmethod
    def propagate(self, frame_index: int) -> Mask:
        """Predicted mask for the frame under the current prompt state."""

    @abstractmethod
    def prompt_box(self, frame_index: int, box: BBox) -> None:
        """Inject a corrective box prompt at the current frame."""


class Segmenter(ABC):
    @abstractmethod
    def init(self, init: SegmenterInit) -> SegmenterSession:
        """Open a per-object session seeded with the first-frame mask."""


class TrackerSession(ABC):
    @abstractmethod
    def track(self, frame_index: int) -> TrackOutput:
        """Box and confidence for the templated target at a frame."""


class Tracker(ABC):
    @abstractmethod
    def init(self, template_bbox: BBox, first_frame: FrameRef) -> TrackerSession:
        """Start tracking from an image-crop template."""


class Detector(ABC):
    @abstractmethod
    def describe(self, first_frame: FrameRef, mask: Mask) -> str:
        """Textual description of the annotated target, used as the detection prompt."""

    @abstractmethod
    def detect(self, frame_index: int, description: str) -> TrackOutput:
        """Detection of the described object in a frame; requires a prior describe."""


class Judge(ABC):
    @abstractmethod
    def compare(self, reference: CropRef, baseline: CropRef, auxiliary: CropRef) -> JudgeVerdict:
        """Pick the crop that better preserves the reference target."""

    @abstractmethod
    def classify_semantic(self, frame: FrameRef, mask: Mask) -> SemanticVerdict:
        """Whether the masked target has verbalizable distinguishing attributes."""


@dataclass
class BackendSet:
    """The four capabilities the pipeline needs for one video."""

    segmenter: Segmenter
    tracker: Tracker
    detector: Detector
    judge: Judge


class BackendProvider(ABC):
    """Creates the backend set for each video of a run."""

    #: Whether distinct videos may run on distinct threads.
    supports_parallel: bool = False

    @abstractmethod
    def backends_for(self, video_id: str) -> BackendSet: ...

    def close(self) -> None:
        """Release connections/subprocesses; default is a no-op."""


@dataclass
class _StaticProvider(BackendProvider):
    backends: BackendSet = field(default=None)  # type: ignore[assignment]
    supports_parallel: bool = False

    def backends_for(self, video_id: str) -> BackendSet:
        return self.backends


def static_provider(backends: BackendSet) -> BackendProvider:
    """Provider that hands the same backend set to every video (test plumbing)."""
    return _StaticProvider(backends=backends)
