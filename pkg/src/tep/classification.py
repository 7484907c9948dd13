"""Target routing: Regular, Tiny, or SemanticDominated.

A target is Tiny when its first-frame mask covers less than
``tiny_area_ratio`` of the frame; the area test runs first, so a tiny target
is never sent to the semantic oracle.  Targets of standard size are
SemanticDominated exactly when the oracle can produce a verbal description
that singles them out, Regular otherwise.  The class is fixed at
initialization and never revised mid-video.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .backends import EmptyAnnotation, FrameRef, Judge
from .fusion import FusionConfig
from .geometry import Mask, mask_area


class TargetVariant(Enum):
    REGULAR = "regular"
    TINY = "tiny"
    SEMANTIC_DOMINATED = "semantic_dominated"


@dataclass(frozen=True)
class TargetClass:
    """Routing decision plus the evidence that produced it."""

    variant: TargetVariant
    area_ratio: float
    semantic_verdict: Optional[bool] = None
    description: Optional[str] = None

    def __post_init__(self) -> None:
        if self.variant is TargetVariant.SEMANTIC_DOMINATED and self.semantic_verdict is not True:
            raise ValueError("semantic-dominated requires a positive oracle verdict")


def classify_target(
    first_mask: Mask,
    frame_dims: tuple[int, int],
    cfg: FusionConfig,
    semantic_oracle: Judge,
    frame: FrameRef,
) -> TargetClass:
    """Classify one annotated object from its first-frame mask.

    Raises :class:`EmptyAnnotation` for an empty mask; oracle failures
    propagate unchanged.
    """
    area = mask_area(first_mask)
    if area == 0:
        raise EmptyAnnotation("cannot classify an object with an empty first mask")
    width, height = frame_dims
    ratio = area / (width * height)
    if ratio < cfg.tiny_area_ratio:
        return TargetClass(TargetVariant.TINY, area_ratio=ratio)
    verdict = semantic_oracle.classify_semantic(frame, first_mask)
    if verdict.semantic:
        return TargetClass(
            TargetVariant.SEMANTIC_DOMINATED,
            area_ratio=ratio,
            semantic_verdict=True,
            description=verdict.description,
        )
    return TargetClass(TargetVariant.REGULAR, area_ratio=ratio, semantic_verdict=False)
