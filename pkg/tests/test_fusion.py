"""Exhaustive decision-table coverage of the prompt-fusion gate."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tep.backends import (
    CropRef,
    Judge,
    JudgeChoice,
    JudgeVerdict,
    SemanticVerdict,
    TrackOutput,
)
from tep.fusion import (
    FusionAction,
    FusionConfig,
    FusionDecision,
    FusionReason,
    fuse_semantic,
    fuse_tiny,
)
from tep.geometry import BBox, Mask
from tep.protocol import BackendTimeout

DIMS = (32, 32)
CFG = FusionConfig()
REF = CropRef("vid", 0, BBox(0, 0, 8, 8))
FRAME = ("vid", 5)


def solid(x0, y0, x1, y1):
    grid = np.zeros((DIMS[1], DIMS[0]), dtype=bool)
    grid[y0:y1, x0:x1] = True
    return Mask.from_array(grid)


EMPTY = Mask.empty(*DIMS)
SAM = solid(2, 2, 8, 8)  # bbox (2,2,8,8)
AGREEING = BBox(2, 2, 8, 8)  # IoU 1.0 with SAM's bbox
DISAGREEING = BBox(20, 20, 26, 26)  # IoU 0.0 with SAM's bbox


class PoisonedJudge(Judge):
    """Fails the test if the gate consults it."""

    def compare(self, reference, baseline, auxiliary):
        raise AssertionError("judge must not be called on this path")

    def classify_semantic(self, frame, mask):
        raise AssertionError("classifier must not be called on this path")


class ScriptedJudge(Judge):
    def __init__(self, choice: JudgeChoice):
        self.choice = choice
        self.calls = 0

    def compare(self, reference, baseline, auxiliary):
        self.calls += 1
        return JudgeVerdict(choice=self.choice, rationale="scripted")

    def classify_semantic(self, frame, mask):
        return SemanticVerdict(semantic=False, description=None)


class TimeoutJudge(Judge):
    def compare(self, reference, baseline, auxiliary):
        raise BackendTimeout("judge took too long")

    def classify_semantic(self, frame, mask):
        raise BackendTimeout("judge took too long")


class TestFuseTinyTable:
    def test_aux_missing(self):
        decision = fuse_tiny(SAM, TrackOutput(None, 0.0), CFG)
        assert decision.action is FusionAction.KEEP_BASELINE
        assert decision.reason is FusionReason.AUX_MISSING
        assert decision.chosen_bbox is None

    def test_agreement_keeps_baseline_regardless_of_confidence(self):
        for confidence in (0.0, 0.1, 0.49, 0.5, 0.9, 1.0):
            decision = fuse_tiny(SAM, TrackOutput(AGREEING, confidence), CFG)
            assert decision.action is FusionAction.KEEP_BASELINE
            assert decision.reason is FusionReason.IOU_ABOVE_THRESHOLD
            assert decision.iou_observed == 1.0

    def test_disagreement_low_confidence_keeps_baseline(self):
        decision = fuse_tiny(SAM, TrackOutput(DISAGREEING, 0.1), CFG)
        assert decision.action is FusionAction.KEEP_BASELINE
        assert decision.reason is FusionReason.LOW_CONFIDENCE

    def test_disagreement_high_confidence_injects(self):
        decision = fuse_tiny(SAM, TrackOutput(DISAGREEING, 0.9), CFG)
        assert decision.action is FusionAction.INJECT_AUXILIARY
        assert decision.reason is FusionReason.HIGH_CONFIDENCE_INJECT
        assert decision.chosen_bbox == DISAGREEING

    def test_threshold_boundary_is_inclusive(self):
        # IoU exactly at the threshold keeps the baseline.
        half = BBox(2, 2, 8, 14)  # IoU with (2,2,8,8) is 36/72 = 0.5
        decision = fuse_tiny(solid(2, 2, 8, 8), TrackOutput(half, 1.0), CFG)
        assert decision.reason is FusionReason.IOU_ABOVE_THRESHOLD
        # confidence exactly at the threshold injects
        decision = fuse_tiny(SAM, TrackOutput(DISAGREEING, 0.5), CFG)
        assert decision.action is FusionAction.INJECT_AUXILIARY

    def test_empty_baseline_counts_as_iou_zero(self):
        high = fuse_tiny(EMPTY, TrackOutput(DISAGREEING, 0.9), CFG)
        assert high.action is FusionAction.INJECT_AUXILIARY
        assert high.iou_observed == 0.0
        low = fuse_tiny(EMPTY, TrackOutput(DISAGREEING, 0.2), CFG)
        assert low.reason is FusionReason.LOW_CONFIDENCE
        missing = fuse_tiny(EMPTY, TrackOutput(None, 0.0), CFG)
        assert missing.reason is FusionReason.AUX_MISSING

    def test_only_the_bbox_of_the_mask_matters(self):
        ring = np.zeros((DIMS[1], DIMS[0]), dtype=bool)
        ring[2:8, 2:8] = True
        ring[3:7, 3:7] = False  # same bbox as SAM, different pixels
        for aux in (TrackOutput(AGREEING, 0.7), TrackOutput(DISAGREEING, 0.7)):
            assert fuse_tiny(Mask.from_array(ring), aux, CFG) == fuse_tiny(SAM, aux, CFG)

    def test_totality_over_the_condition_grid(self):
        sam_options = (SAM, EMPTY)
        aux_options = (
            TrackOutput(None, 0.0),
            TrackOutput(AGREEING, 0.2),
            TrackOutput(AGREEING, 0.9),
            TrackOutput(DISAGREEING, 0.2),
            TrackOutput(DISAGREEING, 0.9),
        )
        seen = set()
        for sam in sam_options:
            for aux in aux_options:
                decision = fuse_tiny(sam, aux, CFG)
                assert isinstance(decision, FusionDecision)
                seen.add((decision.action, decision.reason))
        assert (FusionAction.KEEP_BASELINE, FusionReason.AUX_MISSING) in seen
        assert (FusionAction.KEEP_BASELINE, FusionReason.LOW_CONFIDENCE) in seen
        assert (FusionAction.INJECT_AUXILIARY, FusionReason.HIGH_CONFIDENCE_INJECT) in seen

    @given(
        st.floats(0.1, 0.9),
        st.floats(0.0, 1.0),
        st.sampled_from([AGREEING, DISAGREEING, None]),
    )
    @settings(max_examples=200, deadline=None)
    def test_raising_iou_threshold_never_flips_inject_to_agreement(
        self, threshold, confidence, aux_bbox
    ):
        aux = TrackOutput(aux_bbox, confidence if aux_bbox is not None else 0.0)
        cfg_low = FusionConfig(iou_threshold=threshold)
        decision = fuse_tiny(SAM, aux, cfg_low)
        if decision.action is FusionAction.INJECT_AUXILIARY:
            for higher in (threshold, min(1.0, threshold + 0.3), 1.0):
                raised = fuse_tiny(SAM, aux, FusionConfig(iou_threshold=higher))
                assert raised.reason is not FusionReason.IOU_ABOVE_THRESHOLD


class TestFuseSemanticTable:
    def test_aux_missing(self):
        decision = fuse_semantic(
            SAM, TrackOutput(None, 0.0), REF, FRAME, PoisonedJudge(), CFG, DIMS
        )
        assert decision.reason is FusionReason.AUX_MISSING

    def test_agreement_never_consults_the_judge(self):
        decision = fuse_semantic(
            SAM, TrackOutput(AGREEING, 1.0), REF, FRAME, PoisonedJudge(), CFG, DIMS
        )
        assert decision.reason is FusionReason.IOU_ABOVE_THRESHOLD

    def test_judge_chooses_auxiliary(self):
        judge = ScriptedJudge(JudgeChoice.AUXILIARY_CROP)
        decision = fuse_semantic(
            SAM, TrackOutput(DISAGREEING, 1.0), REF, FRAME, judge, CFG, DIMS
        )
        assert decision.action is FusionAction.INJECT_AUXILIARY
        assert decision.reason is FusionReason.JUDGE_CHOSE_AUXILIARY
        assert decision.chosen_bbox == DISAGREEING
        assert judge.calls == 1

    def test_judge_chooses_baseline(self):
        judge = ScriptedJudge(JudgeChoice.BASELINE_CROP)
        decision = fuse_semantic(
            SAM, TrackOutput(DISAGREEING, 1.0), REF, FRAME, judge, CFG, DIMS
        )
        assert decision.action is FusionAction.KEEP_BASELINE
        assert decision.reason is FusionReason.JUDGE_CHOSE_BASELINE

    def test_empty_baseline_injects_without_judge(self):
        decision = fuse_semantic(
            EMPTY, TrackOutput(DISAGREEING, 1.0), REF, FRAME, PoisonedJudge(), CFG, DIMS
        )
        assert decision.action is FusionAction.INJECT_AUXILIARY
        assert decision.iou_observed == 0.0

    def test_judge_timeout_degrades_to_baseline(self):
        decision = fuse_semantic(
            SAM, TrackOutput(DISAGREEING, 1.0), REF, FRAME, TimeoutJudge(), CFG, DIMS
        )
        assert decision.action is FusionAction.KEEP_BASELINE
        assert decision.reason is FusionReason.AUX_MISSING

    def test_totality(self):
        for sam in (SAM, EMPTY):
            for det in (TrackOutput(None, 0.0), TrackOutput(AGREEING, 1.0), TrackOutput(DISAGREEING, 1.0)):
                for judge in (ScriptedJudge(JudgeChoice.BASELINE_CROP), ScriptedJudge(JudgeChoice.AUXILIARY_CROP)):
                    decision = fuse_semantic(sam, det, REF, FRAME, judge, CFG, DIMS)
                    assert isinstance(decision, FusionDecision)

    def test_judge_sees_padded_crops(self):
        seen = {}

        class RecordingJudge(Judge):
            def compare(self, reference, baseline, auxiliary):
                seen["reference"] = reference
                seen["baseline"] = baseline
                seen["auxiliary"] = auxiliary
                return JudgeVerdict(JudgeChoice.BASELINE_CROP, "recorded")

            def classify_semantic(self, frame, mask):
                raise AssertionError

        fuse_semantic(SAM, TrackOutput(DISAGREEING, 1.0), REF, FRAME, RecordingJudge(), CFG, DIMS)
        assert seen["reference"] == REF
        # sam bbox (2,2,8,8) padded by 8 and clamped to the 32x32 frame
        assert seen["baseline"].bbox == BBox(0, 0, 16, 16)
        assert seen["auxiliary"].bbox == BBox(12, 12, 32, 32)
        assert seen["baseline"].video_id == "vid"
        assert seen["baseline"].frame_index == 5


class TestFusionConfig:
    def test_defaults(self):
        cfg = FusionConfig()
        assert cfg.iou_threshold == 0.5
        assert cfg.confidence_threshold == 0.5
        assert cfg.tiny_area_ratio == 0.001
        assert cfg.judge_crop_pad == 8
        assert cfg.evaluate_every == 1
        assert cfg.f_dot_tolerance == 1

    def test_validation(self):
        with pytest.raises(ValueError):
            FusionConfig(iou_threshold=1.5)
        with pytest.raises(ValueError):
            FusionConfig(evaluate_every=0)

    def test_from_mapping_rejects_unknown_keys(self):
        with pytest.raises(ValueError):
            FusionConfig.from_mapping({"iou_thresold": "0.5"})

    def test_from_mapping_parses_strings(self):
        cfg = FusionConfig.from_mapping({"iou_threshold": "0.25", "evaluate_every": "2"})
        assert cfg.iou_threshold == 0.25
        assert cfg.evaluate_every == 2

    def test_decision_invariants_enforced(self):
        with pytest.raises(ValueError):
            FusionDecision(FusionAction.INJECT_AUXILIARY, None, 0.1, FusionReason.HIGH_CONFIDENCE_INJECT)
        with pytest.raises(ValueError):
            FusionDecision(FusionAction.INJECT_AUXILIARY, AGREEING, 0.1, FusionReason.LOW_CONFIDENCE)
