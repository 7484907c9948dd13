"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Budgets and tolerances are pinned here; the secondary-component criteria at
the bottom require the bridge package and are skipped when it is absent.
"""

import functools
import json
import time
from pathlib import Path

import numpy as np
import pytest

from tep.backends import JudgeChoice, TrackOutput
from tep.cli import main
from tep.fusion import FusionAction, FusionConfig, FusionReason, fuse_semantic, fuse_tiny
from tep.geometry import BBox, Mask, mask_iou
from tep.metrics import boundary_f, phases_from_presence
from tep.mocks import MockProvider
from tep.pipeline import load_manifest, run_dataset
from tep.simulator import SUITE_NAMES, scenario_suite, write_dataset

from oracles import boundary_f_bruteforce, phases_reference, pixel_iou, random_grid

BRIDGE_DIR = Path(__file__).resolve().parent.parent / "bridge"


def criterion(name: str, budget_s: float):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"FAIL: {name}")
                raise
            elapsed = time.perf_counter() - start
            print(f"PASS: {name} ({elapsed:.2f}s, budget {budget_s:.0f}s)")
            assert elapsed < budget_s, f"{name} exceeded its {budget_s}s budget"
        return wrapper
    return decorate


def tree_bytes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def prediction_trees_equal(a: Path, b: Path) -> bool:
    rles_a = {str(p.relative_to(a)): p.read_bytes() for p in sorted(a.rglob("*.rle"))}
    rles_b = {str(p.relative_to(b)): p.read_bytes() for p in sorted(b.rglob("*.rle"))}
    return rles_a == rles_b


@criterion("metric oracle equivalence (200 seeded pairs, J exact, F within 1e-12)", 10)
def test_metric_oracle_equivalence():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        a = random_grid(rng, 16, 16, density=float(rng.uniform(0.1, 0.6)))
        b = random_grid(rng, 16, 16, density=float(rng.uniform(0.1, 0.6)))
        ma, mb = Mask.from_array(a), Mask.from_array(b)
        assert mask_iou(ma, mb) == pixel_iou(a, b)  # exact, integer arithmetic
        for tol in (0, 1, 2):
            expected = boundary_f_bruteforce(a, b, tol)
            assert abs(boundary_f(ma, mb, tol) - expected) <= 1e-12


@criterion("oracle identity (all suites score 1.0 and match baseline bit-exactly)", 30)
def test_oracle_identity(tmp_path):
    for suite in SUITE_NAMES:
        data = tmp_path / suite / "data"
        full = tmp_path / suite / "full"
        base = tmp_path / suite / "base"
        assert main(["simulate", "--suite", suite, "--seed", "0", "--out", str(data)]) == 0
        assert main(["run", "--manifest", str(data / "manifest.json"), "--out", str(full)]) == 0
        assert main(["run", "--manifest", str(data / "manifest.json"), "--out", str(base),
                     "--baseline-only"]) == 0
        report = json.loads((full / "report.json").read_text())["aggregate"]
        for field, value in report.items():
            if field == "per_object":
                continue
            assert value is None or value == 1.0, (suite, field, value)
        assert prediction_trees_equal(full, base), suite


@criterion("fusion decision table (exhaustive enumeration, poisoned judge)", 1)
def test_fusion_decision_table():
    cfg = FusionConfig()
    dims = (32, 32)
    sam_box = BBox(2, 2, 8, 8)
    sam_mask = Mask.from_bbox(*dims, sam_box)
    empty = Mask.empty(*dims)
    agree = sam_box
    disagree = BBox(20, 20, 26, 26)

    # Independent transcription of the tiny-path policy.
    def expected_tiny(sam_empty, aux_box, conf):
        if aux_box is None:
            return (FusionAction.KEEP_BASELINE, FusionReason.AUX_MISSING)
        iou = 0.0 if sam_empty else (1.0 if aux_box is agree else 0.0)
        if iou >= cfg.iou_threshold:
            return (FusionAction.KEEP_BASELINE, FusionReason.IOU_ABOVE_THRESHOLD)
        if conf < cfg.confidence_threshold:
            return (FusionAction.KEEP_BASELINE, FusionReason.LOW_CONFIDENCE)
        return (FusionAction.INJECT_AUXILIARY, FusionReason.HIGH_CONFIDENCE_INJECT)

    combos = 0
    for sam_empty in (False, True):
        for aux_box in (None, agree, disagree):
            for conf in (0.2, 0.5, 0.9):
                aux = TrackOutput(aux_box, conf if aux_box is not None else 0.0)
                decision = fuse_tiny(empty if sam_empty else sam_mask, aux, cfg)
                assert (decision.action, decision.reason) == expected_tiny(
                    sam_empty, aux_box, conf if aux_box is not None else 0.0
                )
                if decision.action is FusionAction.INJECT_AUXILIARY:
                    assert decision.chosen_bbox == aux_box
                combos += 1
    assert combos >= 16

    from test_fusion import PoisonedJudge, ScriptedJudge, TimeoutJudge

    ref = __import__("tep.backends", fromlist=["CropRef"]).CropRef("v", 0, BBox(0, 0, 8, 8))
    frame = ("v", 5)

    def expected_semantic(sam_empty, det_box, judge_kind):
        if det_box is None:
            return (FusionAction.KEEP_BASELINE, FusionReason.AUX_MISSING)
        if not sam_empty and det_box is agree:
            return (FusionAction.KEEP_BASELINE, FusionReason.IOU_ABOVE_THRESHOLD)
        if sam_empty:
            return (FusionAction.INJECT_AUXILIARY, FusionReason.HIGH_CONFIDENCE_INJECT)
        if judge_kind == "timeout":
            return (FusionAction.KEEP_BASELINE, FusionReason.AUX_MISSING)
        if judge_kind == "auxiliary":
            return (FusionAction.INJECT_AUXILIARY, FusionReason.JUDGE_CHOSE_AUXILIARY)
        return (FusionAction.KEEP_BASELINE, FusionReason.JUDGE_CHOSE_BASELINE)

    judges = {
        "baseline": lambda: ScriptedJudge(JudgeChoice.BASELINE_CROP),
        "auxiliary": lambda: ScriptedJudge(JudgeChoice.AUXILIARY_CROP),
        "timeout": TimeoutJudge,
    }
    combos = 0
    for sam_empty in (False, True):
        for det_box in (None, agree, disagree):
            for judge_kind, make_judge in judges.items():
                det = TrackOutput(det_box, 1.0 if det_box is not None else 0.0)
                decision = fuse_semantic(
                    empty if sam_empty else sam_mask, det, ref, frame,
                    make_judge(), cfg, dims,
                )
                assert (decision.action, decision.reason) == expected_semantic(
                    sam_empty, det_box, judge_kind
                ), (sam_empty, det_box, judge_kind)
                combos += 1
    assert combos >= 16

    # the judge is never consulted when boxes agree or when there is no
    # baseline crop, and the tiny path never consults it at all
    fuse_semantic(sam_mask, TrackOutput(agree, 1.0), ref, frame, PoisonedJudge(), cfg, dims)
    fuse_semantic(empty, TrackOutput(disagree, 1.0), ref, frame, PoisonedJudge(), cfg, dims)
    fuse_tiny(sam_mask, TrackOutput(disagree, 0.9), cfg)


def _suite_gap(tmp_path, suite, segmenter):
    data = tmp_path / suite
    write_dataset(scenario_suite(suite, 0), data)
    manifest = load_manifest(data / "manifest.json")
    cfg = FusionConfig()
    full = run_dataset(manifest, MockProvider(data, segmenter=segmenter), cfg)
    base = run_dataset(
        manifest, MockProvider(data, segmenter=segmenter), cfg, baseline_only=True
    )
    assert not full.failures and not base.failures
    return full.aggregate, base.aggregate


@criterion("directional gap: drift-tiny >= 0.15 and distractor-semantic >= 0.10", 120)
def test_directional_reproduction_of_the_table_gap(tmp_path):
    full, base = _suite_gap(tmp_path, "drift-tiny", "drift")
    assert full.jf - base.jf >= 0.15, (full.jf, base.jf)
    full, base = _suite_gap(tmp_path, "distractor-semantic", "drift")
    assert full.jf - base.jf >= 0.10, (full.jf, base.jf)


@criterion("reappearance gap strictly exceeds the visible-frames gap", 120)
def test_reappearance_claim(tmp_path):
    full, base = _suite_gap(tmp_path, "reappear", "blind")
    assert full.jf_reappear is not None and base.jf_reappear is not None
    reappear_margin = full.jf_reappear - base.jf_reappear
    visible_margin = full.jf_visible - base.jf_visible
    assert reappear_margin > visible_margin, (reappear_margin, visible_margin)


@criterion("determinism: simulate+run+eval twice, byte-identical artifact trees", 60)
def test_determinism(tmp_path):
    trees = []
    for tag in ("first", "second"):
        root = tmp_path / tag
        data = root / "data"
        run = root / "run"
        rep = root / "rep"
        assert main(["simulate", "--suite", "reappear", "--seed", "0", "--out", str(data)]) == 0
        assert main(["run", "--manifest", str(data / "manifest.json"), "--out", str(run),
                     "--segmenter", "mock:blind"]) == 0
        assert main(["eval", "--pred", str(run), "--manifest", str(data / "manifest.json"),
                     "--out", str(rep)]) == 0
        trees.append((tree_bytes(data), tree_bytes(run), tree_bytes(rep)))
    assert trees[0] == trees[1]


@criterion("phase labeling agrees with the reference on 1000 seeded strings", 5)
def test_phase_labeling_reference_equivalence():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        length = int(rng.integers(0, 40))
        presence = [bool(v) for v in rng.integers(0, 2, size=length)]
        got = [p.value for p in phases_from_presence(presence)]
        assert got == phases_reference(presence)


# ---------------------------------------------------------------------------
# Secondary-component criteria (require the bridge package)
# ---------------------------------------------------------------------------

bridge_required = pytest.mark.skipif(
    not BRIDGE_DIR.is_dir(), reason="bridge package not present"
)


@bridge_required
@criterion("bridge protocol conformance over stdio and tcp", 60)
def test_bridge_protocol_conformance(tmp_path):
    from conformance import run_conformance_suite

    data = tmp_path / "data"
    write_dataset(scenario_suite("reappear", 0)[:1], data)
    run_conformance_suite(data, transports=("stdio", "tcp"))


@bridge_required
@criterion("cross-component equivalence: bridge run matches in-process mocks bit-exactly", 120)
def test_bridge_equivalence(tmp_path):
    import sys

    # The criterion names suite reappear seed 0; the other suites are cheap,
    # so the bit-exactness claim is checked across all of them.
    for suite in SUITE_NAMES:
        data = tmp_path / suite / "data"
        assert main(["simulate", "--suite", suite, "--seed", "0", "--out", str(data)]) == 0
        manifest = str(data / "manifest.json")
        local_out = tmp_path / suite / "local"
        wire_out = tmp_path / suite / "wire"
        assert main(["run", "--manifest", manifest, "--out", str(local_out)]) == 0
        server = f"exec:{sys.executable} -m tep_bridge --transport stdio --dataset {data} --role all"
        assert main([
            "run", "--manifest", manifest, "--out", str(wire_out),
            "--segmenter", server, "--tracker", server,
            "--detector", server, "--judge", server,
        ]) == 0
        assert prediction_trees_equal(local_out, wire_out), suite
