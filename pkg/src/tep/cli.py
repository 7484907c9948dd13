"""Operator entry point: simulate scenarios, run the pipeline, evaluate, report.

Exit codes are a stable contract for scripts: 0 success, 1 usage or config
error, 2 partial failures (some videos failed), 3 total failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path
from typing import Mapping, Optional

from . import metrics, pipeline, protocol, simulator
from .backends import BackendProvider, BackendSet
from .fusion import FusionConfig
from .mocks import (
    DETECTOR_PROFILES,
    JUDGE_PROFILES,
    SEGMENTER_PROFILES,
    TRACKER_PROFILES,
    WorldCache,
    make_mock_backend,
)
from .protocol import DEFAULT_TIMEOUT_MS, _ROLE_ADAPTERS

USAGE_ERROR, PARTIAL_FAILURE, TOTAL_FAILURE = 1, 2, 3

ROLES = ("segmenter", "tracker", "detector", "judge")

_MOCK_PROFILES = {
    "segmenter": SEGMENTER_PROFILES,
    "tracker": TRACKER_PROFILES,
    "detector": DETECTOR_PROFILES,
    "judge": JUDGE_PROFILES,
}


class UsageError(Exception):
    """Bad flags or config; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse default exits 2; our contract is 1
        raise UsageError(message)


def default_config_text() -> str:
    cfg = FusionConfig()
    lines = ["[fusion]"]
    lines += [f"{key} = {value}" for key, value in cfg.to_dict().items()]
    lines += ["", "[pipeline]", "apply_same_frame = true"]
    lines += ["", "[protocol]", f"timeout_ms = {DEFAULT_TIMEOUT_MS}"]
    return "\n".join(lines) + "\n"


def load_config(path: Optional[str]) -> tuple[FusionConfig, bool, int]:
    """Parse the INI config; with a file, every fusion key must be present."""
    apply_same_frame = True
    timeout_ms = DEFAULT_TIMEOUT_MS
    cfg = FusionConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise UsageError(f"cannot read config file {path}")
        if not parser.has_section("fusion"):
            raise UsageError("config file has no [fusion] section")
        section = dict(parser.items("fusion"))
        defaults = FusionConfig().to_dict()
        for key, default in defaults.items():
            if key not in section:
                raise UsageError(f"missing config key fusion.{key} (default {default})")
        try:
            cfg = FusionConfig.from_mapping(section)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        if parser.has_option("pipeline", "apply_same_frame"):
            apply_same_frame = parser.getboolean("pipeline", "apply_same_frame")
        if parser.has_option("protocol", "timeout_ms"):
            timeout_ms = parser.getint("protocol", "timeout_ms")
    env = os.environ.get("TEP_BACKEND_TIMEOUT_MS")
    if env is not None:
        try:
            timeout_ms = int(env)
        except ValueError as exc:
            raise UsageError(f"TEP_BACKEND_TIMEOUT_MS must be an integer: {env!r}") from exc
    return cfg, apply_same_frame, timeout_ms


def _validate_backend_spec(role: str, spec: str) -> None:
    if spec.startswith("mock:"):
        profile = spec[len("mock:") :]
        if profile not in _MOCK_PROFILES[role]:
            raise UsageError(
                f"unknown mock profile {profile!r} for {role}; "
                f"valid: {', '.join(_MOCK_PROFILES[role])}"
            )
    elif not (spec.startswith("exec:") or spec.startswith("tcp:")):
        raise UsageError(
            f"backend spec for {role} must be mock:<profile>, exec:<command>, "
            f"or tcp:<host>:<port>, got {spec!r}"
        )


class ComposedProvider(BackendProvider):
    """Per-role backends: in-process mocks and/or shared wire connections."""

    def __init__(self, dataset_root: Path, specs: Mapping[str, str], timeout_ms: int):
        self._specs = dict(specs)
        self._cache = WorldCache(dataset_root)
        self._timeout_ms = timeout_ms
        self._connections: dict[str, protocol.Connection] = {}
        self.supports_parallel = all(s.startswith("mock:") for s in self._specs.values())

    def _connection(self, endpoint: str) -> protocol.Connection:
        if endpoint not in self._connections:
            self._connections[endpoint] = protocol.connect(
                endpoint, timeout_ms=self._timeout_ms
            )
        return self._connections[endpoint]

    def backends_for(self, video_id: str) -> BackendSet:
        built = {}
        for role in ROLES:
            spec = self._specs[role]
            if spec.startswith("mock:"):
                world = self._cache.world(video_id)
                built[role] = make_mock_backend(role, spec[len("mock:") :], world)
            else:
                built[role] = _ROLE_ADAPTERS[role](self._connection(spec))
        return BackendSet(**built)

    def close(self) -> None:
        for conn in self._connections.values():
            conn.close()
        self._connections.clear()


def build_parser() -> _Parser:
    parser = _Parser(prog="tep", description=__doc__)
    parser.add_argument(
        "--print-config",
        action="store_true",
        help="print the default config file and exit",
    )
    sub = parser.add_subparsers(dest="command")

    p_sim = sub.add_parser("simulate", help="generate a synthetic scenario suite")
    p_sim.add_argument("--suite", required=True, help=f"one of {', '.join(simulator.SUITE_NAMES)}")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="dataset output directory")

    p_run = sub.add_parser("run", help="run the pipeline over a manifest")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--out", required=True, help="run artifact directory")
    p_run.add_argument("--config", help="INI config file (see --print-config)")
    for role in ROLES:
        p_run.add_argument(
            f"--{role}",
            default="mock:oracle",
            help=f"{role} backend: mock:<profile> | exec:<command> | tcp:<host>:<port>",
        )
    p_run.add_argument("--baseline-only", action="store_true", help="bare segmenter, no gating")
    p_run.add_argument("--jobs", type=int, default=1, help="videos run in parallel")
    p_run.add_argument("--name", default=None, help="row label in reports")

    p_eval = sub.add_parser("eval", help="evaluate a prediction tree against ground truth")
    p_eval.add_argument("--pred", required=True, help="prediction directory from `run`")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--out", help="report directory (default: the prediction dir)")
    p_eval.add_argument("--name", default=None)

    p_rep = sub.add_parser("report", help="side-by-side comparison of run reports")
    p_rep.add_argument("run_dirs", nargs="+", help="run directories containing report.json")
    return parser


def cmd_simulate(args) -> int:
    try:
        specs = simulator.scenario_suite(args.suite, args.seed)
    except simulator.UnknownSuite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    try:
        manifest_path = simulator.write_dataset(specs, Path(args.out))
    except OSError as exc:
        print(f"error: cannot write dataset: {exc}", file=sys.stderr)
        return TOTAL_FAILURE
    print(manifest_path)
    return 0


def cmd_run(args) -> int:
    cfg, apply_same_frame, timeout_ms = load_config(args.config)
    manifest = pipeline.load_manifest(Path(args.manifest))
    specs = {role: getattr(args, role) for role in ROLES}
    for role, spec in specs.items():
        _validate_backend_spec(role, spec)
    provider = ComposedProvider(manifest.dataset_root, specs, timeout_ms)
    try:
        result = pipeline.run_dataset(
            manifest,
            provider,
            cfg,
            parallelism=args.jobs,
            baseline_only=args.baseline_only,
            apply_same_frame=apply_same_frame,
        )
    finally:
        provider.close()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for video_result in result.results:
        pipeline.write_video_artifacts(out, video_result)
    (out / "run_config.json").write_text(
        json.dumps(
            {
                "fusion": cfg.to_dict(),
                "apply_same_frame": apply_same_frame,
                "baseline_only": args.baseline_only,
                "backends": specs,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    name = args.name or ("baseline" if args.baseline_only else "tep")
    if result.aggregate is not None:
        pipeline.write_reports(out, result.aggregate, result.reports, name=name)
        print(metrics.format_report(result.aggregate, name=name), end="")

    total = {"classify": 0.0, "propagate": 0.0, "fuse": 0.0}
    for video_result in result.results:
        for stage, seconds in video_result.timings.items():
            total[stage] += seconds
    print(
        "timings: "
        + ", ".join(f"{stage} {seconds:.3f}s" for stage, seconds in total.items()),
        file=sys.stderr,
    )
    for failure in result.failures:
        print(f"failed: {failure.video_id}: {failure.error}", file=sys.stderr)
    if result.failures and not result.results:
        return TOTAL_FAILURE
    if result.failures:
        return PARTIAL_FAILURE
    return 0


def cmd_eval(args) -> int:
    manifest = pipeline.load_manifest(Path(args.manifest))
    pred_dir = Path(args.pred)
    reports: dict[str, metrics.EvalReport] = {}
    failures: list[tuple[str, str]] = []
    for entry in manifest.videos:
        try:
            predictions = pipeline.read_predictions(pred_dir, entry)
            gt = pipeline.load_gt_masks(manifest, entry)
            reports[entry.video_id] = metrics.evaluate(predictions, gt)
        except (metrics.ObjectSetMismatch, metrics.LengthMismatch, pipeline.ManifestError) as exc:
            failures.append((entry.video_id, f"{type(exc).__name__}: {exc}"))
    for video_id, error in failures:
        print(f"failed: {video_id}: {error}", file=sys.stderr)
    if not reports:
        return TOTAL_FAILURE
    aggregate = metrics.mean_reports([reports[vid] for vid in sorted(reports)])
    name = args.name or pred_dir.name
    out = Path(args.out) if args.out else pred_dir
    pipeline.write_reports(out, aggregate, reports, name=name)
    print(metrics.format_report(aggregate, name=name), end="")
    return PARTIAL_FAILURE if failures else 0


def _load_run_report(run_dir: Path) -> dict:
    path = run_dir / "report.json"
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise UsageError(f"no report.json in {run_dir}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed report.json in {run_dir}: {exc}") from exc


def cmd_report(args) -> int:
    docs = {Path(d).name or str(Path(d)): _load_run_report(Path(d)) for d in args.run_dirs}
    video_sets = {name: set(doc.get("videos", {})) for name, doc in docs.items()}
    common = set.intersection(*video_sets.values()) if video_sets else set()
    for name, vids in video_sets.items():
        extra = sorted(vids - common)
        if extra:
            print(
                f"warning: {name} has videos not in every run, excluded: {', '.join(extra)}",
                file=sys.stderr,
            )
    rows: list[tuple[str, metrics.EvalReport]] = []
    for name, doc in docs.items():
        per_video = [
            metrics.EvalReport.from_dict(doc["videos"][vid]) for vid in sorted(common)
        ]
        if per_video:
            rows.append((name, metrics.mean_reports(per_video)))
        else:
            rows.append((name, metrics.EvalReport.from_dict(doc["aggregate"])))

    headers = [header for _, header in metrics.REPORT_COLUMNS]
    name_w = max([len("Method")] + [len(n) + 2 for n, _ in rows])
    table = [[n] + [metrics.format_percent(getattr(r, f)) for f, _ in metrics.REPORT_COLUMNS] for n, r in rows]
    base_name, base = rows[0]
    for name, report in rows[1:]:
        deltas = []
        for fld, _ in metrics.REPORT_COLUMNS:
            a, b = getattr(base, fld), getattr(report, fld)
            deltas.append("--" if a is None or b is None else f"{(b - a) * 100:+.2f}")
        table.append([f"d({name})"] + deltas)
    widths = [max(len(row[i]) for row in table + [["Method"] + headers]) for i in range(len(headers) + 1)]
    print(" | ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(["Method"] + headers, widths))))
    print("-+-".join("-" * w for w in widths))
    for row in table:
        print(" | ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(row, widths))))
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.print_config:
            print(default_config_text(), end="")
            return 0
        if args.command is None:
            parser.print_help()
            return USAGE_ERROR
        handler = {
            "simulate": cmd_simulate,
            "run": cmd_run,
            "eval": cmd_eval,
            "report": cmd_report,
        }[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (pipeline.ManifestError, simulator.SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except protocol.ProtocolError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return TOTAL_FAILURE


if __name__ == "__main__":
    sys.exit(main())
