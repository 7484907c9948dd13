"""Deterministic synthetic videos exercising the stressors the pipeline targets.

A scenario is a handful of shaped actors moving along interpolated waypoint
trajectories over a label grid: each pixel holds the id of the topmost actor
covering it (0 is background, -1 is clutter).  Occluders draw over
distractors, which draw over targets, so occluders genuinely hide targets.
Ground truth for a target is exactly its surviving pixels, which makes
disappearance under full occlusion emerge from the draw order.

Everything is a pure function of the spec (seed included): the same spec
produces bit-identical videos.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .geometry import Mask
from .pipeline import Manifest, ObjectEntry, VideoEntry

CLUTTER_ID = -1

SUITE_NAMES = ("drift-tiny", "distractor-semantic", "reappear", "crowded")

SCENARIOS_PER_SUITE = 10


class SpecError(ValueError):
    """An invalid scenario description."""


class UnknownSuite(ValueError):
    """Requested suite name is not one of SUITE_NAMES."""


@dataclass(frozen=True)
class Waypoint:
    frame: int
    x: int
    y: int


@dataclass(frozen=True)
class ActorSpec:
    actor_id: int
    shape: str  # "rect" | "disc"
    size: int
    identity: str  # "target" | "distractor" | "occluder"
    trajectory: tuple[Waypoint, ...]
    visible_ranges: tuple[tuple[int, int], ...]
    attributes: tuple[str, ...] = ()

    def visible_at(self, frame: int) -> bool:
        return any(start <= frame <= end for start, end in self.visible_ranges)


@dataclass(frozen=True)
class ScenarioSpec:
    video_id: str
    width: int
    height: int
    num_frames: int
    seed: int
    actors: tuple[ActorSpec, ...]
    noise_density: float = 0.0

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "width": self.width,
            "height": self.height,
            "num_frames": self.num_frames,
            "seed": self.seed,
            "noise_density": self.noise_density,
            "actors": [
                {
                    "actor_id": a.actor_id,
                    "shape": a.shape,
                    "size": a.size,
                    "identity": a.identity,
                    "trajectory": [
                        {"frame": w.frame, "x": w.x, "y": w.y} for w in a.trajectory
                    ],
                    "visible_ranges": [list(r) for r in a.visible_ranges],
                    "attributes": list(a.attributes),
                }
                for a in self.actors
            ],
        }

    @staticmethod
    def from_dict(doc: Mapping) -> "ScenarioSpec":
        actors = tuple(
            ActorSpec(
                actor_id=a["actor_id"],
                shape=a["shape"],
                size=a["size"],
                identity=a["identity"],
                trajectory=tuple(
                    Waypoint(w["frame"], w["x"], w["y"]) for w in a["trajectory"]
                ),
                visible_ranges=tuple((r[0], r[1]) for r in a["visible_ranges"]),
                attributes=tuple(a.get("attributes", ())),
            )
            for a in doc["actors"]
        )
        return ScenarioSpec(
            video_id=doc["video_id"],
            width=doc["width"],
            height=doc["height"],
            num_frames=doc["num_frames"],
            seed=doc["seed"],
            actors=actors,
            noise_density=doc.get("noise_density", 0.0),
        )


@dataclass
class SyntheticVideo:
    spec: ScenarioSpec
    frames: list[np.ndarray] = field(repr=False)
    gt: dict[str, list[Mask]] = field(repr=False)

    @property
    def manifest_entry(self) -> VideoEntry:
        objects = []
        for object_id, masks in self.gt.items():
            first = next(t for t, m in enumerate(masks) if not m.is_empty())
            objects.append(
                ObjectEntry(
                    object_id=object_id,
                    first_frame_index=first,
                    first_mask=masks[first],
                )
            )
        return VideoEntry(
            video_id=self.spec.video_id,
            frame_count=self.spec.num_frames,
            width=self.spec.width,
            height=self.spec.height,
            objects=tuple(objects),
            gt_path=f"{self.spec.video_id}/gt",
        )


def object_id_for_actor(actor_id: int) -> str:
    return f"{actor_id:03d}"


def validate_spec(spec: ScenarioSpec) -> None:
    if spec.width < 1 or spec.height < 1:
        raise SpecError(f"frame dimensions must be >= 1: {spec.width}x{spec.height}")
    if spec.num_frames < 1:
        raise SpecError(f"num_frames must be >= 1: {spec.num_frames}")
    if not 0.0 <= spec.noise_density <= 1.0:
        raise SpecError(f"noise_density must be in [0, 1]: {spec.noise_density}")
    if not any(a.identity == "target" for a in spec.actors):
        raise SpecError("scenario needs at least one target actor")
    seen_ids = set()
    for actor in spec.actors:
        if actor.actor_id < 1:
            raise SpecError(f"actor ids start at 1, got {actor.actor_id}")
        if actor.actor_id in seen_ids:
            raise SpecError(f"duplicate actor id {actor.actor_id}")
        seen_ids.add(actor.actor_id)
        if actor.shape not in ("rect", "disc"):
            raise SpecError(f"unknown shape {actor.shape!r}")
        if actor.identity not in ("target", "distractor", "occluder"):
            raise SpecError(f"unknown identity {actor.identity!r}")
        if not 1 <= actor.size <= min(spec.width, spec.height):
            raise SpecError(f"actor {actor.actor_id} size {actor.size} does not fit the frame")
        if not actor.trajectory:
            raise SpecError(f"actor {actor.actor_id} has no waypoints")
        frames = [w.frame for w in actor.trajectory]
        if frames != sorted(set(frames)):
            raise SpecError(f"actor {actor.actor_id} waypoint frames must strictly increase")
        for w in actor.trajectory:
            if not (0 <= w.x < spec.width and 0 <= w.y < spec.height):
                raise SpecError(
                    f"actor {actor.actor_id} waypoint ({w.x}, {w.y}) is out of frame"
                )
        if not actor.visible_ranges:
            raise SpecError(f"actor {actor.actor_id} has no visible ranges")
        prev_end = -1
        for start, end in actor.visible_ranges:
            if start > end:
                raise SpecError(f"actor {actor.actor_id} range ({start}, {end}) is reversed")
            if start <= prev_end:
                raise SpecError(
                    f"actor {actor.actor_id} visible ranges must be disjoint and ordered"
                )
            if not (0 <= start and end < spec.num_frames):
                raise SpecError(
                    f"actor {actor.actor_id} range ({start}, {end}) exceeds the video"
                )
            prev_end = end


def _round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def actor_position(actor: ActorSpec, frame: int) -> tuple[int, int]:
    """Interpolated center at a frame: linear between waypoints, round half up."""
    wps = actor.trajectory
    if frame <= wps[0].frame:
        return wps[0].x, wps[0].y
    if frame >= wps[-1].frame:
        return wps[-1].x, wps[-1].y
    for before, after in zip(wps, wps[1:]):
        if before.frame <= frame <= after.frame:
            span = after.frame - before.frame
            alpha = (frame - before.frame) / span
            return (
                _round_half_up(before.x + (after.x - before.x) * alpha),
                _round_half_up(before.y + (after.y - before.y) * alpha),
            )
    raise AssertionError("unreachable: waypoints cover the whole range")


def actor_extent(
    actor: ActorSpec, frame: int, frame_dims: tuple[int, int]
) -> tuple[int, int]:
    """Top-left corner of the actor's bounding square, clamped fully in-frame."""
    width, height = frame_dims
    cx, cy = actor_position(actor, frame)
    x0 = min(max(cx - actor.size // 2, 0), width - actor.size)
    y0 = min(max(cy - actor.size // 2, 0), height - actor.size)
    return x0, y0


def _stamp(grid: np.ndarray, actor: ActorSpec, frame: int) -> None:
    x0, y0 = actor_extent(actor, frame, (grid.shape[1], grid.shape[0]))
    s = actor.size
    if actor.shape == "rect":
        grid[y0 : y0 + s, x0 : x0 + s] = actor.actor_id
        return
    # Disc membership in integer arithmetic: distances doubled so the center
    # of an even-sized disc can sit between pixels.
    offs = np.arange(s)
    dx = 2 * offs - (s - 1)
    d2 = dx[None, :] ** 2 + dx[:, None] ** 2
    inside = d2 <= s * s
    patch = grid[y0 : y0 + s, x0 : x0 + s]
    patch[inside] = actor.actor_id


_DRAW_PRIORITY = {"target": 0, "distractor": 1, "occluder": 2}


def generate(spec: ScenarioSpec) -> SyntheticVideo:
    """Rasterize a scenario into label grids and per-target ground truth."""
    validate_spec(spec)
    rng = np.random.default_rng(spec.seed)
    frames: list[np.ndarray] = []
    draw_order = sorted(
        spec.actors, key=lambda a: (_DRAW_PRIORITY[a.identity], a.actor_id)
    )
    for t in range(spec.num_frames):
        grid = np.zeros((spec.height, spec.width), dtype=np.int32)
        if spec.noise_density > 0:
            clutter = rng.random((spec.height, spec.width)) < spec.noise_density
            grid[clutter] = CLUTTER_ID
        for actor in draw_order:
            if actor.visible_at(t):
                _stamp(grid, actor, t)
        frames.append(grid)
    gt = {
        object_id_for_actor(a.actor_id): [
            Mask.from_array(frame == a.actor_id) for frame in frames
        ]
        for a in spec.actors
        if a.identity == "target"
    }
    return SyntheticVideo(spec=spec, frames=frames, gt=gt)


# ---------------------------------------------------------------------------
# Scenario suites
# ---------------------------------------------------------------------------

_FRAME_W, _FRAME_H = 128, 96
_NUM_FRAMES = 30

_ATTRIBUTE_POOL = (
    "red",
    "blue",
    "green",
    "striped",
    "spotted",
    "numbered",
    "glossy",
    "banded",
)


def _path(rng: np.random.Generator, x_range, y_range, frames=(0, 14, 29)) -> tuple[Waypoint, ...]:
    return tuple(
        Waypoint(f, int(rng.integers(x_range[0], x_range[1] + 1)), int(rng.integers(y_range[0], y_range[1] + 1)))
        for f in frames
    )


def _always() -> tuple[tuple[int, int], ...]:
    return ((0, _NUM_FRAMES - 1),)


def _drift_tiny_spec(rng: np.random.Generator, video_id: str, seed: int) -> ScenarioSpec:
    # Target area ratio stays in [0.0002, 0.0008]: 2x2 or 3x3 on a 128x96 frame.
    size = int(rng.choice([2, 3]))
    shape = str(rng.choice(["rect", "disc"]))
    half_w = _FRAME_W // 2
    target = ActorSpec(
        actor_id=1,
        shape=shape,
        size=size,
        identity="target",
        trajectory=_path(rng, (4, half_w - 6), (4, _FRAME_H - 6)),
        visible_ranges=_always(),
    )
    # The distractor keeps to the opposite half so the tiny target is never covered.
    distractor = ActorSpec(
        actor_id=2,
        shape=shape,
        size=size,
        identity="distractor",
        trajectory=_path(rng, (half_w + 6, _FRAME_W - 6), (4, _FRAME_H - 6)),
        visible_ranges=_always(),
    )
    return ScenarioSpec(
        video_id=video_id,
        width=_FRAME_W,
        height=_FRAME_H,
        num_frames=_NUM_FRAMES,
        seed=seed,
        actors=(target, distractor),
        noise_density=0.005,
    )


def _distractor_semantic_spec(rng: np.random.Generator, video_id: str, seed: int) -> ScenarioSpec:
    # One describable target among 3-5 same-size same-shape distractors, one
    # actor per horizontal lane so look-alikes never overlap.
    size = int(rng.integers(14, 19))
    shape = str(rng.choice(["rect", "disc"]))
    n_distractors = int(rng.integers(3, 6))
    attributes = tuple(
        sorted(rng.choice(_ATTRIBUTE_POOL, size=2, replace=False).tolist())
    )
    lane_height = _FRAME_H // (n_distractors + 1)
    lanes = list(range(n_distractors + 1))
    rng.shuffle(lanes)

    def lane_path(lane: int) -> tuple[Waypoint, ...]:
        y = lane * lane_height + lane_height // 2
        y = min(max(y, size // 2), _FRAME_H - 1 - size // 2)
        xs = rng.integers(size // 2 + 1, _FRAME_W - size // 2 - 1, size=3)
        return tuple(Waypoint(f, int(x), y) for f, x in zip((0, 14, 29), xs))

    target = ActorSpec(
        actor_id=1,
        shape=shape,
        size=size,
        identity="target",
        trajectory=lane_path(lanes[0]),
        visible_ranges=_always(),
        attributes=attributes,
    )
    distractors = tuple(
        ActorSpec(
            actor_id=i + 2,
            shape=shape,
            size=size,
            identity="distractor",
            trajectory=lane_path(lanes[i + 1]),
            visible_ranges=_always(),
        )
        for i in range(n_distractors)
    )
    return ScenarioSpec(
        video_id=video_id,
        width=_FRAME_W,
        height=_FRAME_H,
        num_frames=_NUM_FRAMES,
        seed=seed,
        actors=(target, *distractors),
        noise_density=0.005,
    )


def _reappear_spec(rng: np.random.Generator, video_id: str, seed: int) -> ScenarioSpec:
    # A tiny target that fully disappears for >= 5 frames and then returns.
    size = int(rng.choice([2, 3]))
    last_visible = int(rng.integers(6, 11))
    gap = int(rng.integers(5, 9))
    reappear_at = last_visible + 1 + gap
    target = ActorSpec(
        actor_id=1,
        shape="rect" if rng.random() < 0.5 else "disc",
        size=size,
        identity="target",
        trajectory=_path(rng, (4, _FRAME_W // 2 - 6), (4, _FRAME_H - 6)),
        visible_ranges=((0, last_visible), (reappear_at, _NUM_FRAMES - 1)),
    )
    distractor = ActorSpec(
        actor_id=2,
        shape="rect",
        size=size,
        identity="distractor",
        trajectory=_path(rng, (_FRAME_W // 2 + 6, _FRAME_W - 6), (4, _FRAME_H - 6)),
        visible_ranges=_always(),
    )
    return ScenarioSpec(
        video_id=video_id,
        width=_FRAME_W,
        height=_FRAME_H,
        num_frames=_NUM_FRAMES,
        seed=seed,
        actors=(target, distractor),
        noise_density=0.005,
    )


def _crowded_spec(rng: np.random.Generator, video_id: str, seed: int) -> ScenarioSpec:
    # A regular target in a busy scene; occluders cross its path and can hide
    # it entirely, distractors are strictly smaller so only occluders can.
    target_size = int(rng.integers(12, 17))
    mid_x = int(rng.integers(target_size, _FRAME_W - target_size))
    mid_y = int(rng.integers(target_size, _FRAME_H - target_size))
    target = ActorSpec(
        actor_id=1,
        shape="rect",
        size=target_size,
        identity="target",
        trajectory=(
            Waypoint(0, int(rng.integers(target_size, _FRAME_W - target_size)), mid_y),
            Waypoint(14, mid_x, mid_y),
            Waypoint(29, int(rng.integers(target_size, _FRAME_W - target_size)), mid_y),
        ),
        visible_ranges=_always(),
    )
    actors = [target]
    n_distractors = int(rng.integers(5, 9))
    for i in range(n_distractors):
        size = int(rng.integers(6, target_size - 1))
        actors.append(
            ActorSpec(
                actor_id=i + 2,
                shape=str(rng.choice(["rect", "disc"])),
                size=size,
                identity="distractor",
                trajectory=_path(rng, (size, _FRAME_W - size - 1), (size, _FRAME_H - size - 1)),
                visible_ranges=_always(),
            )
        )
    def clear_of_target_y(size: int) -> int:
        # Start and end lanes that cannot touch the target, so the
        # first-frame annotation always shows a fully visible object.
        lo, hi = size // 2, _FRAME_H - size // 2 - 1
        bands = [b for b in ((lo, mid_y - size), (mid_y + size, hi)) if b[0] <= b[1]]
        band = bands[int(rng.integers(0, len(bands)))]
        return int(rng.integers(band[0], band[1] + 1))

    n_occluders = int(rng.integers(1, 3))
    for i in range(n_occluders):
        size = int(rng.integers(target_size + 4, target_size + 9))
        # Route the occluder through the target's midpoint to force a crossing.
        actors.append(
            ActorSpec(
                actor_id=n_distractors + 2 + i,
                shape="rect",
                size=size,
                identity="occluder",
                trajectory=(
                    Waypoint(0, mid_x, clear_of_target_y(size)),
                    Waypoint(14 + i, mid_x, mid_y),
                    Waypoint(29, mid_x, clear_of_target_y(size)),
                ),
                visible_ranges=_always(),
            )
        )
    return ScenarioSpec(
        video_id=video_id,
        width=_FRAME_W,
        height=_FRAME_H,
        num_frames=_NUM_FRAMES,
        seed=seed,
        actors=tuple(actors),
        noise_density=0.02,
    )


_SUITE_BUILDERS = {
    "drift-tiny": _drift_tiny_spec,
    "distractor-semantic": _distractor_semantic_spec,
    "reappear": _reappear_spec,
    "crowded": _crowded_spec,
}


def scenario_suite(name: str, seed: int = 0) -> list[ScenarioSpec]:
    """Ten seeded scenarios of one stress family; scenario i uses seed ``seed + i``.

    All suites use 128x96 frames over 30 frames.  Parameter ranges:

    * ``drift-tiny``: one always-visible target sized 2 or 3 px per side
      (first-frame area ratio in [0.0002, 0.0008]), one same-shape distractor
      confined to the opposite half, clutter density 0.005.
    * ``distractor-semantic``: one describable target (two attributes) sized
      14-18 among 3-5 same-size same-shape distractors, one actor per lane so
      look-alikes never overlap, clutter density 0.005.
    * ``reappear``: a tiny target visible through frame 6-10, fully gone for
      5-8 frames, then visible to the end; one distractor on the far side.
    * ``crowded``: a regular 12-16 px target, 5-8 strictly smaller
      distractors, 1-2 larger occluders routed through the target's midpoint,
      clutter density 0.02.
    """
    if name not in _SUITE_BUILDERS:
        raise UnknownSuite(f"unknown suite {name!r}; valid suites: {', '.join(SUITE_NAMES)}")
    builder = _SUITE_BUILDERS[name]
    specs = []
    for i in range(SCENARIOS_PER_SUITE):
        scenario_seed = seed + i
        rng = np.random.default_rng([hash_suite(name), scenario_seed])
        video_id = f"{name}-{scenario_seed:04d}"
        spec = builder(rng, video_id, scenario_seed)
        validate_spec(spec)
        specs.append(spec)
    return specs


def hash_suite(name: str) -> int:
    """Stable small integer per suite name (not Python's salted hash)."""
    return sum((i + 1) * ord(c) for i, c in enumerate(name)) % 65521


# ---------------------------------------------------------------------------
# Dataset layout
# ---------------------------------------------------------------------------


def frame_file_name(frame_index: int) -> str:
    return f"{frame_index:05d}"


def _labels_text(grid: np.ndarray) -> str:
    height, width = grid.shape
    lines = [f"{width} {height}"]
    ids = sorted(int(v) for v in np.unique(grid) if v != 0)
    for actor_id in ids:
        mask = Mask.from_array(grid == actor_id)
        lines.append(f"{actor_id} " + " ".join(str(r) for r in mask.runs))
    return "\n".join(lines) + "\n"


def parse_labels_text(text: str) -> np.ndarray:
    """Inverse of the labels file format: header line, then one RLE row per actor."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    width, height = (int(p) for p in lines[0].split())
    grid = np.zeros((height, width), dtype=np.int32)
    for line in lines[1:]:
        parts = line.split()
        actor_id = int(parts[0])
        mask = Mask(width, height, tuple(int(p) for p in parts[1:]))
        grid[mask.to_array()] = actor_id
    return grid


def write_video(video: SyntheticVideo, dataset_root: Path) -> VideoEntry:
    """Write one video's scenario, label grids, and ground-truth masks."""
    root = Path(dataset_root) / video.spec.video_id
    frames_dir = root / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    (root / "scenario.json").write_text(
        json.dumps(video.spec.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    for t, grid in enumerate(video.frames):
        (frames_dir / f"{frame_file_name(t)}.labels").write_text(_labels_text(grid))
    for object_id, masks in video.gt.items():
        gt_dir = root / "gt" / object_id
        gt_dir.mkdir(parents=True, exist_ok=True)
        for t, mask in enumerate(masks):
            (gt_dir / f"{frame_file_name(t)}.rle").write_text(mask.to_rle_string() + "\n")
    return video.manifest_entry


def write_dataset(specs: Sequence[ScenarioSpec], out_dir: Path) -> Path:
    """Generate and write every scenario plus the dataset manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = [write_video(generate(spec), out) for spec in specs]
    manifest = Manifest(dataset_root=out, videos=tuple(entries))
    manifest_path = out / "manifest.json"
    manifest_path.write_text(manifest.to_json() + "\n")
    return manifest_path
