"""Read-only view of a generated dataset: label grids plus actor metadata."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from . import rle

CLUTTER_ID = -1


class DatasetMissing(FileNotFoundError):
    pass


class VideoData:
    def __init__(self, root: Path, video_id: str):
        self.video_id = video_id
        self._dir = Path(root) / video_id
        scenario = self._dir / "scenario.json"
        if not scenario.is_file():
            raise DatasetMissing(f"no scenario at {scenario}")
        doc = json.loads(scenario.read_text())
        self.width = doc["width"]
        self.height = doc["height"]
        self.num_frames = doc["num_frames"]
        self.actors = {a["actor_id"]: a for a in doc["actors"]}
        self._grids: dict[int, np.ndarray] = {}

    def labels(self, frame_index: int) -> np.ndarray:
        if frame_index not in self._grids:
            path = self._dir / "frames" / f"{frame_index:05d}.labels"
            if not path.is_file():
                raise DatasetMissing(f"no label grid at {path}")
            lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
            width, height = (int(p) for p in lines[0].split())
            grid = np.zeros((height, width), dtype=np.int32)
            for line in lines[1:]:
                parts = line.split()
                actor_id = int(parts[0])
                counts = [int(p) for p in parts[1:]]
                grid[rle.decode_counts(width, height, counts)] = actor_id
            self._grids[frame_index] = grid
        return self._grids[frame_index]

    def actor_grid(self, actor_id: int, frame_index: int) -> np.ndarray:
        return self.labels(frame_index) == actor_id

    def actor_bbox(self, actor_id: int, frame_index: int) -> Optional[list[int]]:
        return rle.bbox_of(self.actor_grid(actor_id, frame_index))

    def visible(self, actor_id: int, frame_index: int) -> bool:
        return bool(self.actor_grid(actor_id, frame_index).any())

    @staticmethod
    def _majority(values: np.ndarray) -> Optional[int]:
        # Most-covered actor wins; ties pick the lowest id; background and
        # clutter never count.
        ids, counts = np.unique(values, return_counts=True)
        keep = (ids > 0) & (ids != CLUTTER_ID)
        ids, counts = ids[keep], counts[keep]
        if ids.size == 0:
            return None
        best = counts.max()
        return int(ids[counts == best].min())

    def actor_under_mask(self, mask: np.ndarray, frame_index: int) -> Optional[int]:
        return self._majority(self.labels(frame_index)[mask])

    def actor_under_bbox(self, box: list[int], frame_index: int) -> Optional[int]:
        grid = self.labels(frame_index)
        h, w = grid.shape
        x0, y0, x1, y1 = box
        y0, y1 = max(y0, 0), min(y1, h)
        x0, x1 = max(x0, 0), min(x1, w)
        if y0 >= y1 or x0 >= x1:
            return None
        return self._majority(grid[y0:y1, x0:x1].ravel())

    def overlap_in_bbox(self, actor_id: int, frame_index: int, box: list[int]) -> int:
        grid = self.actor_grid(actor_id, frame_index)
        h, w = grid.shape
        x0, y0, x1, y1 = box
        y0, y1 = max(y0, 0), min(y1, h)
        x0, x1 = max(x0, 0), min(x1, w)
        if y0 >= y1 or x0 >= x1:
            return 0
        return int(grid[y0:y1, x0:x1].sum())

    def description_for(self, actor_id: int) -> str:
        actor = self.actors[actor_id]
        attrs = ",".join(actor.get("attributes", []))
        return f"actor-{actor_id} {actor['shape']} {actor['size']}px [{attrs}]"


class Dataset:
    def __init__(self, root: Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise DatasetMissing(f"dataset root {self.root} does not exist")
        self._videos: dict[str, VideoData] = {}

    def video(self, video_id: str) -> VideoData:
        if video_id not in self._videos:
            self._videos[video_id] = VideoData(self.root, video_id)
        return self._videos[video_id]
