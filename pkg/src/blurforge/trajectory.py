"""Blur trajectories of image points across an exposure, and stage bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .camera_geom import CameraIntrinsics, rotation_map
from .errors import BlurforgeError, MixedStageCountsError, TraceError

N_CAP = 64


@dataclass
class BlurTrajectory:
    nodes: np.ndarray  # (m + 1, 2)
    stage_lengths: np.ndarray = field(default=None)  # (m,)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2 or len(self.nodes) < 1:
            raise ValueError(f"nodes must have shape (m + 1, 2), got {self.nodes.shape}")
        lengths = np.hypot(*np.diff(self.nodes, axis=0).T)
        if self.stage_lengths is None:
            self.stage_lengths = lengths
        else:
            self.stage_lengths = np.asarray(self.stage_lengths, dtype=float)
            if self.stage_lengths.shape != lengths.shape:
                raise ValueError("stage_lengths must have one entry per node pair")

    @property
    def m(self) -> int:
        return len(self.nodes) - 1

    @property
    def start(self) -> np.ndarray:
        return self.nodes[0]

    @property
    def end(self) -> np.ndarray:
        return self.nodes[-1]

    @property
    def length(self) -> float:
        return float(self.stage_lengths.sum())

    def to_dict(self) -> dict:
        return {"nodes": self.nodes.tolist(), "stage_lengths": self.stage_lengths.tolist()}


@dataclass(frozen=True)
class StagePlan:
    m: int
    n: tuple

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(x) for x in self.n))
        if len(self.n) != self.m:
            raise ValueError(f"plan has {len(self.n)} substep counts for {self.m} stages")
        if any(x < 1 for x in self.n):
            raise ValueError(f"substep counts must be >= 1, got {self.n}")

    def to_dict(self) -> dict:
        return {"m": self.m, "n": list(self.n)}


def _matrices(deltas):
    return [d if isinstance(d, np.ndarray) else d.matrix() for d in deltas]


def trace_nodes(points, deltas, k: CameraIntrinsics) -> np.ndarray:
    """Vectorised trace: ``(..., 2)`` points -> ``(..., m + 1, 2)`` node arrays.

    Each node is obtained from the previous one by mapping it through that
    interval's rotation, from exposure start to exposure end.
    """
    if len(deltas) == 0:
        raise ValueError("need at least one rotation delta")
    p = np.asarray(points, dtype=float)
    nodes = [p]
    for r in _matrices(deltas):
        p = rotation_map(p, r, k)
        nodes.append(p)
    return np.stack(nodes, axis=-2)


def trace_point(p0, deltas, k: CameraIntrinsics) -> BlurTrajectory:
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (2,) or not np.all(np.isfinite(p0)):
        raise ValueError(f"start point must be a finite (u, v) pair, got {p0}")
    return BlurTrajectory(trace_nodes(p0, deltas, k))


def trace_grid(points: Sequence, deltas, k: CameraIntrinsics) -> list[BlurTrajectory]:
    """Trace every point; failures are collected and raised together with indices."""
    out, failures = [], {}
    for i, p in enumerate(points):
        try:
            out.append(trace_point(p, deltas, k))
        except (BlurforgeError, ValueError) as exc:
            failures[i] = exc
    if failures:
        raise TraceError(failures)
    return out


def stage_plan(trajs: Sequence[BlurTrajectory], n_cap: int = N_CAP) -> StagePlan:
    """Substep counts: ceiling of the longest per-stage chord, floored at 1, capped."""
    if not trajs:
        raise ValueError("stage_plan needs at least one trajectory")
    counts = {t.m for t in trajs}
    if len(counts) != 1:
        raise MixedStageCountsError(f"trajectories disagree on stage count: {sorted(counts)}")
    longest = np.max(np.stack([t.stage_lengths for t in trajs]), axis=0)
    n = [min(n_cap, max(1, math.ceil(x))) for x in longest]
    return StagePlan(len(n), tuple(n))


def image_corners(width: int, height: int) -> np.ndarray:
    """Centres of the four corner pixels, clockwise from top-left."""
    w, h = width - 1.0, height - 1.0
    return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])


def boundary_points(width: int, height: int, count: int = 16) -> np.ndarray:
    """``count`` points spaced evenly along the image perimeter, starting at (0, 0)."""
    w, h = width - 1.0, height - 1.0
    perimeter = 2.0 * (w + h)
    pts = []
    for s in np.arange(count) * perimeter / count:
        if s < w:
            pts.append((s, 0.0))
        elif s < w + h:
            pts.append((w, s - w))
        elif s < 2 * w + h:
            pts.append((w - (s - w - h), h))
        else:
            pts.append((0.0, h - (s - 2 * w - h)))
    return np.array(pts)


def plan_points(width: int, height: int, grid: int = 16) -> np.ndarray:
    """The four corners followed by the boundary grid used to size stages."""
    return np.concatenate([image_corners(width, height), boundary_points(width, height, grid)])
