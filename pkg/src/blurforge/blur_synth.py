"""
Blurred-image synthesis by stacking rotation-warped copies of a sharp frame.

The exposure is split into ``m`` stages (one per gyro interval). Stage ``j``
contributes ``n_j`` warped copies whose corner positions step evenly along the
corner trajectories; the stage mean is taken first and the stage means are
then averaged. The sharp frame itself is the exposure-start sample and joins
the first stage, whose divisor becomes ``n_1 + 1``.

Every warp resamples the original sharp image by the cumulative homography
from exposure start, never a previously warped frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .bezier_encode import D_MAX, FIT_TOL, DenseFit, HeatmapField, encode_heatmaps, refine_fit
from .camera_geom import CameraIntrinsics
from .errors import BehindCameraError, DegenerateCornersError, DegenerateCorrespondencesError, DimensionMismatchError
from .trajectory import (
    N_CAP,
    BlurTrajectory,
    StagePlan,
    image_corners,
    plan_points,
    stage_plan,
    trace_grid,
    trace_nodes,
)
from .warp import substep_homography, warp_image


@dataclass(frozen=True)
class SynthConfig:
    n_cap: int = N_CAP
    boundary_grid: int = 16
    fit_tol: float = FIT_TOL
    d_max: float = D_MAX


@dataclass
class BlurComposition:
    blurred: np.ndarray
    contamination_mask: np.ndarray
    stage_plan: StagePlan
    corner_trajs: list


@dataclass
class Triplet:
    sharp: np.ndarray
    blurred: np.ndarray
    heatmaps: tuple  # (H_c, H_e)
    contamination_mask: np.ndarray
    meta: dict = field(default_factory=dict)


class RunningMean:
    """Incremental mean; adding a value equal to the current mean leaves it unchanged."""

    def __init__(self):
        self.count = 0
        self.value = None

    def add(self, x):
        self.count += 1
        if self.value is None:
            self.value = np.array(x, dtype=float, copy=True)
        else:
            self.value += (x - self.value) / self.count
        return self


def average_stages(stages: Iterable[Iterable[np.ndarray]]) -> np.ndarray:
    """Mean over stages of the per-stage mean of frames, in fixed (j, i) order."""
    outer = RunningMean()
    for frames in stages:
        inner = RunningMean()
        for f in frames:
            inner.add(f)
        if inner.count == 0:
            raise ValueError("every stage needs at least one frame")
        outer.add(inner.value)
    if outer.count == 0:
        raise ValueError("need at least one stage")
    return outer.value


def _check_image(sharp, k):
    sharp = np.asarray(sharp, dtype=float)
    if sharp.ndim not in (2, 3):
        raise DimensionMismatchError(f"image must be (H, W) or (H, W, C), got {sharp.shape}")
    if sharp.shape[:2] != (k.height, k.width):
        raise DimensionMismatchError(
            f"image is {sharp.shape[1]}x{sharp.shape[0]} but intrinsics describe {k.width}x{k.height}"
        )
    if not np.all(np.isfinite(sharp)):
        raise ValueError("image samples must be finite")
    return sharp


def compose_from_trajectories(sharp, corner_trajs: Sequence[BlurTrajectory], plan: StagePlan):
    """Stack warped frames given corner trajectories and a stage plan.

    Returns ``(blurred, contamination_mask)``.
    """
    sharp = np.asarray(sharp, dtype=float)
    base = np.array([t.nodes[0] for t in corner_trajs])
    mask = np.zeros(sharp.shape[:2], dtype=bool)

    def stage_frames(j, n_j):
        if j == 0:
            yield sharp
        for i in range(n_j):
            try:
                h = substep_homography(corner_trajs, j, i, n_j, base)
            except DegenerateCorrespondencesError as exc:
                raise DegenerateCornersError(f"stage {j} substep {i}: {exc}") from exc
            frame = warp_image(sharp, h)
            mask[...] |= ~frame.valid_mask
            yield frame.image

    blurred = average_stages(stage_frames(j, n) for j, n in enumerate(plan.n))
    np.clip(blurred, 0.0, 1.0, out=blurred)
    return blurred, mask


def compose_blur(sharp, deltas, k: CameraIntrinsics, cfg: SynthConfig | None = None) -> BlurComposition:
    cfg = cfg or SynthConfig()
    sharp = _check_image(sharp, k)
    if len(deltas) == 0:
        raise ValueError("need at least one rotation delta")
    corners = image_corners(k.width, k.height)
    corner_trajs = trace_grid(corners, deltas, k)
    sizing = trace_grid(plan_points(k.width, k.height, cfg.boundary_grid), deltas, k)
    plan = stage_plan(sizing, cfg.n_cap)
    blurred, mask = compose_from_trajectories(sharp, corner_trajs, plan)
    return BlurComposition(blurred, mask, plan, corner_trajs)


def dense_trajectory_fit(deltas, k: CameraIntrinsics, cfg: SynthConfig | None = None) -> DenseFit:
    """Trace and Bezier-fit the trajectory of every pixel of the sensor.

    A compiled pass fits every pixel at chord-length parameters and bounds
    its residual. Pixels whose bound exceeds the fit tolerance are refitted
    with :func:`refine_fit`, which also yields their exact deviation.
    """
    cfg = cfg or SynthConfig()
    if len(deltas) == 0:
        raise ValueError("need at least one rotation delta")
    rots = np.ascontiguousarray(np.stack([d.matrix() for d in deltas]))
    ctrl = np.empty((k.height, k.width, 4, 2))
    bound = np.empty((k.height, k.width))
    if _kernels.trace_fit_grid(rots, k.fx, k.fy, k.cx, k.cy, ctrl, bound):
        raise BehindCameraError("a pixel's ray rotated behind the camera during the exposure")
    dev = bound.copy()
    suspect = np.argwhere(bound > cfg.fit_tol)
    if len(suspect):
        rows, cols = suspect[:, 0], suspect[:, 1]
        nodes = trace_nodes(suspect[:, ::-1].astype(float), deltas, k)
        ctrl[rows, cols], dev[rows, cols] = refine_fit(ctrl[rows, cols], nodes)
    hc, he = encode_heatmaps(ctrl, d_max=cfg.d_max)
    return DenseFit(hc, he, dev <= cfg.fit_tol, dev)


def deltas_to_meta(deltas) -> list:
    return [{"t0": d.t0, "t1": d.t1, "rotvec": d.rot.rotvec.tolist()} for d in deltas]


def make_triplet(sharp, deltas, k: CameraIntrinsics, cfg: SynthConfig | None = None,
                 window=None) -> Triplet:
    cfg = cfg or SynthConfig()
    comp = compose_blur(sharp, deltas, k, cfg)
    fit = dense_trajectory_fit(deltas, k, cfg)
    meta = {
        "intrinsics": k.to_dict(),
        "stage_plan": comp.stage_plan.to_dict(),
        "deltas": deltas_to_meta(deltas),
        "corner_trajectories": [t.nodes.tolist() for t in comp.corner_trajs],
        "fit": {"fit_tol": cfg.fit_tol, "n_failed": fit.n_failed, "fraction_ok": fit.fraction_ok},
        "contaminated_pixels": int(comp.contamination_mask.sum()),
    }
    if window is not None:
        meta["window"] = {"t_start": window.t_start, "tau": window.tau}
    return Triplet(np.asarray(sharp, dtype=float), comp.blurred, (fit.control, fit.endpoint),
                   comp.contamination_mask, meta)


__all__ = [
    "SynthConfig", "BlurComposition", "Triplet", "RunningMean", "average_stages",
    "compose_from_trajectories", "compose_blur", "dense_trajectory_fit", "make_triplet",
    "HeatmapField",
]
