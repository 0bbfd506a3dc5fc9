"""Homographies from corner correspondences and bilinear image warping."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import (
    DegenerateCorrespondencesError,
    PointAtInfinityError,
    SingularSystemError,
)

MIN_TRIANGLE_AREA = 1e-6
IDENTITY_ATOL = 1e-12


def canonicalize(h) -> np.ndarray:
    """Scale so ``h[2, 2] == 1``; fall back to unit Frobenius norm when it vanishes."""
    h = np.asarray(h, dtype=float)
    if abs(h[2, 2]) > 1e-12:
        return h / h[2, 2]
    h = h / np.linalg.norm(h)
    # fix the overall sign on the first significant entry
    flat = h.ravel()
    lead = flat[np.flatnonzero(np.abs(flat) > 1e-12)[0]]
    return h if lead > 0 else -h


@dataclass(frozen=True, eq=False)
class Homography:
    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.shape != (3, 3) or not np.all(np.isfinite(h)):
            raise ValueError("homography must be a finite 3x3 matrix")
        h = canonicalize(h)
        if abs(np.linalg.det(h)) <= 1e-12:
            raise SingularSystemError("homography is not invertible")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, du: float, dv: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, du], [0.0, 1.0, dv], [0.0, 0.0, 1.0]]))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))

    @property
    def is_identity(self) -> bool:
        return bool(np.allclose(self.h, np.eye(3), rtol=0.0, atol=IDENTITY_ATOL))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.h @ other.h)

    def allclose(self, other: "Homography", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.h, other.h, rtol=0.0, atol=atol))


def apply(h: Homography, p) -> np.ndarray:
    """Apply ``h`` to points shaped ``(..., 2)``."""
    m = h.h if isinstance(h, Homography) else np.asarray(h, dtype=float)
    uv = np.asarray(p, dtype=float)
    u, v = uv[..., 0], uv[..., 1]
    w = m[2, 0] * u + m[2, 1] * v + m[2, 2]
    if np.any(np.abs(w) <= 1e-12):
        raise PointAtInfinityError("point maps to infinity")
    return np.stack([(m[0, 0] * u + m[0, 1] * v + m[0, 2]) / w,
                     (m[1, 0] * u + m[1, 1] * v + m[1, 2]) / w], axis=-1)


def _check_configuration(pts, name):
    for a, b in itertools.combinations(range(4), 2):
        if np.array_equal(pts[a], pts[b]):
            raise DegenerateCorrespondencesError(f"{name} points {a} and {b} coincide")
    for a, b, c in itertools.combinations(range(4), 3):
        d1, d2 = pts[b] - pts[a], pts[c] - pts[a]
        area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
        if area < MIN_TRIANGLE_AREA:
            raise DegenerateCorrespondencesError(
                f"{name} points {a}, {b}, {c} are collinear (area {area:.3g} px^2)"
            )


def _normalizer(pts):
    centroid = pts.mean(axis=0)
    mean_r = np.mean(np.hypot(*(pts - centroid).T))
    s = np.sqrt(2.0) / mean_r
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def dlt_homography(src, dst) -> Homography:
    """Homography mapping four ``src`` points onto four ``dst`` points.

    Both point sets are shifted to their centroid and scaled to a mean radius
    of sqrt(2) before the 8x9 system is solved for its null vector.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != (4, 2) or dst.shape != (4, 2):
        raise ValueError("dlt_homography needs exactly four (u, v) pairs on each side")
    _check_configuration(src, "source")
    _check_configuration(dst, "destination")
    if np.array_equal(src, dst):
        return Homography.identity()

    ts, td = _normalizer(src), _normalizer(dst)
    s = apply(ts, src)
    d = apply(td, dst)
    a = np.zeros((8, 9))
    for i, ((x, y), (xp, yp)) in enumerate(zip(s, d)):
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -xp * x, -xp * y, -xp]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -yp * x, -yp * y, -yp]
    _, sv, vt = np.linalg.svd(a)
    if sv[-1] < 1e-10 * sv[0]:
        raise SingularSystemError("DLT system is rank deficient")
    hn = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(td) @ hn @ ts)


def substep_homography(corner_trajs, j: int, i: int, n_j: int, base_corners) -> Homography:
    """Map from the exposure-start corners to stage ``j`` substep ``i``.

    Each destination corner moves along its own stage-``j`` chord by the
    fraction ``(i + 1) / n_j``, so the last substep lands on node ``j + 1``.
    """
    if not 0 <= i < n_j:
        raise ValueError(f"substep index {i} outside [0, {n_j})")
    dst = []
    for traj in corner_trajs:
        a, b = traj.nodes[j], traj.nodes[j + 1]
        if i == n_j - 1:
            dst.append(b)
        else:
            dst.append(a + (i + 1) / n_j * (b - a))
    return dlt_homography(base_corners, np.array(dst))


@dataclass
class WarpedFrame:
    image: np.ndarray
    valid_mask: np.ndarray


@lru_cache(maxsize=8)
def _pixel_grid(height: int, width: int):
    v, u = np.mgrid[0:height, 0:width].astype(float)
    u.setflags(write=False)
    v.setflags(write=False)
    return u, v


def _axis_weights(coord, size):
    c = np.clip(coord, 0.0, size - 1.0)
    if size == 1:
        zero = np.zeros(c.shape, dtype=np.intp)
        return zero, zero, np.zeros_like(c)
    i0 = np.minimum(np.floor(c).astype(np.intp), size - 2)
    return i0, i0 + 1, c - i0


def sample_bilinear(img, xs, ys):
    """Bilinear samples of ``img`` at float coordinates, replicating edge pixels.

    The interpolation is written as nested lerps ``a + w * (b - a)`` so that a
    constant neighbourhood reproduces its value exactly.
    """
    h, w = img.shape[:2]
    flat = img.reshape(h * w, -1)
    x0, x1, fx = _axis_weights(xs, w)
    y0, y1, fy = _axis_weights(ys, h)
    fx = fx[..., None]
    fy = fy[..., None]
    r0, r1 = y0 * w, y1 * w
    a = flat[r0 + x0]
    b = flat[r0 + x1]
    c = flat[r1 + x0]
    d = flat[r1 + x1]
    top = a + fx * (b - a)
    bot = c + fx * (d - c)
    out = top + fy * (bot - top)
    return out.reshape(xs.shape + img.shape[2:])


def warp_image(img, h: Homography) -> WarpedFrame:
    """Inverse-warp ``img`` by ``h``: output pixel ``q`` samples ``img`` at ``h^-1 q``.

    Sources outside the frame take the nearest edge value and are flagged in
    ``valid_mask``. An identity ``h`` returns an exact copy.
    """
    img = np.asarray(img, dtype=float)
    height, width = img.shape[:2]
    if h.is_identity:
        return WarpedFrame(img.copy(), np.ones((height, width), dtype=bool))
    src = np.ascontiguousarray(img if img.ndim == 3 else img[..., None])
    out = np.empty_like(src)
    valid = np.zeros((height, width), dtype=bool)
    if _kernels.warp_bilinear(src, np.linalg.inv(h.h), out, valid):
        raise PointAtInfinityError("warp sends an output pixel to infinity")
    return WarpedFrame(out if img.ndim == 3 else out[..., 0], valid)


def warp_image_reference(img, h: Homography) -> WarpedFrame:
    """Pure-numpy twin of :func:`warp_image` (no identity short-circuit)."""
    img = np.asarray(img, dtype=float)
    height, width = img.shape[:2]
    u, v = _pixel_grid(height, width)
    m = np.linalg.inv(h.h)
    wz = m[2, 0] * u + m[2, 1] * v + m[2, 2]
    if np.any(np.abs(wz) <= 1e-12):
        raise PointAtInfinityError("warp sends an output pixel to infinity")
    xs = (m[0, 0] * u + m[0, 1] * v + m[0, 2]) / wz
    ys = (m[1, 0] * u + m[1, 1] * v + m[1, 2]) / wz
    tol = 1e-9
    valid = (xs >= -tol) & (xs <= width - 1 + tol) & (ys >= -tol) & (ys <= height - 1 + tol)
    return WarpedFrame(sample_bilinear(img, xs, ys), valid)
