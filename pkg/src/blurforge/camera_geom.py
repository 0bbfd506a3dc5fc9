"""
Pinhole geometry under pure camera rotation.

Camera frame is x-right, y-down, z-forward; image origin is the top-left
pixel. A ray direction is written in spherical form as::

    X = r sin(phi) cos(theta)
    Y = r cos(phi)
    Z = r sin(phi) sin(theta)

so that the pixel it lands on is::

    u = cx + fx / tan(theta)
    v = cy + fy / (sin(theta) tan(phi))

and the range ``r`` drops out. Rotations follow the right-hand rule about the
camera axes (yaw about y, pitch about x, roll about z). A rotation passed to
:func:`rotation_map` is the camera's own rotation; scene rays are rotated by
its inverse. All displacement helpers return ``new - old`` in pixels.

Point arguments accept anything shaped ``(..., 2)`` so the same functions work
on single pixels and on whole pixel grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BehindCameraError, DepthNonPositiveError, SingularityError

ANGLE_MARGIN = 1e-9
COORD_GUARD = 1e8


class PixelPoint(NamedTuple):
    u: float
    v: float


class SphericalDirection(NamedTuple):
    theta: float
    phi: float


class CameraPoint(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} sensor"
            )

    @classmethod
    def centered(cls, f: float, width: int, height: int, fy: float | None = None) -> "CameraIntrinsics":
        """Intrinsics with the principal point at the geometric image centre."""
        return cls(f, f if fy is None else fy, (width - 1) / 2.0, (height - 1) / 2.0, width, height)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


def _skew(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def rotvec_to_matrix(rotvec) -> np.ndarray:
    """Rodrigues' formula; exact to rounding for any angle."""
    w = np.asarray(rotvec, dtype=float)
    angle = float(np.linalg.norm(w))
    if angle < 1e-300:
        return np.eye(3)
    k = _skew(w / angle)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def matrix_to_rotvec(mat) -> np.ndarray:
    """Inverse of :func:`rotvec_to_matrix` via a Shepperd quaternion extraction."""
    r = np.asarray(mat, dtype=float)
    tr = np.trace(r)
    diag = np.diag(r)
    i = int(np.argmax(np.r_[tr, diag]))
    if i == 0:
        w = 0.5 * math.sqrt(max(1.0 + tr, 0.0))
        s = 0.25 / w
        q = np.array([w, (r[2, 1] - r[1, 2]) * s, (r[0, 2] - r[2, 0]) * s, (r[1, 0] - r[0, 1]) * s])
    else:
        a = i - 1
        b, c = (a + 1) % 3, (a + 2) % 3
        qa = 0.5 * math.sqrt(max(1.0 + r[a, a] - r[b, b] - r[c, c], 0.0))
        s = 0.25 / qa
        q = np.empty(4)
        q[0] = (r[c, b] - r[b, c]) * s
        q[1 + a] = qa
        q[1 + b] = (r[b, a] + r[a, b]) * s
        q[1 + c] = (r[c, a] + r[a, c]) * s
    if q[0] < 0:
        q = -q
    vec = q[1:]
    n = float(np.linalg.norm(vec))
    if n < 1e-300:
        return np.zeros(3)
    angle = 2.0 * math.atan2(n, q[0])
    return vec / n * angle


@dataclass(frozen=True)
class AxisAngleRotation:
    """Rotation by ``angle`` radians about the unit ``axis`` (camera frame)."""

    axis: tuple
    angle: float

    def __post_init__(self):
        axis = tuple(float(a) for a in self.axis)
        object.__setattr__(self, "axis", axis)
        if abs(math.sqrt(sum(a * a for a in axis)) - 1.0) > 1e-12:
            raise ValueError(f"rotation axis must be unit length, got {axis}")
        if not (-math.pi <= self.angle <= math.pi):
            raise ValueError(f"rotation angle must lie in [-pi, pi], got {self.angle}")

    @classmethod
    def identity(cls) -> "AxisAngleRotation":
        return cls((0.0, 0.0, 1.0), 0.0)

    @classmethod
    def from_rotvec(cls, rotvec) -> "AxisAngleRotation":
        w = np.asarray(rotvec, dtype=float)
        angle = float(np.linalg.norm(w))
        if angle == 0.0:
            return cls.identity()
        if angle > math.pi:
            # wrap onto the equivalent rotation with angle in [-pi, pi]
            return cls.from_matrix(rotvec_to_matrix(w))
        axis = w / angle
        n = math.sqrt(float(axis @ axis))
        return cls(tuple(axis / n), angle)

    @classmethod
    def from_matrix(cls, mat) -> "AxisAngleRotation":
        return cls.from_rotvec(matrix_to_rotvec(mat))

    @classmethod
    def about(cls, axis_name: str, angle: float) -> "AxisAngleRotation":
        """Single-axis rotation; ``axis_name`` is one of x/y/z or pitch/yaw/roll."""
        names = {"x": 0, "pitch": 0, "y": 1, "yaw": 1, "z": 2, "roll": 2}
        axis = [0.0, 0.0, 0.0]
        axis[names[axis_name]] = 1.0
        if angle < 0:
            return cls(tuple(-a for a in axis), -angle)
        return cls(tuple(axis), angle)

    @property
    def rotvec(self) -> np.ndarray:
        return np.asarray(self.axis) * self.angle

    def matrix(self) -> np.ndarray:
        return rotvec_to_matrix(self.rotvec)

    def inverse(self) -> "AxisAngleRotation":
        return AxisAngleRotation(self.axis, -self.angle)


def _uv(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape[-1:] != (2,):
        raise ValueError(f"points must have a trailing dimension of 2, got shape {arr.shape}")
    return arr


def _near_pole(angle) -> bool:
    a = np.asarray(angle)
    return bool(np.any((a < ANGLE_MARGIN) | (a > math.pi - ANGLE_MARGIN)))


def spherical_to_camera(r: float, direction: SphericalDirection) -> CameraPoint:
    if r <= 0:
        raise ValueError(f"range must be positive, got {r}")
    th, ph = direction
    sp = np.sin(ph)
    return CameraPoint(r * sp * np.cos(th), r * np.cos(ph), r * sp * np.sin(th))


def project(direction: SphericalDirection, k: CameraIntrinsics) -> np.ndarray:
    """Pixel coordinates ``(..., 2)`` of a spherical direction."""
    th = np.asarray(direction[0], dtype=float)
    ph = np.asarray(direction[1], dtype=float)
    if _near_pole(th) or _near_pole(ph):
        raise SingularityError("direction within 1e-9 rad of a projection pole")
    st = np.sin(th)
    du = k.fx * np.cos(th) / st
    dv = k.fy * np.cos(ph) / (st * np.sin(ph))
    if np.any(np.abs(du) > COORD_GUARD) or np.any(np.abs(dv) > COORD_GUARD):
        raise SingularityError("projected coordinate exceeds the 1e8 px guard")
    return np.stack([k.cx + du, k.cy + dv], axis=-1)


def unproject(p, k: CameraIntrinsics) -> SphericalDirection:
    uv = _uv(p)
    th = np.arctan2(k.fx, uv[..., 0] - k.cx)
    ph = np.arctan2(k.fy, (uv[..., 1] - k.cy) * np.sin(th))
    if th.ndim == 0:
        return SphericalDirection(float(th), float(ph))
    return SphericalDirection(th, ph)


def yaw_delta(p, dtheta: float, k: CameraIntrinsics) -> np.ndarray:
    """Pixel displacement caused by a camera yaw of ``dtheta`` radians.

    Yaw keeps ``phi`` fixed and advances the ray azimuth to ``theta + dtheta``;
    the two components are the azimuth-only differences of the projection
    formulas.
    """
    th, ph = unproject(p, k)
    th2 = np.asarray(th) + dtheta
    if _near_pole(th2):
        raise SingularityError("yawed azimuth leaves (0, pi)")
    cot_phi = np.cos(ph) / np.sin(ph)
    du = k.fx * (1.0 / np.tan(th2) - 1.0 / np.tan(th))
    dv = k.fy * cot_phi * (1.0 / np.sin(th2) - 1.0 / np.sin(th))
    return np.stack([du, dv], axis=-1)


def pitch_delta(p, dphi_equiv: float, k: CameraIntrinsics) -> np.ndarray:
    """Pixel displacement caused by a camera pitch (rotation about x).

    Same construction as :func:`yaw_delta` with the roles of u/v and fx/fy
    exchanged: the polar axis is the camera x-axis and the azimuth is measured
    in the y-z plane. A positive pitch tilts the optical axis toward -y, which
    decreases that azimuth.
    """
    uv = _uv(p)
    th = np.arctan2(k.fy, uv[..., 1] - k.cy)
    ph = np.arctan2(k.fx, (uv[..., 0] - k.cx) * np.sin(th))
    th2 = th - dphi_equiv
    if _near_pole(th2):
        raise SingularityError("pitched azimuth leaves (0, pi)")
    cot_phi = np.cos(ph) / np.sin(ph)
    du = k.fx * cot_phi * (1.0 / np.sin(th2) - 1.0 / np.sin(th))
    dv = k.fy * (1.0 / np.tan(th2) - 1.0 / np.tan(th))
    return np.stack([du, dv], axis=-1)


def roll_delta(p, droll: float, k: CameraIntrinsics) -> np.ndarray:
    """Pixel displacement caused by a camera roll about the optical axis.

    Normalised coordinates turn rigidly about the principal point (by
    ``-droll`` in the x-right/y-down frame, the inverse of the camera's turn);
    unequal focal lengths make the pixel-space map an axis-scaled rotation.
    """
    uv = _uv(p)
    x = (uv[..., 0] - k.cx) / k.fx
    y = (uv[..., 1] - k.cy) / k.fy
    c, s = math.cos(droll), math.sin(droll)
    x2 = c * x + s * y
    y2 = -s * x + c * y
    return np.stack([k.fx * (x2 - x), k.fy * (y2 - y)], axis=-1)


def _rot_matrix(rot) -> np.ndarray:
    if isinstance(rot, AxisAngleRotation):
        return rot.matrix()
    return np.asarray(rot, dtype=float)


def rotation_map(p, rot, k: CameraIntrinsics) -> np.ndarray:
    """Where pixel ``p`` lands after the camera turns by ``rot``.

    ``rot`` is an :class:`AxisAngleRotation` or a 3x3 rotation matrix.
    """
    uv = _uv(p)
    r = _rot_matrix(rot)
    if np.array_equal(r, np.eye(3)):
        return uv.copy()
    x = (uv[..., 0] - k.cx) / k.fx
    y = (uv[..., 1] - k.cy) / k.fy
    # row-vector form of R^T d
    xr = r[0, 0] * x + r[1, 0] * y + r[2, 0]
    yr = r[0, 1] * x + r[1, 1] * y + r[2, 1]
    zr = r[0, 2] * x + r[1, 2] * y + r[2, 2]
    if np.any(zr <= 0):
        raise BehindCameraError("rotated ray has non-positive forward component")
    return np.stack([k.cx + k.fx * xr / zr, k.cy + k.fy * yr / zr], axis=-1)


def translation_delta(k: CameraIntrinsics, t, z: float) -> np.ndarray:
    """First-order pixel shift from a camera translation ``t`` at depth ``z``.

    The depth is held constant across the move and the ``tz`` radial term is
    dropped (it vanishes at the principal point), leaving ``K T / Z``.
    """
    if z <= 0:
        raise DepthNonPositiveError(f"depth must be positive, got {z}")
    tx, ty, _ = (float(c) for c in t)
    return np.array([k.fx * tx / z, k.fy * ty / z])
