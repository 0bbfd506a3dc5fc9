"""Gyroscope log parsing and exposure-window integration."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .camera_geom import AxisAngleRotation, matrix_to_rotvec, rotvec_to_matrix
from .errors import (
    EmptyLogError,
    MalformedRowError,
    NonMonotonicTimestampsError,
    TooFewSamplesError,
    WindowNotCoveredError,
)

MAX_RATE = 100.0
BOUNDARY_EPS = 1e-12


@dataclass(frozen=True)
class GyroSample:
    t: float
    omega: tuple

    def __post_init__(self):
        omega = tuple(float(w) for w in self.omega)
        object.__setattr__(self, "omega", omega)
        if not math.isfinite(self.t):
            raise ValueError(f"timestamp must be finite, got {self.t}")
        if not math.sqrt(sum(w * w for w in omega)) < MAX_RATE:
            raise ValueError(f"angular rate {omega} exceeds the {MAX_RATE} rad/s sanity bound")


@dataclass(frozen=True)
class ExposureWindow:
    t_start: float
    tau: float

    def __post_init__(self):
        if not (0 < self.tau <= 1.0):
            raise ValueError(f"exposure duration must be in (0, 1] s, got {self.tau}")

    @property
    def t_end(self) -> float:
        return self.t_start + self.tau


@dataclass(frozen=True)
class RotationDelta:
    rot: AxisAngleRotation
    t0: float
    t1: float

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise ValueError(f"interval must satisfy t0 < t1, got [{self.t0}, {self.t1}]")
        if abs(self.rot.angle) > math.pi / 2:
            raise ValueError(f"per-interval rotation {self.rot.angle} rad exceeds pi/2")

    def matrix(self) -> np.ndarray:
        return self.rot.matrix()


@dataclass(frozen=True)
class CameraPose:
    t: float
    orientation: np.ndarray  # 3x3, relative to exposure start

    @property
    def rotation(self) -> AxisAngleRotation:
        return AxisAngleRotation.from_matrix(self.orientation)


def _parse_float(text, line_no):
    try:
        value = float(text)
    except ValueError:
        raise MalformedRowError(line_no, f"non-numeric field {text!r}") from None
    if not math.isfinite(value):
        raise MalformedRowError(line_no, f"non-finite field {text!r}")
    return value


def parse_gyro_log(stream) -> list[GyroSample]:
    """Parse a ``t_sec,omega_x,omega_y,omega_z`` CSV.

    ``stream`` may be bytes, str, or a binary/text file object. A single
    leading header row (any row whose first field is not numeric) is skipped.
    Blank lines are ignored.
    """
    if isinstance(stream, (bytes, bytearray)):
        text = bytes(stream).decode("utf-8")
    elif isinstance(stream, str):
        text = stream
    else:
        data = stream.read()
        text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data

    samples = []
    first_row = True
    for line_no, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if first_row:
            first_row = False
            try:
                float(fields[0])
            except ValueError:
                continue  # header
        if len(fields) != 4:
            raise MalformedRowError(line_no, f"expected 4 columns, got {len(fields)}")
        t, wx, wy, wz = (_parse_float(f, line_no) for f in fields)
        if samples and t <= samples[-1].t:
            raise NonMonotonicTimestampsError(
                f"line {line_no}: timestamp {t} does not follow {samples[-1].t}"
            )
        try:
            samples.append(GyroSample(t, (wx, wy, wz)))
        except ValueError as exc:
            raise MalformedRowError(line_no, str(exc)) from None
    if not samples:
        raise EmptyLogError("gyro log contains no samples")
    return samples


def write_gyro_log(samples: Iterable[GyroSample], header: bool = True) -> str:
    """Serialise samples to CSV text using shortest round-trip float formatting."""
    lines = ["t_sec,omega_x,omega_y,omega_z"] if header else []
    for s in samples:
        lines.append(",".join(repr(float(x)) for x in (s.t, *s.omega)))
    return "\n".join(lines) + "\n"


def _interp_omega(samples: Sequence[GyroSample], t: float) -> tuple:
    times = [s.t for s in samples]
    i = int(np.searchsorted(times, t))
    if i < len(samples) and abs(samples[i].t - t) <= BOUNDARY_EPS:
        return samples[i].omega
    a, b = samples[i - 1], samples[i]
    f = (t - a.t) / (b.t - a.t)
    return tuple(wa + f * (wb - wa) for wa, wb in zip(a.omega, b.omega))


def resample_window(samples: Sequence[GyroSample], w: ExposureWindow) -> list[GyroSample]:
    """Samples strictly inside the window, bounded by interpolated edge samples."""
    if not samples:
        raise EmptyLogError("no gyro samples")
    t0, t1 = w.t_start, w.t_end
    if samples[0].t > t0 + BOUNDARY_EPS or samples[-1].t < t1 - BOUNDARY_EPS:
        raise WindowNotCoveredError(
            f"window [{t0}, {t1}] not covered by samples spanning "
            f"[{samples[0].t}, {samples[-1].t}]"
        )
    inner = [s for s in samples if t0 + BOUNDARY_EPS < s.t < t1 - BOUNDARY_EPS]
    return [GyroSample(t0, _interp_omega(samples, t0)), *inner,
            GyroSample(t1, _interp_omega(samples, t1))]


def integrate_window(samples: Sequence[GyroSample], w: ExposureWindow,
                     alignment=None) -> list[RotationDelta]:
    """Per-interval rotations over an exposure window.

    Each interval integrates angular velocity with the trapezoidal rule and
    exponentiates the resulting rotation vector. ``alignment`` is an optional
    fixed 3x3 gyro-to-camera rotation applied to every rate vector.
    """
    pts = resample_window(samples, w)
    if len(pts) < 2:
        raise TooFewSamplesError("need at least one interval inside the window")
    align = None if alignment is None else np.asarray(alignment, dtype=float)
    deltas = []
    for a, b in zip(pts[:-1], pts[1:]):
        wa, wb = np.asarray(a.omega), np.asarray(b.omega)
        if align is not None:
            wa, wb = align @ wa, align @ wb
        rotvec = 0.5 * (wa + wb) * (b.t - a.t)
        deltas.append(RotationDelta(AxisAngleRotation.from_rotvec(rotvec), a.t, b.t))
    return deltas


def _reorthonormalize(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


def pose_chain(deltas: Sequence[RotationDelta]) -> list[CameraPose]:
    """Cumulative orientations; ``pose[j] = pose[j-1] @ delta[j]`` (body frame)."""
    if not deltas:
        raise ValueError("pose_chain needs at least one delta")
    current = np.eye(3)
    poses = [CameraPose(deltas[0].t0, current)]
    for d in deltas:
        current = _reorthonormalize(current @ d.matrix())
        poses.append(CameraPose(d.t1, current))
    return poses


def total_rotation(deltas: Sequence[RotationDelta]) -> AxisAngleRotation:
    return AxisAngleRotation.from_rotvec(matrix_to_rotvec(pose_chain(deltas)[-1].orientation))


def constant_rate_deltas(omega, tau: float, m: int = 6, t_start: float = 0.0) -> list[RotationDelta]:
    """``m`` equal deltas for a constant angular velocity held over ``tau``."""
    dt = tau / m
    rot = AxisAngleRotation.from_rotvec(np.asarray(omega, dtype=float) * dt)
    return [RotationDelta(rot, t_start + j * dt, t_start + (j + 1) * dt) for j in range(m)]


def identity_deltas(m: int = 6, tau: float = 0.03) -> list[RotationDelta]:
    return constant_rate_deltas((0.0, 0.0, 0.0), tau, m)


__all__ = [
    "GyroSample", "ExposureWindow", "RotationDelta", "CameraPose",
    "parse_gyro_log", "write_gyro_log", "resample_window", "integrate_window",
    "pose_chain", "total_rotation", "constant_rate_deltas", "identity_deltas",
    "rotvec_to_matrix",
]
