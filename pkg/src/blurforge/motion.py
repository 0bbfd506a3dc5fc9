"""Analytic camera-shake motions: gyro log simulation and fine-step ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera_geom import rotvec_to_matrix
from .imu_ingest import GyroSample


@dataclass(frozen=True)
class SineTerm:
    amplitude: tuple  # rad/s per axis
    freq: float  # Hz
    phase: float = 0.0


@dataclass(frozen=True)
class MotionSpec:
    """Angular velocity ``omega(t) = constant + sum_k a_k sin(2 pi f_k t + phase_k)``."""

    constant: tuple = (0.0, 0.0, 0.0)
    sines: tuple = field(default_factory=tuple)

    def omega(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.broadcast_to(np.asarray(self.constant, dtype=float), t.shape + (3,)).copy()
        for s in self.sines:
            out += np.sin(2.0 * math.pi * s.freq * t + s.phase)[..., None] * np.asarray(s.amplitude)
        return out

    def peak_rate_bound(self) -> float:
        """Upper bound on ``|omega(t)|`` over all ``t``."""
        return float(np.linalg.norm(self.constant) +
                     sum(np.linalg.norm(s.amplitude) for s in self.sines))

    def to_dict(self) -> dict:
        return {
            "constant": list(self.constant),
            "sines": [{"amplitude": list(s.amplitude), "freq": s.freq, "phase": s.phase}
                      for s in self.sines],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MotionSpec":
        sines = tuple(SineTerm(tuple(float(a) for a in s["amplitude"]), float(s["freq"]),
                               float(s.get("phase", 0.0))) for s in d.get("sines", []))
        return cls(tuple(float(c) for c in d.get("constant", (0.0, 0.0, 0.0))), sines)


def random_smooth_motion(rng: np.random.Generator, max_rate: float = 2.0,
                         n_terms: int = 2, max_freq: float = 10.0) -> MotionSpec:
    """A random hand-shake-like motion whose rate never exceeds ``max_rate``."""
    parts = rng.dirichlet(np.ones(n_terms + 1)) * max_rate * rng.uniform(0.2, 1.0)

    def direction():
        v = rng.normal(size=3)
        return v / np.linalg.norm(v)

    constant = tuple(direction() * parts[0])
    sines = tuple(
        SineTerm(tuple(direction() * parts[i + 1]), float(rng.uniform(0.5, max_freq)),
                 float(rng.uniform(0.0, 2.0 * math.pi)))
        for i in range(n_terms)
    )
    return MotionSpec(constant, sines)


def sample_gyro(spec: MotionSpec, t0: float, duration: float, rate: float,
                bias=None) -> list[GyroSample]:
    """Samples at ``t0 + i / rate`` covering ``[t0, t0 + duration]`` (end included)."""
    n = int(math.floor(duration * rate + 1e-9)) + 1
    ts = t0 + np.arange(n) / rate
    omega = spec.omega(ts)
    if bias is not None:
        omega = omega + np.asarray(bias, dtype=float)
    return [GyroSample(float(t), tuple(w)) for t, w in zip(ts, omega)]


def fine_rotation(spec: MotionSpec, t_start: float, tau: float, steps: int = 1024,
                  bias=None) -> np.ndarray:
    """Exposure rotation from ``steps`` midpoint-rule increments of the analytic rate."""
    dt = tau / steps
    mids = t_start + (np.arange(steps) + 0.5) * dt
    omega = spec.omega(mids)
    if bias is not None:
        omega = omega + np.asarray(bias, dtype=float)
    r = np.eye(3)
    for w in omega:
        r = r @ rotvec_to_matrix(w * dt)
    return r
