"""
Cubic Bezier fits of blur trajectories and their per-pixel heatmap encoding.

Every trajectory is summarised by a cubic whose endpoints are pinned to the
first and last trajectory nodes; the two inner control points come from a
linear least-squares fit at chord-length parameters. The heatmaps store those
points as offsets from the pixel that owns the trajectory:

* endpoint field, 2 channels: ``p3 - (u, v)``
* control field, 4 channels: ``p1 - (u, v)`` then ``p2 - (u, v)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, TooFewNodesError

FIT_TOL = 0.5
D_MAX = 100.0
DENSE_SAMPLES = 1024
REFINE_PASSES = 10
SPLAT_SIGMA = 1.5

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class BezierCurve:
    p0: tuple
    p1: tuple
    p2: tuple
    p3: tuple

    def __post_init__(self):
        for name in ("p0", "p1", "p2", "p3"):
            pt = tuple(float(c) for c in getattr(self, name))
            if len(pt) != 2 or not all(math.isfinite(c) for c in pt):
                raise ValueError(f"{name} must be a finite (u, v) pair, got {pt}")
            object.__setattr__(self, name, pt)

    @classmethod
    def from_array(cls, ctrl) -> "BezierCurve":
        ctrl = np.asarray(ctrl, dtype=float)
        return cls(*(tuple(row) for row in ctrl))

    @property
    def control(self) -> np.ndarray:
        return np.array([self.p0, self.p1, self.p2, self.p3])


@dataclass(frozen=True)
class FitReport:
    max_deviation: float
    ok: bool


def bernstein(t) -> np.ndarray:
    """Cubic Bernstein basis, shape ``(..., 4)``."""
    t = np.asarray(t, dtype=float)
    s = 1.0 - t
    return np.stack([s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t], axis=-1)


def _eval(ctrl, t):
    # ctrl (..., 4, 2), t (..., S) -> (..., S, 2)
    return bernstein(t) @ ctrl


def bezier_point(c: BezierCurve, t):
    """Point(s) on the curve at parameter(s) ``t`` in [0, 1]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any((t_arr < 0.0) | (t_arr > 1.0)):
        raise ValueError("curve parameter must lie in [0, 1]")
    return bernstein(t_arr) @ c.control


def chord_parameters(nodes) -> np.ndarray:
    """Cumulative chord length normalised to [0, 1]; uniform for static nodes."""
    nodes = np.asarray(nodes, dtype=float)
    seg = np.hypot(*np.moveaxis(np.diff(nodes, axis=-2), -1, 0))
    cum = np.concatenate([np.zeros(seg.shape[:-1] + (1,)), np.cumsum(seg, axis=-1)], axis=-1)
    total = cum[..., -1:]
    k = nodes.shape[-2]
    uniform = np.broadcast_to(np.linspace(0.0, 1.0, k), cum.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(total > 0, cum / np.where(total > 0, total, 1.0), uniform)
    t[..., -1] = 1.0
    return t


def _fit_at(nodes, t) -> np.ndarray:
    # least-squares inner control points for fixed per-node parameters t
    p0 = nodes[:, 0]
    p3 = nodes[:, -1]
    basis = bernstein(t)  # (N, K, 4)
    line = p0[:, None, :] + t[..., None] * (p3 - p0)[:, None, :]
    resid = nodes - line
    b1, b2 = basis[..., 1], basis[..., 2]
    a11 = np.sum(b1 * b1, axis=1)
    a12 = np.sum(b1 * b2, axis=1)
    a22 = np.sum(b2 * b2, axis=1)
    r1 = np.einsum("nk,nkd->nd", b1, resid)
    r2 = np.einsum("nk,nkd->nd", b2, resid)

    det = a11 * a22 - a12 * a12
    scale = np.maximum(a11 * a22, 1e-300)
    good = det > 1e-10 * scale
    c1 = np.zeros_like(p0)
    c2 = np.zeros_like(p0)
    if np.any(good):
        g = good
        inv_det = 1.0 / det[g]
        c1[g] = (a22[g, None] * r1[g] - a12[g, None] * r2[g]) * inv_det[:, None]
        c2[g] = (a11[g, None] * r2[g] - a12[g, None] * r1[g]) * inv_det[:, None]
    bad = ~good
    if np.any(bad):
        # rank <= 1: the pseudo-inverse of a rank-1 PSD matrix M is M / trace(M)^2
        tr = a11[bad] + a22[bad]
        q = np.where(tr > 0, tr * tr, np.inf)[:, None]
        c1[bad] = (a11[bad, None] * r1[bad] + a12[bad, None] * r2[bad]) / q
        c2[bad] = (a12[bad, None] * r1[bad] + a22[bad, None] * r2[bad]) / q

    span = p3 - p0
    p1 = p0 + span / 3.0 + c1
    p2 = p0 + 2.0 * span / 3.0 + c2
    return np.stack([p0, p1, p2, p3], axis=1)


def _project_parameters(ctrl, nodes, t, steps: int = 3) -> np.ndarray:
    """Newton steps moving each interior ``t`` toward the closest curve point."""
    d1 = 3.0 * np.diff(ctrl, axis=1)  # (N, 3, 2)
    d2 = 6.0 * np.diff(ctrl, n=2, axis=1)  # (N, 2, 2)
    t = t.copy()
    for _ in range(steps):
        s = 1.0 - t
        e = _eval(ctrl, t) - nodes
        v1 = np.stack([s * s, 2.0 * s * t, t * t], axis=-1) @ d1
        v2 = np.stack([s, t], axis=-1) @ d2
        num = np.sum(e * v1, axis=-1)
        den = np.sum(v1 * v1, axis=-1) + np.sum(e * v2, axis=-1)
        step = np.where(den > 1e-12, num / np.where(den > 1e-12, den, 1.0), 0.0)
        t = np.clip(t - step, 0.0, 1.0)
        t[..., 0] = 0.0
        t[..., -1] = 1.0
    return t


def refine_fit(ctrl, nodes, passes: int = REFINE_PASSES):
    """Alternate closest-point reparameterisation and least-squares refits.

    Returns ``(ctrl, deviation)``: per curve, whichever of the input and the
    refined fit has the smaller max node-to-curve distance, and that distance.
    """
    ctrl = np.asarray(ctrl, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    t = chord_parameters(nodes)
    cur = ctrl
    for _ in range(passes):
        t = _project_parameters(cur, nodes, t)
        cur = _fit_at(nodes, t)
    dev_in = fit_deviation_batch(ctrl, nodes)
    dev_new = fit_deviation_batch(cur, nodes)
    better = dev_new < dev_in
    return np.where(better[:, None, None], cur, ctrl), np.where(better, dev_new, dev_in)


def fit_cubic_bezier_batch(nodes, refine_above: float | None = FIT_TOL) -> np.ndarray:
    """Fit many trajectories at once: ``(N, K, 2)`` nodes -> ``(N, 4, 2)`` controls.

    Endpoints are pinned to the first and last node and the inner control
    points are the least-squares solution at chord-length parameters, solved
    as corrections to the straight segment (control points at the 1/3 and 2/3
    marks). That keeps the fit translation-equivariant and makes
    under-determined cases (K <= 3) fall back to the minimum-norm departure
    from a line.

    Strongly curved or back-tracking paths are poorly served by chord-length
    parameters. Curves whose residual at those parameters exceeds
    ``refine_above`` px are passed through :func:`refine_fit`; ``None``
    disables this and returns the plain chord-length fit.
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 3 or nodes.shape[-1] != 2:
        raise ValueError(f"nodes must have shape (N, K, 2), got {nodes.shape}")
    if nodes.shape[1] < 2:
        raise TooFewNodesError("a Bezier fit needs at least two nodes")
    ctrl = _fit_at(nodes, chord_parameters(nodes))
    if refine_above is not None and nodes.shape[1] > 2:
        suspect = np.flatnonzero(residual_bound(ctrl, nodes) > refine_above)
        if suspect.size:
            ctrl[suspect] = refine_fit(ctrl[suspect], nodes[suspect])[0]
    return ctrl


def fit_cubic_bezier(nodes) -> BezierCurve:
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 2 or nodes.shape[-1] != 2:
        raise ValueError(f"nodes must have shape (K, 2), got {nodes.shape}")
    if len(nodes) < 2:
        raise TooFewNodesError("a Bezier fit needs at least two nodes")
    return BezierCurve.from_array(fit_cubic_bezier_batch(nodes[None])[0])


def residual_bound(ctrl, nodes) -> np.ndarray:
    """Per-curve max distance from each node to the curve at its chord parameter.

    This is an upper bound on the true node-to-curve distance and is cheap
    enough to run on every pixel of a frame.
    """
    t = chord_parameters(nodes)
    pts = _eval(ctrl, t)
    return np.max(np.hypot(*np.moveaxis(pts - nodes, -1, 0)), axis=-1)


def _node_distances(ctrl, nodes, samples=DENSE_SAMPLES, iters=48):
    # ctrl (N, 4, 2), nodes (N, K, 2) -> (N, K) minimal distances
    ts = np.linspace(0.0, 1.0, samples)
    curve = _eval(ctrl, np.broadcast_to(ts, ctrl.shape[:1] + ts.shape))  # (N, S, 2)
    diff = curve[:, None, :, :] - nodes[:, :, None, :]
    d2 = np.einsum("nksd,nksd->nks", diff, diff)
    best = np.argmin(d2, axis=-1)
    step = 1.0 / (samples - 1)
    lo = np.clip(ts[best] - step, 0.0, 1.0)
    hi = np.clip(ts[best] + step, 0.0, 1.0)

    def dist2(t):
        pt = np.einsum("nkb,nbd->nkd", bernstein(t), ctrl)
        e = pt - nodes
        return np.einsum("nkd,nkd->nk", e, e)

    for _ in range(iters):
        x1 = hi - _GOLDEN * (hi - lo)
        x2 = lo + _GOLDEN * (hi - lo)
        left = dist2(x1) < dist2(x2)
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
    refined = np.minimum(dist2(0.5 * (lo + hi)), np.take_along_axis(d2, best[..., None], -1)[..., 0])
    return np.sqrt(refined)


def fit_deviation_batch(ctrl, nodes, chunk: int = 256) -> np.ndarray:
    """Max node-to-curve distance for each curve (dense scan plus refinement)."""
    ctrl = np.asarray(ctrl, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    out = np.empty(len(ctrl))
    for s in range(0, len(ctrl), chunk):
        out[s:s + chunk] = _node_distances(ctrl[s:s + chunk], nodes[s:s + chunk]).max(axis=-1)
    return out


def fit_deviation(c: BezierCurve, nodes, fit_tol: float = FIT_TOL) -> FitReport:
    nodes = np.asarray(nodes, dtype=float)
    if len(nodes) < 2:
        raise TooFewNodesError("deviation needs at least two nodes")
    dev = float(fit_deviation_batch(c.control[None], nodes[None])[0])
    return FitReport(dev, dev <= fit_tol)


def fit_ok_flags(ctrl, nodes, fit_tol: float = FIT_TOL):
    """Exact ok flags for many fits; the dense scan only runs where the cheap bound fails."""
    bound = residual_bound(ctrl, nodes)
    dev = bound.copy()
    suspect = np.flatnonzero(bound > fit_tol)
    if suspect.size:
        dev[suspect] = fit_deviation_batch(ctrl[suspect], nodes[suspect])
    return dev <= fit_tol, dev


@dataclass
class HeatmapField:
    kind: str  # "endpoint" or "control"
    values: np.ndarray  # (H, W, 2) or (H, W, 4), pixels
    d_max: float = D_MAX

    def __post_init__(self):
        channels = {"endpoint": 2, "control": 4}
        if self.kind not in channels:
            raise ValueError(f"unknown heatmap kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[-1] != channels[self.kind]:
            raise DimensionMismatchError(
                f"{self.kind} field needs shape (H, W, {channels[self.kind]}), got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("heatmap values must be finite")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def normalized(self) -> np.ndarray:
        return np.clip(self.values / self.d_max, -1.0, 1.0)

    def absolute_points(self, stride: int = 1) -> np.ndarray:
        """Absolute (u, v) locations encoded at every ``stride``-th pixel, ``(P, 2)``."""
        v, u = np.mgrid[0:self.height:stride, 0:self.width:stride].astype(float)
        base = np.stack([u, v], axis=-1)
        vals = self.values[::stride, ::stride]
        groups = [vals[..., c:c + 2] + base for c in range(0, self.channels, 2)]
        return np.concatenate([g.reshape(-1, 2) for g in groups])


def encode_heatmaps(curves, shape=None, d_max: float = D_MAX):
    """Per-pixel control arrays ``(H, W, 4, 2)`` -> ``(H_c, H_e)`` offset fields.

    ``curves[v, u]`` holds the control points of the trajectory that starts
    at pixel ``(u, v)``. ``shape`` (height, width), when given, must match.
    """
    ctrl = np.asarray(curves, dtype=float)
    if ctrl.ndim != 4 or ctrl.shape[2:] != (4, 2):
        raise DimensionMismatchError(f"curve grid must have shape (H, W, 4, 2), got {ctrl.shape}")
    if shape is not None and tuple(shape[:2]) != ctrl.shape[:2]:
        raise DimensionMismatchError(f"curve grid {ctrl.shape[:2]} does not match image {tuple(shape[:2])}")
    h, w = ctrl.shape[:2]
    v, u = np.mgrid[0:h, 0:w].astype(float)
    base = np.stack([u, v], axis=-1)
    he = ctrl[:, :, 3] - base
    hc = np.concatenate([ctrl[:, :, 1] - base, ctrl[:, :, 2] - base], axis=-1)
    return HeatmapField("control", hc, d_max), HeatmapField("endpoint", he, d_max)


def splat_accumulate(points, shape, sigma: float = SPLAT_SIGMA) -> np.ndarray:
    """Sum of unit-mass sampled Gaussians centred on ``points`` (truncated at 4 sigma)."""
    h, w = shape
    out = np.zeros(h * w)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.size == 0:
        return out.reshape(h, w)
    radius = int(math.ceil(4.0 * sigma))
    offs = np.arange(-radius, radius + 1)
    cu = np.rint(pts[:, 0]).astype(np.int64)
    cv = np.rint(pts[:, 1]).astype(np.int64)
    du = cu[:, None] + offs  # (P, D)
    dv = cv[:, None] + offs
    gu = np.exp(-((du - pts[:, :1]) ** 2) / (2 * sigma * sigma))
    gv = np.exp(-((dv - pts[:, 1:]) ** 2) / (2 * sigma * sigma))
    weight = gv[:, :, None] * gu[:, None, :] / (2.0 * math.pi * sigma * sigma)
    uu = np.broadcast_to(du[:, None, :], weight.shape)
    vv = np.broadcast_to(dv[:, :, None], weight.shape)
    inside = (uu >= 0) & (uu < w) & (vv >= 0) & (vv < h)
    np.add.at(out, (vv[inside] * w + uu[inside]), weight[inside])
    return out.reshape(h, w)


def render_heatmap_viz(field: HeatmapField, stride: int, sigma: float = SPLAT_SIGMA) -> np.ndarray:
    """Grayscale splat picture of a field, scaled into [0, 1]; for inspection only."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    acc = splat_accumulate(field.absolute_points(stride), (field.height, field.width), sigma)
    peak = acc.max()
    return acc / peak if peak > 0 else acc


@dataclass
class DenseFit:
    control: HeatmapField
    endpoint: HeatmapField
    ok: np.ndarray  # (H, W) bool
    deviation: np.ndarray  # (H, W); exact where it matters for ``ok``, else an upper bound

    @property
    def fraction_ok(self) -> float:
        return float(self.ok.mean())

    @property
    def n_failed(self) -> int:
        return int((~self.ok).sum())


def dense_fit(nodes, fit_tol: float = FIT_TOL, d_max: float = D_MAX) -> DenseFit:
    """Fit every pixel's trajectory from a ``(H, W, m + 1, 2)`` node grid."""
    nodes = np.asarray(nodes, dtype=float)
    h, w, k, _ = nodes.shape
    flat = nodes.reshape(h * w, k, 2)
    ctrl = fit_cubic_bezier_batch(flat)
    ok, dev = fit_ok_flags(ctrl, flat, fit_tol)
    hc, he = encode_heatmaps(ctrl.reshape(h, w, 4, 2), d_max=d_max)
    return DenseFit(hc, he, ok.reshape(h, w), dev.reshape(h, w))
