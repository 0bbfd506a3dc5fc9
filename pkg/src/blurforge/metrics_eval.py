"""
Trajectory endpoint evaluation and image-quality metrics.

PSNR and SSIM work on float images in [0, 1]. By default they compare
linear-light values; ``srgb=True`` re-encodes both inputs to sRGB first, which
matches the 8-bit convention most deblurring benchmarks report.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .camera_geom import CameraIntrinsics
from .errors import DimensionMismatchError, MalformedRowError, TooSmallError
from .images import linear_to_srgb
from .imu_ingest import ExposureWindow, GyroSample, integrate_window
from .trajectory import trace_point
from .warp import sample_bilinear

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
LOSS_WEIGHT = 0.6

ANNOTATION_COLUMNS = ("record_id", "u_start", "v_start", "u_end", "v_end", "t_start", "tau")


@dataclass(frozen=True)
class EndpointRecord:
    record_id: str
    start: tuple
    observed_end: tuple
    gyro_window: ExposureWindow

    def __post_init__(self):
        for name in ("start", "observed_end"):
            pt = tuple(float(c) for c in getattr(self, name))
            if not all(math.isfinite(c) for c in pt):
                raise ValueError(f"{name} must be finite, got {pt}")
            object.__setattr__(self, name, pt)


@dataclass
class MetricReport:
    mean_error: float | None = None
    errors: list = field(default_factory=list)
    record_ids: list = field(default_factory=list)
    psnr: float | None = None
    ssim: float | None = None

    def to_dict(self) -> dict:
        out = {}
        if self.mean_error is not None:
            out["mean_error"] = self.mean_error
            out["records"] = [{"record_id": r, "error": e} for r, e in zip(self.record_ids, self.errors)]
        if self.psnr is not None:
            out["psnr"] = self.psnr
        if self.ssim is not None:
            out["ssim"] = self.ssim
        return out


def parse_annotations(stream) -> list[EndpointRecord]:
    """Read ``record_id,u_start,v_start,u_end,v_end,t_start,tau`` rows (header optional)."""
    text = stream if isinstance(stream, (str, bytes)) else stream.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    records = []
    for line_no, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if line_no == 1 and row[0].strip() == "record_id":
            continue
        if len(row) != len(ANNOTATION_COLUMNS):
            raise MalformedRowError(line_no, f"expected {len(ANNOTATION_COLUMNS)} columns, got {len(row)}")
        try:
            us, vs, ue, ve, t0, tau = (float(c) for c in row[1:])
        except ValueError:
            raise MalformedRowError(line_no, "non-numeric field") from None
        records.append(EndpointRecord(row[0].strip(), (us, vs), (ue, ve), ExposureWindow(t0, tau)))
    return records


def predict_endpoint(rec: EndpointRecord, samples, k: CameraIntrinsics) -> np.ndarray:
    deltas = integrate_window(samples, rec.gyro_window)
    return trace_point(rec.start, deltas, k).end


def endpoint_error(predicted, observed) -> float:
    p = np.asarray(predicted, dtype=float)
    o = np.asarray(observed, dtype=float)
    return float(math.hypot(*(p - o)))


def evaluate_endpoints(records, samples: list[GyroSample], k: CameraIntrinsics) -> MetricReport:
    errors = [endpoint_error(predict_endpoint(r, samples, k), r.observed_end) for r in records]
    mean = float(np.mean(errors)) if errors else 0.0
    return MetricReport(mean_error=mean, errors=errors, record_ids=[r.record_id for r in records])


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, srgb: bool = False) -> float:
    a, b = _pair(a, b)
    if srgb:
        a, b = linear_to_srgb(a), linear_to_srgb(b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    # separable 'valid' correlation
    n = len(g)
    h, w = img.shape
    rows = sum(g[i] * img[:, i:w - n + 1 + i] for i in range(n))
    return sum(g[i] * rows[i:h - n + 1 + i, :] for i in range(n))


def _ssim_channel(a, b, c1, c2):
    g = gaussian_window()
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a * mu_a
    sbb = _filter_valid(b * b, g) - mu_b * mu_b
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def ssim(a, b, srgb: bool = False) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over channels."""
    a, b = _pair(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise TooSmallError(f"SSIM needs both sides >= {SSIM_WINDOW}, got {a.shape[:2]}")
    if srgb:
        a, b = linear_to_srgb(a), linear_to_srgb(b)
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    if a.ndim == 2:
        return _ssim_channel(a, b, c1, c2)
    return float(np.mean([_ssim_channel(a[..., c], b[..., c], c1, c2) for c in range(a.shape[2])]))


def downsample_bilinear(img, factor: float) -> np.ndarray:
    """Shrink by ``factor`` with pixel-centre-aligned bilinear sampling."""
    img = np.asarray(img, dtype=float)
    h, w = img.shape[:2]
    oh, ow = max(1, int(round(h / factor))), max(1, int(round(w / factor)))
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return sample_bilinear(img, gx, gy)


def multiscale_loss(l1, s1, l3, s3, omega: float = LOSS_WEIGHT) -> float:
    """Element-normalised Euclidean loss at the finest and the third scale."""
    l1, s1 = _pair(l1, s1)
    l3, s3 = _pair(l3, s3)
    return float(np.linalg.norm((l1 - s1).ravel()) / l1.size
                 + omega * np.linalg.norm((l3 - s3).ravel()) / l3.size)
