"""
Batch generation of (sharp, blurred, heatmap) triplets with a checksummed manifest.

Each background image gets its own gyro window and its own PRNG stream seeded
from ``(seed, index)``, so outputs do not depend on worker count or scheduling.
The manifest records only relative file names and configuration that affects
the bytes on disk; two runs of the same config therefore produce identical
manifests even when written to different output directories.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bezier_encode import D_MAX, FIT_TOL, HeatmapField
from .blur_synth import SynthConfig, make_triplet
from .camera_geom import CameraIntrinsics
from .errors import SchemaVersionMismatchError
from .images import load_heatmap, load_image, save_heatmap, save_image, save_mask
from .imu_ingest import ExposureWindow, integrate_window, parse_gyro_log
from .trajectory import N_CAP, image_corners, trace_nodes

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
THREADS_ENV = "BLURFORGE_THREADS"


@dataclass(frozen=True)
class DatasetConfig:
    backgrounds_dir: str
    gyro_log: str
    intrinsics: CameraIntrinsics
    output_dir: str
    policy: str = "random"  # "random" or "fixed"
    seed: int | None = None
    windows: tuple = ()  # t_start values for the fixed policy, cycled over items
    tau: float = 0.03
    n_cap: int = N_CAP
    d_max: float = D_MAX
    fit_tol: float = FIT_TOL
    srgb_linearize: bool = True
    workers: int = 1
    min_displacement: float = 1.0
    max_attempts: int = 32

    def __post_init__(self):
        for name in ("backgrounds_dir", "gyro_log", "output_dir"):
            if not str(getattr(self, name)).strip():
                raise ValueError(f"{name} must be a non-empty path")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.policy not in ("random", "fixed"):
            raise ValueError(f"unknown window policy {self.policy!r}")
        if self.policy == "random" and self.seed is None:
            raise ValueError("the random window policy needs a seed")
        if self.policy == "fixed" and not self.windows:
            raise ValueError("the fixed window policy needs at least one window start")
        if self.workers < 1 or self.max_attempts < 1:
            raise ValueError("workers and max_attempts must be >= 1")
        object.__setattr__(self, "windows", tuple(float(t) for t in self.windows))

    def synth_config(self) -> SynthConfig:
        return SynthConfig(n_cap=self.n_cap, fit_tol=self.fit_tol, d_max=self.d_max)

    def recorded(self) -> dict:
        """Settings that determine output bytes (paths and worker count excluded)."""
        return {
            "intrinsics": self.intrinsics.to_dict(),
            "policy": self.policy,
            "seed": self.seed,
            "windows": list(self.windows),
            "tau": self.tau,
            "n_cap": self.n_cap,
            "d_max": self.d_max,
            "fit_tol": self.fit_tol,
            "srgb_linearize": self.srgb_linearize,
            "min_displacement": self.min_displacement,
            "max_attempts": self.max_attempts,
        }


@dataclass
class Manifest:
    path: Path
    schema_version: int
    config: dict
    entries: list = field(default_factory=list)

    @property
    def root(self) -> Path:
        return self.path.parent

    @property
    def n_failed(self) -> int:
        return sum(1 for e in self.entries if e.get("error"))

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "config": self.config, "entries": self.entries}


@dataclass(frozen=True)
class ManifestIssue:
    kind: str  # SchemaVersionMismatch | MissingFile | ChecksumMismatch
    entry_id: str | None
    file: str | None
    detail: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "entry_id": self.entry_id, "file": self.file, "detail": self.detail}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def list_backgrounds(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"backgrounds directory not found: {d}")
    return sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def item_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def resolve_workers(requested: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, cap)
    return max(1, requested)


def intrinsics_for(k: CameraIntrinsics, width: int, height: int) -> CameraIntrinsics:
    """Keep ``k`` when it matches the image; otherwise reuse its focal lengths, centred."""
    if (k.width, k.height) == (width, height):
        return k
    return CameraIntrinsics.centered(k.fx, width, height, fy=k.fy)


def corner_displacement(deltas, k: CameraIntrinsics) -> float:
    nodes = trace_nodes(image_corners(k.width, k.height), deltas, k)
    return float(np.max(np.hypot(*(nodes - nodes[:, :1]).transpose(2, 0, 1))))


def pick_window(cfg: DatasetConfig, samples, k: CameraIntrinsics, index: int):
    """Return ``(window, deltas)`` for item ``index`` under the configured policy."""
    if cfg.policy == "fixed":
        w = ExposureWindow(cfg.windows[index % len(cfg.windows)], cfg.tau)
        return w, integrate_window(samples, w)
    lo, hi = samples[0].t, samples[-1].t - cfg.tau
    if hi < lo:
        raise ValueError(f"gyro log spans {samples[-1].t - samples[0].t:.6g} s, shorter than tau={cfg.tau}")
    rng = item_rng(cfg.seed, index)
    best = 0.0
    for _ in range(cfg.max_attempts):
        w = ExposureWindow(float(rng.uniform(lo, hi)), cfg.tau)
        deltas = integrate_window(samples, w)
        disp = corner_displacement(deltas, k)
        if disp >= cfg.min_displacement:
            return w, deltas
        best = max(best, disp)
    raise ValueError(
        f"no window with corner displacement >= {cfg.min_displacement} px after "
        f"{cfg.max_attempts} draws (largest {best:.3g} px)"
    )


def _write_triplet(cfg, out: Path, entry_id: str, triplet) -> dict:
    names = {
        "sharp": f"{entry_id}_sharp.png",
        "blurred": f"{entry_id}_blurred.png",
        "mask": f"{entry_id}_mask.png",
    }
    save_image(out / names["sharp"], triplet.sharp, linear=cfg.srgb_linearize)
    save_image(out / names["blurred"], triplet.blurred, linear=cfg.srgb_linearize)
    save_mask(out / names["mask"], triplet.contamination_mask)
    hc, he = triplet.heatmaps
    for key, fld in (("hc", hc), ("he", he)):
        raw, meta = save_heatmap(out / f"{entry_id}_{key}", fld)
        names[key] = raw.name
        names[key + "_meta"] = meta.name
    return names


def generate_item(cfg: DatasetConfig, samples, source: Path, index: int) -> dict:
    entry_id = f"{index:05d}"
    entry = {"id": entry_id, "source": source.name, "error": None}
    try:
        sharp = load_image(source, linearize=cfg.srgb_linearize)
        k = intrinsics_for(cfg.intrinsics, sharp.shape[1], sharp.shape[0])
        window, deltas = pick_window(cfg, samples, k, index)
        triplet = make_triplet(sharp, deltas, k, cfg.synth_config(), window=window)
        out = Path(cfg.output_dir)
        names = _write_triplet(cfg, out, entry_id, triplet)
    except Exception as exc:  # recorded per entry; the batch goes on
        log.warning("item %s (%s) failed: %s", entry_id, source.name, exc)
        entry["error"] = f"{type(exc).__name__}: {exc}"
        return entry
    entry.update({
        "files": names,
        "checksums": {key: sha256_file(out / name) for key, name in names.items()},
        "window": triplet.meta["window"],
        "intrinsics": triplet.meta["intrinsics"],
        "stage_plan": triplet.meta["stage_plan"],
        "fit": triplet.meta["fit"],
        "contaminated_pixels": triplet.meta["contaminated_pixels"],
    })
    return entry


def write_manifest(manifest: Manifest) -> Path:
    text = json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n"
    manifest.path.write_text(text)
    return manifest.path


def generate_dataset(cfg: DatasetConfig) -> Manifest:
    backgrounds = list_backgrounds(cfg.backgrounds_dir)
    with open(cfg.gyro_log, "rb") as fh:
        samples = parse_gyro_log(fh)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    workers = resolve_workers(cfg.workers)
    jobs = list(enumerate(backgrounds))
    if workers == 1:
        entries = [generate_item(cfg, samples, src, i) for i, src in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(lambda job: generate_item(cfg, samples, job[1], job[0]), jobs))

    manifest = Manifest(out / MANIFEST_NAME, SCHEMA_VERSION, cfg.recorded(), entries)
    write_manifest(manifest)
    return manifest


def read_manifest(path) -> Manifest:
    path = Path(path)
    data = json.loads(path.read_text())
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatchError(f"manifest schema {version!r}, expected {SCHEMA_VERSION}")
    return Manifest(path, version, data.get("config", {}), data.get("entries", []))


def validate_manifest(path) -> list[ManifestIssue]:
    """Check that every listed file exists and matches its checksum."""
    path = Path(path)
    try:
        manifest = read_manifest(path)
    except SchemaVersionMismatchError as exc:
        return [ManifestIssue("SchemaVersionMismatch", None, path.name, str(exc))]
    issues = []
    for entry in manifest.entries:
        checksums = entry.get("checksums", {})
        for key, name in entry.get("files", {}).items():
            fpath = manifest.root / name
            if not fpath.is_file():
                issues.append(ManifestIssue("MissingFile", entry["id"], name, f"{key} file not found"))
                continue
            actual = sha256_file(fpath)
            if actual != checksums.get(key):
                issues.append(ManifestIssue("ChecksumMismatch", entry["id"], name,
                                            f"expected {checksums.get(key)}, found {actual}"))
    return issues


def load_entry_heatmaps(manifest: Manifest, entry: dict) -> tuple[HeatmapField, HeatmapField]:
    files = entry["files"]
    return tuple(load_heatmap(manifest.root / Path(files[key]).stem) for key in ("hc", "he"))


__all__ = [
    "DatasetConfig", "Manifest", "ManifestIssue", "generate_dataset", "read_manifest",
    "validate_manifest", "item_rng", "pick_window", "corner_displacement", "sha256_file",
]
