"""PNG and raw-heatmap file I/O, plus sRGB <-> linear-light conversion."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .bezier_encode import HeatmapField


def srgb_to_linear(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1.0 / 2.4) - 0.055)


def to_uint8(img, linear: bool = True) -> np.ndarray:
    enc = linear_to_srgb(img) if linear else np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    return np.rint(enc * 255.0).astype(np.uint8)


def from_uint8(data, linearize: bool = True) -> np.ndarray:
    x = np.asarray(data, dtype=float) / 255.0
    return srgb_to_linear(x) if linearize else x


def load_image(path, linearize: bool = True) -> np.ndarray:
    """Read an 8-bit image as floats in [0, 1]; grayscale stays 2-D, colour becomes RGB."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("L" if im.mode in ("1", "I", "I;16", "F", "LA") else "RGB")
        data = np.asarray(im)
    return from_uint8(data, linearize)


def save_image(path, img, linear: bool = True) -> None:
    data = to_uint8(img, linear)
    Image.fromarray(data).save(path, format="PNG")


def save_mask(path, mask) -> None:
    Image.fromarray(np.asarray(mask, dtype=bool)).convert("1").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("1"), dtype=bool)


def heatmap_paths(stem) -> tuple[Path, Path]:
    stem = Path(stem)
    return stem.with_name(stem.name + ".f32"), stem.with_name(stem.name + ".json")


def save_heatmap(stem, field: HeatmapField) -> tuple[Path, Path]:
    """Write ``<stem>.f32`` (little-endian float32, row-major H x W x C) and a JSON sidecar."""
    raw, meta = heatmap_paths(stem)
    field.values.astype("<f4").tofile(raw)
    sidecar = {"width": field.width, "height": field.height, "channels": field.channels,
               "kind": field.kind, "d_max": field.d_max, "dtype": "float32-le"}
    meta.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return raw, meta


def load_heatmap(stem) -> HeatmapField:
    raw, meta = heatmap_paths(stem)
    info = json.loads(meta.read_text())
    data = np.fromfile(raw, dtype="<f4")
    expected = info["width"] * info["height"] * info["channels"]
    if data.size != expected:
        raise ValueError(f"{raw}: expected {expected} floats, found {data.size}")
    values = data.reshape(info["height"], info["width"], info["channels"]).astype(float)
    return HeatmapField(info["kind"], values, float(info["d_max"]))
