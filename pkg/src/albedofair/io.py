"""File formats shared by the package.

* ``.f32`` raw little-endian float32 arrays with a ``.json`` sidecar holding
  shape and layout metadata.
* 8-bit sRGB PNG for display images, 8-bit single-channel PNG for masks.
* JSON written with sorted keys and full float precision so that repeated runs
  produce byte-identical files.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .colorimetry import linear_to_srgb, srgb_to_linear


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_f32(path, array: np.ndarray, **meta) -> None:
    """Write ``array`` as raw float32 plus a JSON sidecar next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(array, dtype="<f4")
    path.write_bytes(arr.tobytes())
    header = {"dtype": "float32", "byteorder": "little", "shape": list(arr.shape)}
    header.update(meta)
    write_json(sidecar_path(path), header)


def read_f32(path) -> np.ndarray:
    path = Path(path)
    header = read_json(sidecar_path(path))
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    shape = tuple(header["shape"])
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: {data.size} values, header expects shape {shape}")
    return data.reshape(shape).astype(np.float64)


def write_png_linear(path, image: np.ndarray) -> None:
    """Export a linear-light RGB image as 8-bit sRGB, clamping to [0, 1]."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    encoded = linear_to_srgb(np.clip(image, 0.0, 1.0))
    u8 = np.round(encoded * 255.0).astype(np.uint8)
    Image.fromarray(u8, mode="RGB").save(path, optimize=False)


def read_png_linear(path) -> np.ndarray:
    with Image.open(path) as im:
        u8 = np.asarray(im.convert("RGB"), dtype=np.float64)
    return srgb_to_linear(u8 / 255.0)


def write_mask_png(path, mask: np.ndarray) -> None:
    """Masks are stored as 0 (excluded) / 255 (included)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    u8 = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(path, optimize=False)


def read_mask_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) >= 128


def relpath(path, start) -> str:
    return Path(os.path.relpath(path, start)).as_posix()
