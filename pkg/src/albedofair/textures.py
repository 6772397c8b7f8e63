"""Procedural UV albedo maps balanced over the six ITA skin types.

Each map starts from a base skin colour drawn in Lab for a target ITA inside
its category, adds smooth low-frequency tone variation, and darkens or tints
the scalp, brows, eyes and lips. Every map is re-checked after generation and
resampled until its mean skin ITA lands in the requested category.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .colorimetry import SKIN_TYPES, SkinType, classify_skin_type, lab_to_rgb, mean_ita
from .geometry import FEATURES, skin_mask, uv_grid
from .io import read_f32, read_png_linear

# Target ITA sampling ranges, kept inside each category's bounds.
TARGET_ITA = {
    SkinType.I: (57.0, 68.0),
    SkinType.II: (43.0, 53.0),
    SkinType.III: (30.0, 39.0),
    SkinType.IV: (12.0, 26.0),
    SkinType.V: (-26.0, 8.0),
    SkinType.VI: (-50.0, -33.0),
}
MAX_LIGHTNESS = 82.0


@dataclass(frozen=True)
class AlbedoSample:
    uv_map: np.ndarray
    skin_type: SkinType
    ita: float
    name: str = ""


def _smooth_field(rng, u, v, n_waves=4):
    out = np.zeros_like(u)
    for _ in range(n_waves):
        fu, fv = rng.uniform(0.5, 3.0, size=2)
        ph = rng.uniform(0, 2 * np.pi)
        out += np.cos(2 * np.pi * (fu * u + fv * v) + ph)
    return out / n_waves


def _soft(u, v, region, edge=0.35):
    cu, cv, ru, rv = region
    r = np.sqrt(((u - cu) / ru) ** 2 + ((v - cv) / rv) ** 2)
    return np.clip((1.0 + edge - r) / edge, 0.0, 1.0)


def base_lab(rng, skin_type: SkinType) -> np.ndarray:
    target = np.radians(rng.uniform(*TARGET_ITA[skin_type]))
    b = rng.uniform(13.0, 21.0)
    if np.tan(target) > 0:
        b = min(b, (MAX_LIGHTNESS - 50.0) / np.tan(target))
    a = rng.uniform(7.0, 14.0)
    return np.array([50.0 + b * np.tan(target), a, b])


def procedural_albedo(rng, skin_type: SkinType, d: int = 256) -> np.ndarray:
    """One d x d x 3 linear albedo map whose base tone targets ``skin_type``."""
    u, v = uv_grid(d)
    L0, a0, b0 = base_lab(rng, skin_type)
    L = L0 + 2.5 * _smooth_field(rng, u, v)
    a = a0 + 2.0 * _smooth_field(rng, u, v)
    b = b0 + 1.5 * _smooth_field(rng, u, v)

    lips = _soft(u, v, FEATURES["lips"])
    a = a + 12.0 * lips
    L = L - 8.0 * lips
    for key in ("brow_left", "brow_right"):
        w = _soft(u, v, FEATURES[key])
        L = L * (1 - 0.55 * w)
    for key in ("eye_left", "eye_right"):
        w = _soft(u, v, FEATURES[key])
        L = L * (1 - 0.4 * w)
    hair_level = rng.uniform(12.0, 30.0)
    scalp = np.clip((0.2 - v) / 0.05, 0.0, 1.0)
    L = L * (1 - scalp) + hair_level * scalp
    a = a * (1 - 0.7 * scalp)
    b = b * (1 - 0.5 * scalp)

    rgb = lab_to_rgb(np.stack([L, a, b], axis=-1))
    return np.clip(rgb, 0.0, 1.0)


def balanced_library(per_type: int, d: int = 256, seed: int = 0, max_tries: int = 50) -> list[AlbedoSample]:
    """``per_type`` maps for each of the six skin types, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    mask = skin_mask(d)
    out = []
    for skin_type in SKIN_TYPES:
        for k in range(per_type):
            for _ in range(max_tries):
                m = procedural_albedo(rng, skin_type, d)
                score = mean_ita(m, mask)
                if classify_skin_type(score) == skin_type:
                    break
            else:
                raise RuntimeError(f"could not generate a type {skin_type.name} map in {max_tries} tries")
            out.append(AlbedoSample(m, skin_type, score, f"{skin_type.name}_{k:03d}"))
    return out


def classify_maps(maps, names=None) -> list[AlbedoSample]:
    maps = list(maps)
    names = names or [f"map_{i:03d}" for i in range(len(maps))]
    out = []
    for name, m in zip(names, maps):
        score = mean_ita(m, skin_mask(m.shape[0]))
        out.append(AlbedoSample(np.asarray(m, dtype=np.float64), classify_skin_type(score), score, name))
    return out


def load_texture_dir(path) -> list[AlbedoSample]:
    """Load ``*.f32`` (linear) and ``*.png`` (sRGB) UV maps from a directory."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"texture directory not found: {path}")
    maps, names = [], []
    for f in sorted(path.iterdir()):
        if f.suffix == ".f32":
            maps.append(read_f32(f))
        elif f.suffix.lower() == ".png":
            maps.append(read_png_linear(f))
        else:
            continue
        names.append(f.stem)
    if not maps:
        raise ValueError(f"no .f32 or .png textures in {path}")
    return classify_maps(maps, names)


def type_counts(samples) -> dict[str, int]:
    counts = {t.name: 0 for t in SKIN_TYPES}
    for s in samples:
        counts[s.skin_type.name] += 1
    return counts


def check_coverage(samples, minimum: int = 1) -> None:
    counts = type_counts(samples)
    missing = [k for k, n in counts.items() if n < minimum]
    if missing:
        raise ValueError(f"albedo source does not cover all skin types (need >= {minimum} each): {counts}")
