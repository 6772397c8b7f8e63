"""Colour conversions and the Individual Typology Angle (ITA).

Albedo maps are linear reflectance. Lab is computed directly from linear RGB
(sRGB primaries, D65 white, 2 degree observer); no display encoding is applied
before the conversion.
"""
from __future__ import annotations

import enum
import warnings

import numpy as np


class ColorRangeWarning(UserWarning):
    """Raised (as a warning) when strict conversions clamp their input."""


class DegenerateItaWarning(UserWarning):
    """ITA evaluated at L* = 50, b* = 0 where the angle is undefined."""


# Linear sRGB -> XYZ, D65.
RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
XYZ_TO_RGB = np.linalg.inv(RGB_TO_XYZ)
# White point realised by the matrix itself, so RGB (1,1,1) maps to a* = b* = 0 exactly.
D65_WHITE = RGB_TO_XYZ.sum(axis=1)

_DELTA = 6.0 / 29.0


def srgb_to_linear(c, strict: bool = False):
    """sRGB electro-optical transfer function (IEC 61966-2-1)."""
    c = _clamp_unit(c, strict)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c, strict: bool = False):
    """Inverse of :func:`srgb_to_linear`."""
    c = _clamp_unit(c, strict)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.power(c, 1.0 / 2.4) - 0.055)


def _clamp_unit(c, strict):
    c = np.asarray(c, dtype=np.float64)
    if strict and (np.any(c < 0.0) or np.any(c > 1.0)):
        warnings.warn("input outside [0, 1] clamped", ColorRangeWarning, stacklevel=3)
    return np.clip(c, 0.0, 1.0)


def _f(t):
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def _f_inv(t):
    return np.where(t > _DELTA, t**3, 3 * _DELTA**2 * (t - 4.0 / 29.0))


def rgb_to_lab(rgb, white_point=D65_WHITE) -> np.ndarray:
    """Linear RGB (..., 3) to CIE L*a*b* (..., 3)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    xyz = rgb @ RGB_TO_XYZ.T
    fx, fy, fz = (_f(xyz[..., i] / white_point[i]) for i in range(3))
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_rgb(lab, white_point=D65_WHITE) -> np.ndarray:
    """CIE L*a*b* (..., 3) to linear RGB (..., 3). No gamut clipping."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_f_inv(fx), _f_inv(fy), _f_inv(fz)], axis=-1) * white_point
    return xyz @ XYZ_TO_RGB.T


def ita(lab) -> np.ndarray:
    """ITA in degrees, ``atan2(L* - 50, b*)``.

    For b* >= 0 (every realistic skin colour) the value lies in [-90, 90]. The
    undefined point L* = 50, b* = 0 returns 0 and emits
    :class:`DegenerateItaWarning`.
    """
    lab = np.asarray(lab, dtype=np.float64)
    num = lab[..., 0] - 50.0
    den = lab[..., 2]
    if np.any((num == 0.0) & (den == 0.0)):
        warnings.warn("ITA undefined at L*=50, b*=0; returning 0", DegenerateItaWarning, stacklevel=2)
    return np.degrees(np.arctan2(num, den))


class SkinType(enum.IntEnum):
    I = 1
    II = 2
    III = 3
    IV = 4
    V = 5
    VI = 6


SKIN_TYPES = tuple(SkinType)

# Lower bounds (exclusive) of the ITA ranges, lightest first; VI takes the rest.
ITA_THRESHOLDS = ((SkinType.I, 55.0), (SkinType.II, 41.0), (SkinType.III, 28.0),
                  (SkinType.IV, 10.0), (SkinType.V, -30.0))


def classify_skin_type(ita_deg: float) -> SkinType:
    for skin_type, lower in ITA_THRESHOLDS:
        if ita_deg > lower:
            return skin_type
    return SkinType.VI


def ita_range(skin_type: SkinType) -> tuple[float, float]:
    """Half-open interval ``(low, high]`` of ITA values for ``skin_type``."""
    bounds = [np.inf] + [lo for _, lo in ITA_THRESHOLDS] + [-np.inf]
    idx = int(skin_type) - 1
    return bounds[idx + 1], bounds[idx]


def _masked_pixels(uv_map, mask):
    uv_map = np.asarray(uv_map, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if uv_map.shape[:2] != mask.shape:
        raise ValueError(f"map {uv_map.shape[:2]} and mask {mask.shape} resolutions differ")
    if not mask.any():
        raise ValueError("skin mask is empty")
    return uv_map[mask]


def pixel_ita(uv_map, mask) -> np.ndarray:
    """Per-pixel ITA over the masked region, as a flat array."""
    return ita(rgb_to_lab(_masked_pixels(uv_map, mask)))


def mean_ita(uv_map, mask) -> float:
    """ITA score of an albedo map: the mean of its per-pixel ITA values on ``mask``."""
    return float(np.mean(pixel_ita(uv_map, mask)))


def ita_error(pred, gt, mask, per_pixel: bool = False) -> float:
    """Skin-tone error in degrees between two UV albedo maps.

    The default compares the two map-level scores ``|mean_ita(pred) - mean_ita(gt)|``.
    With ``per_pixel=True`` it is the mean of per-pixel absolute ITA differences.
    """
    if np.shape(pred) != np.shape(gt):
        raise ValueError(f"shape mismatch {np.shape(pred)} vs {np.shape(gt)}")
    if per_pixel:
        return float(np.mean(np.abs(pixel_ita(pred, mask) - pixel_ita(gt, mask))))
    return abs(mean_ita(pred, mask) - mean_ita(gt, mask))
