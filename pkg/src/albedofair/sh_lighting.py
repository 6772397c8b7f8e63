"""Real spherical-harmonics lighting, 3 bands (9 coefficients per colour channel).

Coefficient order is ``(Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22)``. The
basis is the plain orthonormal real SH without Condon-Shortley phase and
without irradiance-convolution constants; any cosine-lobe factor belongs to the
light coefficients. Light vectors have shape ``(3, 9)``, channel-major.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

N_BANDS = 3
N_COEFFS = N_BANDS**2

C0 = 0.5 / np.sqrt(np.pi)            # Y00
C1 = np.sqrt(3.0 / (4.0 * np.pi))    # band 1
C2 = 0.5 * np.sqrt(15.0 / np.pi)     # Y2-2, Y2-1, Y21
C20 = 0.25 * np.sqrt(5.0 / np.pi)    # Y20
C22 = 0.25 * np.sqrt(15.0 / np.pi)   # Y22


class NonUnitNormalWarning(UserWarning):
    pass


def eval_basis(n, strict: bool = False) -> np.ndarray:
    """Evaluate the 9 basis functions at unit direction(s) ``n`` of shape (..., 3)."""
    n = np.asarray(n, dtype=np.float64)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    if strict and np.any(np.abs(norm - 1.0) > 1e-6):
        warnings.warn("non-unit normals renormalised", NonUnitNormalWarning, stacklevel=2)
        n = n / np.where(norm > 0, norm, 1.0)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    return np.stack(
        [
            np.full_like(x, C0),
            C1 * y,
            C1 * z,
            C1 * x,
            C2 * x * y,
            C2 * y * z,
            C20 * (3.0 * z * z - 1.0),
            C2 * x * z,
            C22 * (x * x - y * y),
        ],
        axis=-1,
    )


def shade(normals, sh, mask=None) -> np.ndarray:
    """Shading image ``I_S[..., c] = sum_k sh[c, k] * H_k(n)``; zero off ``mask``.

    Negative values are kept; clamping is an export concern.
    """
    sh = np.asarray(sh, dtype=np.float64)
    if sh.shape != (3, N_COEFFS):
        raise ValueError(f"SH must have shape (3, 9), got {sh.shape}")
    h = eval_basis(normals)
    out = h @ sh.T
    if mask is not None:
        out = np.where(np.asarray(mask, dtype=bool)[..., None], out, 0.0)
    return out


def render(albedo_img, shading_img) -> np.ndarray:
    """Diffuse image formation, the elementwise product of albedo and shading."""
    albedo_img = np.asarray(albedo_img, dtype=np.float64)
    shading_img = np.asarray(shading_img, dtype=np.float64)
    if albedo_img.shape != shading_img.shape:
        raise ValueError(f"shape mismatch {albedo_img.shape} vs {shading_img.shape}")
    return albedo_img * shading_img


@dataclass(frozen=True)
class ShDecomposition:
    intensity: np.ndarray   # (3,) per-channel norm
    direction: np.ndarray   # (3, 9) unit rows

    def recompose(self) -> np.ndarray:
        return recompose(self.intensity, self.direction)


def decompose(sh) -> ShDecomposition:
    """Split each channel's SH vector into its Euclidean norm and unit direction."""
    sh = np.asarray(sh, dtype=np.float64)
    intensity = np.linalg.norm(sh, axis=-1)
    if np.any(intensity <= 0.0):
        raise ValueError("cannot decompose an SH channel with zero norm")
    return ShDecomposition(intensity, sh / intensity[..., None])


def recompose(intensity, direction) -> np.ndarray:
    return np.asarray(intensity, dtype=np.float64)[..., None] * np.asarray(direction, dtype=np.float64)


def sh_to_json(sh) -> str:
    return json.dumps(np.asarray(sh, dtype=float).tolist())


def sh_from_json(text: str) -> np.ndarray:
    sh = np.asarray(json.loads(text), dtype=np.float64)
    if sh.shape != (3, N_COEFFS):
        raise ValueError(f"expected a 3x9 array, got {sh.shape}")
    return sh


def dc_light(level: float = 1.0) -> np.ndarray:
    """Uniform white light whose shading equals ``level`` for every normal."""
    sh = np.zeros((3, N_COEFFS))
    sh[:, 0] = level / C0
    return sh
