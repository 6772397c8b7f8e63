"""Z-buffered triangle rasterizer with a weak-perspective camera, and the UV warp.

Screen convention: pixel centres at ``(col + 0.5, row + 0.5)``. A camera-space
point ``p = R @ x`` projects to ``col = s * p_x + t_x``, ``row = -s * p_y + t_y``.
Larger camera-space z is closer to the viewer. Texel lookup uses
``col = u * d - 0.5``, ``row = v * d - 0.5`` with clamp-to-edge.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .geometry import Mesh
from .io import read_json, write_json


@dataclass(frozen=True)
class WeakPerspectiveCamera:
    scale: float
    translation: np.ndarray = field(default_factory=lambda: np.zeros(2))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("camera scale must be positive")
        r = np.asarray(self.rotation, dtype=np.float64)
        if r.shape != (3, 3) or not np.allclose(r.T @ r, np.eye(3), atol=1e-8):
            raise ValueError("camera rotation must be a 3x3 orthonormal matrix")

    def project(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Screen xy (n, 2) and camera-space depth (n,) of model-space points."""
        p = np.asarray(points, dtype=np.float64) @ np.asarray(self.rotation).T
        xy = np.stack([self.scale * p[:, 0] + self.translation[0],
                       -self.scale * p[:, 1] + self.translation[1]], axis=-1)
        return xy, p[:, 2]

    def to_dict(self) -> dict:
        return {"scale": float(self.scale), "translation": np.asarray(self.translation, float).tolist(),
                "rotation": np.asarray(self.rotation, float).tolist()}

    @classmethod
    def from_dict(cls, data) -> "WeakPerspectiveCamera":
        return cls(float(data["scale"]), np.asarray(data["translation"], float), np.asarray(data["rotation"], float))


def rotation_matrix(yaw: float = 0.0, pitch: float = 0.0, roll: float = 0.0) -> np.ndarray:
    """Rotation about y (yaw), then x (pitch), then z (roll); angles in radians."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return rz @ rx @ ry


@dataclass
class GBuffer:
    normal: np.ndarray   # (H, W, 3) camera space, unit on mask
    uv: np.ndarray       # (H, W, 2)
    mask: np.ndarray     # (H, W) bool
    depth: np.ndarray    # (H, W), -inf off mask
    degenerate: int = 0  # zero-area triangles skipped

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


def rasterize(mesh: Mesh, camera: WeakPerspectiveCamera, width: int, height: int) -> GBuffer:
    """Rasterize ``mesh`` into per-pixel normals, UVs, coverage and depth.

    Depth ties go to the lower triangle index, so the output does not depend on
    the order triangles are visited in.
    """
    depth = np.full((height, width), -np.inf)
    tri_id = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    degenerate = 0
    if len(mesh.faces):
        xy, z = camera.project(mesh.vertices)
        for t, (i0, i1, i2) in enumerate(mesh.faces):
            p0, p1, p2 = xy[i0], xy[i1], xy[i2]
            area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
            if abs(area) < 1e-12:
                degenerate += 1
                continue
            lo = np.floor(np.minimum(np.minimum(p0, p1), p2) - 0.5).astype(int)
            hi = np.ceil(np.maximum(np.maximum(p0, p1), p2) - 0.5).astype(int)
            c0, r0 = max(lo[0], 0), max(lo[1], 0)
            c1, r1 = min(hi[0], width - 1), min(hi[1], height - 1)
            if c0 > c1 or r0 > r1:
                continue
            px, py = np.meshgrid(np.arange(c0, c1 + 1) + 0.5, np.arange(r0, r1 + 1) + 0.5)
            w0 = ((p1[0] - px) * (p2[1] - py) - (p1[1] - py) * (p2[0] - px)) / area
            w1 = ((p2[0] - px) * (p0[1] - py) - (p2[1] - py) * (p0[0] - px)) / area
            w2 = 1.0 - w0 - w1
            inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
            if not inside.any():
                continue
            zt = w0 * z[i0] + w1 * z[i1] + w2 * z[i2]
            win = depth[r0:r1 + 1, c0:c1 + 1]
            ids = tri_id[r0:r1 + 1, c0:c1 + 1]
            closer = inside & ((zt > win) | ((zt == win) & ((ids < 0) | (t < ids))))
            win[closer] = zt[closer]
            ids[closer] = t
            bary[r0:r1 + 1, c0:c1 + 1][closer] = np.stack([w0, w1, w2], axis=-1)[closer]

    mask = tri_id >= 0
    normal = np.zeros((height, width, 3))
    uv = np.zeros((height, width, 2))
    if mask.any():
        corners = mesh.faces[tri_id[mask]]
        b = bary[mask]
        n_cam = mesh.normals @ np.asarray(camera.rotation).T
        n = np.einsum("pk,pkc->pc", b, n_cam[corners])
        normal[mask] = n / np.linalg.norm(n, axis=1, keepdims=True)
        uv[mask] = np.einsum("pk,pkc->pc", b, mesh.uvs[corners])
    return GBuffer(normal, uv, mask, depth, degenerate)


def _bilinear_taps(uv, d):
    """Four (index, weight) taps per UV sample into a flattened d x d grid."""
    x = uv[:, 0] * d - 0.5
    y = uv[:, 1] * d - 0.5
    x0, y0 = np.floor(x), np.floor(y)
    fx, fy = x - x0, y - y0
    x0, y0 = x0.astype(np.int64), y0.astype(np.int64)
    taps = []
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            col = np.clip(x0 + dx, 0, d - 1)
            row = np.clip(y0 + dy, 0, d - 1)
            taps.append((row * d + col, wy * wx))
    return taps


def warp_matrix(g: GBuffer, d: int) -> sparse.csr_matrix:
    """Sparse operator mapping a flattened d x d channel to the masked pixels of ``g``.

    Rows follow ``np.flatnonzero(g.mask)`` order.
    """
    uv = g.uv[g.mask]
    n = len(uv)
    rows = np.repeat(np.arange(n), 4)
    taps = _bilinear_taps(uv, d)
    cols = np.stack([t[0] for t in taps], axis=1).ravel()
    vals = np.stack([t[1] for t in taps], axis=1).ravel()
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, d * d))


def warp(albedo_uv, g: GBuffer) -> np.ndarray:
    """Albedo image in camera space: bilinear lookup of the UV map at the G-buffer's UVs."""
    albedo_uv = np.asarray(albedo_uv, dtype=np.float64)
    d = albedo_uv.shape[0]
    out = np.zeros(g.mask.shape + (albedo_uv.shape[2],))
    if g.mask.any():
        out[g.mask] = warp_matrix(g, d) @ albedo_uv.reshape(d * d, -1)
    return out


def save_gbuffer(path, g: GBuffer) -> None:
    """Raw float32 planes (normal xyz, uv, mask, depth) plus a JSON header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    depth = np.where(g.mask, g.depth, 0.0)
    planes = np.concatenate([g.normal, g.uv, g.mask[..., None].astype(float), depth[..., None]], axis=-1)
    path.write_bytes(np.ascontiguousarray(np.moveaxis(planes, -1, 0), dtype="<f4").tobytes())
    write_json(path.with_suffix(".json"), {
        "format": "gbuffer", "dtype": "float32", "byteorder": "little",
        "height": int(g.mask.shape[0]), "width": int(g.mask.shape[1]),
        "planes": ["normal_x", "normal_y", "normal_z", "u", "v", "mask", "depth"],
        "degenerate": int(g.degenerate),
    })


def load_gbuffer(path) -> GBuffer:
    path = Path(path)
    header = read_json(path.with_suffix(".json"))
    h, w = header["height"], header["width"]
    planes = np.frombuffer(path.read_bytes(), dtype="<f4").reshape(7, h, w).astype(np.float64)
    mask = planes[5] > 0.5
    normal = np.moveaxis(planes[0:3], 0, -1)
    n = np.linalg.norm(normal, axis=-1, keepdims=True)
    normal = np.where(mask[..., None], normal / np.where(n > 0, n, 1.0), 0.0)
    depth = np.where(mask, planes[6], -np.inf)
    return GBuffer(normal, np.moveaxis(planes[3:5], 0, -1), mask, depth, int(header.get("degenerate", 0)))
