"""Meshes, the bundled head geometry and its UV layout.

UV layout (shared by the head and the sphere fallback): a direction with
longitude ``phi = atan2(x, z)`` and latitude ``theta = asin(y)`` maps to
``u = 0.5 + phi / (2 pi)``, ``v = 0.5 - theta / pi``. The face looks down +z,
so it sits in the centre of the UV map with the forehead towards v = 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray   # (n, 3)
    normals: np.ndarray    # (n, 3) unit
    uvs: np.ndarray        # (n, 2) in [0, 1]
    faces: np.ndarray      # (m, 3) int

    def __post_init__(self):
        n = len(self.vertices)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise ValueError("face index out of range")
        if len(self.normals) != n or len(self.uvs) != n:
            raise ValueError("vertices, normals and uvs must have the same length")

    @classmethod
    def empty(cls) -> "Mesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 2)), np.zeros((0, 3), dtype=np.int64))


def vertex_normals(vertices, faces) -> np.ndarray:
    """Area-weighted average of incident face normals."""
    v = np.asarray(vertices, dtype=np.float64)
    tri = v[faces]
    fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    out = np.zeros_like(v)
    for k in range(3):
        np.add.at(out, faces[:, k], fn)
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    return out / np.where(norm > 0, norm, 1.0)


def _latlon_grid(n_lat, n_lon):
    theta = np.linspace(np.pi / 2, -np.pi / 2, n_lat + 1)       # top to bottom
    phi = np.linspace(-np.pi, np.pi, n_lon + 1)                 # seam duplicated
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    uv = np.stack([0.5 + ph / (2 * np.pi), 0.5 - th / np.pi], axis=-1)
    faces = []
    cols = n_lon + 1
    for i in range(n_lat):
        for j in range(n_lon):
            a, b = i * cols + j, i * cols + j + 1
            c, d = (i + 1) * cols + j, (i + 1) * cols + j + 1
            faces.append((a, c, b))
            faces.append((b, c, d))
    return th.ravel(), ph.ravel(), uv.reshape(-1, 2), np.asarray(faces, dtype=np.int64)


def uv_sphere(n_lat: int = 24, n_lon: int = 32) -> Mesh:
    """Unit sphere with the shared UV layout. Pole rows contain degenerate triangles."""
    th, ph, uv, faces = _latlon_grid(n_lat, n_lon)
    v = np.stack([np.cos(th) * np.sin(ph), np.sin(th), np.cos(th) * np.cos(ph)], axis=-1)
    return Mesh(v, v.copy(), uv, faces)


def head_mesh(n_lat: int = 32, n_lon: int = 48) -> Mesh:
    """Low-poly parametric head: an ellipsoid with nose, brow ridge and chin."""
    th, ph, uv, faces = _latlon_grid(n_lat, n_lon)
    w = np.stack([np.cos(th) * np.sin(ph), np.sin(th), np.cos(th) * np.cos(ph)], axis=-1)
    v = w * np.array([0.78, 1.0, 0.88])
    nose = 0.13 * np.exp(-(ph / 0.16) ** 2 - ((th + 0.05) / 0.18) ** 2)
    brow = 0.03 * np.exp(-(ph / 0.45) ** 2 - ((th - 0.28) / 0.07) ** 2)
    chin = 0.04 * np.exp(-(ph / 0.3) ** 2 - ((th + 0.75) / 0.15) ** 2)
    v[:, 2] += nose + brow + chin
    return Mesh(v, vertex_normals(v, faces), uv, faces)


# Facial feature regions in UV: (u centre, v centre, u radius, v radius).
FEATURES = {
    "eye_left": (0.44, 0.445, 0.028, 0.016),
    "eye_right": (0.56, 0.445, 0.028, 0.016),
    "brow_left": (0.44, 0.405, 0.036, 0.009),
    "brow_right": (0.56, 0.405, 0.036, 0.009),
    "lips": (0.5, 0.645, 0.045, 0.016),
}
FACE_REGION = (0.5, 0.5, 0.13, 0.21)


def uv_grid(d: int):
    """Texel-centre UV coordinates of a d x d map, as (u, v) arrays."""
    c = (np.arange(d) + 0.5) / d
    v, u = np.meshgrid(c, c, indexing="ij")
    return u, v


def ellipse(u, v, region) -> np.ndarray:
    cu, cv, ru, rv = region
    return ((u - cu) / ru) ** 2 + ((v - cv) / rv) ** 2 <= 1.0


def skin_mask(d: int) -> np.ndarray:
    """Frontal skin region of the UV layout, excluding eyes, brows and lips."""
    u, v = uv_grid(d)
    mask = ellipse(u, v, FACE_REGION)
    for region in FEATURES.values():
        mask &= ~ellipse(u, v, _grow(region, 1.3))
    return mask


def _grow(region, factor):
    cu, cv, ru, rv = region
    return cu, cv, ru * factor, rv * factor


def write_obj(path, mesh: Mesh) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"vt {u:.9g} {v:.9g}" for u, v in mesh.uvs]
    lines += [f"vn {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.normals]
    lines += ["f " + " ".join(f"{i + 1}/{i + 1}/{i + 1}" for i in f) for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path) -> Mesh:
    """Read the v / vt / vn / f subset of Wavefront OBJ.

    Corners with distinct (v, vt, vn) triplets become distinct vertices.
    Polygons are fan-triangulated. Missing normals are recomputed.
    """
    pos, tex, nrm, corners = [], [], [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "v":
            pos.append([float(p) for p in parts[1:4]])
        elif tag == "vt":
            tex.append([float(p) for p in parts[1:3]])
        elif tag == "vn":
            nrm.append([float(p) for p in parts[1:4]])
        elif tag == "f":
            poly = []
            for token in parts[1:]:
                idx = (token.split("/") + ["", ""])[:3]
                poly.append(tuple(int(i) - 1 if i else -1 for i in idx))
            for k in range(1, len(poly) - 1):
                corners.append((poly[0], poly[k], poly[k + 1]))
    lookup, vertices, uvs, normals, faces = {}, [], [], [], []
    for tri in corners:
        face = []
        for key in tri:
            if key not in lookup:
                lookup[key] = len(vertices)
                vi, ti, ni = key
                vertices.append(pos[vi])
                uvs.append(tex[ti] if ti >= 0 else [0.0, 0.0])
                normals.append(nrm[ni] if ni >= 0 else [np.nan] * 3)
            face.append(lookup[key])
        faces.append(face)
    if not faces:
        return Mesh.empty()
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    normals = np.asarray(normals, dtype=np.float64)
    if np.isnan(normals).any():
        normals = vertex_normals(vertices, faces)
    else:
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return Mesh(vertices, normals, np.asarray(uvs, dtype=np.float64), faces)
