"""Linear (PCA) albedo model over d x d x 3 UV maps.

Coefficients are whitened: ``A(alpha) = mean + basis @ (sqrt(eigenvalues) * alpha)``,
so a squared-norm prior on ``alpha`` is a Mahalanobis prior on the map.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .io import read_json, write_json

LAYOUT = "row-major (d, d, 3), channel-last, linear RGB"


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray          # (D,) with D = d * d * 3
    basis: np.ndarray         # (D, K) orthonormal columns
    eigenvalues: np.ndarray   # (K,) descending
    d: int
    explained_variance_ratio: np.ndarray = field(default=None)
    whitened: bool = True

    @property
    def n_components(self) -> int:
        return self.basis.shape[1]

    @property
    def scale(self) -> np.ndarray:
        """Per-component factor mapping coefficients to basis weights."""
        if not self.whitened:
            return np.ones(self.n_components)
        return np.sqrt(np.maximum(self.eigenvalues, 0.0))


def _as_matrix(samples):
    shapes = {np.shape(s) for s in samples}
    if len(shapes) != 1:
        raise ValueError(f"samples have non-uniform shapes: {sorted(shapes)}")
    shape = shapes.pop()
    if len(shape) != 3 or shape[0] != shape[1] or shape[2] != 3:
        raise ValueError(f"samples must be d x d x 3 maps, got {shape}")
    return np.stack([np.asarray(s, dtype=np.float64).ravel() for s in samples]), shape[0]


def fit_pca(samples, n_components: int, whitened: bool = True) -> PcaModel:
    """Mean and leading principal directions of a set of UV albedo maps."""
    samples = list(samples)
    if len(samples) < n_components + 1:
        raise ValueError(f"need at least {n_components + 1} samples for {n_components} components, got {len(samples)}")
    X, d = _as_matrix(samples)
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    eig = s**2 / (X.shape[0] - 1)
    # Sign convention: largest-magnitude entry of each component is positive.
    basis = vt[:n_components].T
    flip = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(n_components)])
    basis = basis * np.where(flip == 0, 1.0, flip)
    total = eig.sum()
    ratio = eig[:n_components] / total if total > 0 else np.zeros(n_components)
    return PcaModel(mean, basis, eig[:n_components], d, ratio, whitened)


def synthesize(model: PcaModel, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (model.n_components,):
        raise ValueError(f"expected {model.n_components} coefficients, got shape {alpha.shape}")
    flat = model.mean + model.basis @ (model.scale * alpha)
    return flat.reshape(model.d, model.d, 3)


def project(model: PcaModel, uv_map) -> np.ndarray:
    """Least-squares coefficients of ``uv_map`` in the model span."""
    uv_map = np.asarray(uv_map, dtype=np.float64)
    if uv_map.shape != (model.d, model.d, 3):
        raise ValueError(f"map shape {uv_map.shape} does not match model resolution {model.d}")
    w = model.basis.T @ (uv_map.ravel() - model.mean)
    scale = model.scale
    return np.divide(w, scale, out=np.zeros_like(w), where=scale > 0)


def save_model(model: PcaModel, path, extra: dict | None = None) -> None:
    """Write ``<path>.json`` header and ``<path>.bin`` float32 blobs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blobs = [("mean", model.mean), ("basis", model.basis), ("eigenvalues", model.eigenvalues)]
    offsets, chunks, pos = {}, [], 0
    for name, arr in blobs:
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        offsets[name] = {"offset": pos, "nbytes": len(raw), "shape": list(arr.shape)}
        chunks.append(raw)
        pos += len(raw)
    bin_path = path.with_suffix(".bin")
    bin_path.write_bytes(b"".join(chunks))
    header = {
        "format": "pca-albedo-model",
        "version": __version__,
        "d": model.d,
        "n_components": model.n_components,
        "ordering": LAYOUT,
        "whitened": model.whitened,
        "dtype": "float32",
        "byteorder": "little",
        "blob": bin_path.name,
        "arrays": offsets,
        "explained_variance_ratio": [float(v) for v in model.explained_variance_ratio],
    }
    if extra:
        header.update(extra)
    write_json(path.with_suffix(".json"), header)


def load_model(path) -> PcaModel:
    """Read a model written by :func:`save_model`.

    The float32 basis is re-orthonormalised so that projection and synthesis
    remain exact inverses after the storage round trip.
    """
    path = Path(path)
    header = read_json(path.with_suffix(".json"))
    raw = (path.parent / header["blob"]).read_bytes()

    def blob(name):
        info = header["arrays"][name]
        arr = np.frombuffer(raw, dtype="<f4", count=info["nbytes"] // 4, offset=info["offset"])
        return arr.reshape(info["shape"]).astype(np.float64)

    basis = blob("basis")
    q, r = np.linalg.qr(basis)
    q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    return PcaModel(
        blob("mean"), q, blob("eigenvalues"), int(header["d"]),
        np.asarray(header["explained_variance_ratio"]), bool(header["whitened"]),
    )
