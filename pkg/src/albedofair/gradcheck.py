"""Central finite-difference validation of every analytic gradient.

Points are drawn away from L1 kinks: every residual entering an absolute
value is at least ``KINK_GUARD`` from zero, so a step of ``STEP`` never
crosses a kink.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .albedo_model import fit_pca
from .geometry import uv_sphere
from .inverse_renderer import (FaceObservation, FaceOperator, OptimConfig, SceneObservation,
                               SceneVariables, evaluate_scene)
from .losses import albedo_supervision, photometric_l1, scene_consistency, sh_supervision
from .rasterizer import WeakPerspectiveCamera, rasterize, rotation_matrix
from .sh_lighting import N_COEFFS

STEP = 1e-6
KINK_GUARD = 1e-3
TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    point: int
    rel_error: float

    @property
    def passed(self) -> bool:
        return self.rel_error < TOLERANCE


def rel_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def numeric_grad(f, x, h=STEP) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def _away_from_zero(rng, shape, scale=1.0):
    x = rng.uniform(KINK_GUARD * 5, scale, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def random_scene(rng, n_faces=3, d=8, size=10, n_components=4, supervised=True):
    """Tiny scene (sphere heads, random PCA model) for gradient checks and tests."""
    maps = [rng.uniform(0.1, 0.9, size=(d, d, 3)) for _ in range(n_components + 2)]
    model = fit_pca(maps, n_components)
    mesh = uv_sphere(8, 12)
    faces = []
    for k in range(n_faces):
        cam = WeakPerspectiveCamera(0.45 * size, np.array([size / 2, size / 2]),
                                    rotation_matrix(rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2)))
        g = rasterize(mesh, cam, size, size)
        img = rng.uniform(0.0, 1.0, size=(size, size, 3))
        gt = rng.uniform(0.1, 0.9, size=(d, d, 3)) if supervised else None
        sh = rng.standard_normal((3, N_COEFFS)) if supervised else None
        faces.append(FaceObservation(img, g, gt, sh, f"f{k}"))
    return SceneObservation(faces, seed=int(rng.integers(1 << 30))), model


def _scene_point(rng, ops, n, K, shared):
    li = rng.uniform(-0.3, 0.6, size=(3,) if shared else (n, 3))
    direction = rng.standard_normal((n, 3, N_COEFFS))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    alpha = rng.standard_normal((n, K))
    return SceneVariables(li, direction, alpha)


def _kink_free(ops, v: SceneVariables, perm) -> bool:
    gam = v.gammas()
    for i, op in enumerate(ops):
        A = op.albedo(v.alpha[i])
        if np.min(np.abs(op.observed - A * op.shading(gam[i]))) < KINK_GUARD:
            return False
        if op.gt_albedo is not None and np.min(np.abs(A - op.gt_albedo)) < KINK_GUARD:
            return False
        if op.gt_sh is not None and np.min(np.abs(gam[i] - op.gt_sh)) < KINK_GUARD:
            return False
    return len(ops) < 2 or np.min(np.abs(gam[perm] - gam)) >= KINK_GUARD


def check_scene_objective(rng, n_points, shared=True, corrupt=False):
    obs, model = random_scene(rng)
    cfg = OptimConfig(share_intensity=shared)
    ops = [FaceOperator(f, model) for f in obs.faces]
    n, K = len(ops), model.n_components
    perm = np.roll(np.arange(n), 1)
    results, point = [], 0
    while point < n_points:
        v = _scene_point(rng, ops, n, K, shared)
        if not _kink_free(ops, v, perm):
            continue
        ev = evaluate_scene(ops, v, cfg, permutation=perm)
        for block in ("log_intensity", "direction", "alpha"):
            def f(x, block=block):
                p = v.copy().params()
                p[block] = x
                return evaluate_scene(ops, SceneVariables.from_params(p), cfg, permutation=perm).objective
            analytic = ev.grads[block] * (1.01 if corrupt else 1.0)
            num = numeric_grad(f, v.params()[block])
            tag = "shared" if shared else "per-face"
            results.append(CheckResult(f"scene[{tag}]/{block}", point, rel_error(analytic, num)))
        point += 1
    return results


def check_pixel_losses(rng, n_points, corrupt=False):
    out = []
    for name, fn in (("photometric_l1", photometric_l1), ("albedo_supervision", albedo_supervision)):
        for k in range(n_points):
            target = rng.uniform(0, 1, size=(6, 5, 3))
            est = target + _away_from_zero(rng, target.shape, 0.5)
            mask = rng.uniform(size=(6, 5)) < 0.7
            mask[0, 0] = True
            if fn is photometric_l1:
                val, g = fn(target, est, mask)
                f = lambda x: fn(target, x, mask)[0]
            else:
                val, g = fn(est, target, mask)
                f = lambda x: fn(x, target, mask)[0]
            out.append(CheckResult(name, k, rel_error(g * (1.01 if corrupt else 1.0), numeric_grad(f, est))))
    return out


def check_sh_losses(rng, n_points, corrupt=False):
    out = []
    for k in range(n_points):
        gt = rng.standard_normal((3, N_COEFFS))
        est = gt + _away_from_zero(rng, gt.shape)
        _, g = sh_supervision(est, gt)
        num = numeric_grad(lambda x: sh_supervision(x, gt)[0], est)
        out.append(CheckResult("sh_supervision", k, rel_error(g * (1.01 if corrupt else 1.0), num)))
    for k in range(n_points):
        n = int(rng.integers(2, 6))
        perm = np.roll(np.arange(n), int(rng.integers(1, n)))
        while True:
            gam = rng.standard_normal((n, 3, N_COEFFS))
            if np.min(np.abs(gam[perm] - gam)) >= KINK_GUARD:
                break
        _, g, _ = scene_consistency(gam, perm)
        num = numeric_grad(lambda x: scene_consistency(x, perm)[0], gam)
        out.append(CheckResult("scene_consistency", k, rel_error(g * (1.01 if corrupt else 1.0), num)))
    return out


def run_gradcheck(seed: int = 0, points_per_check: int = 20, corrupt: bool = False) -> list[CheckResult]:
    """All gradient checks; ``corrupt`` scales analytic gradients by 1.01 as a negative control."""
    rng = np.random.default_rng(seed)
    results = []
    results += check_pixel_losses(rng, points_per_check, corrupt)
    results += check_sh_losses(rng, points_per_check, corrupt)
    results += check_scene_objective(rng, points_per_check, shared=True, corrupt=corrupt)
    results += check_scene_objective(rng, points_per_check, shared=False, corrupt=corrupt)
    return results
