"""Per-scene inverse rendering of albedo and SH light.

The unknowns of a scene with N faces are

* ``log_intensity``: per-channel log of the SH norm, either one (3,) vector
  shared by every face or one row per face;
* ``direction``: (N, 3, 9) unit-norm SH directions, one per face and channel;
* ``alpha``: (N, K) whitened PCA albedo coefficients.

Face ``i`` is lit by ``gamma_i = exp(log_intensity) * direction_i`` and rendered
as ``W(A(alpha_i)) * (h . gamma_i)``. The objective is the weighted sum of
photometric, scene-consistency and (optionally) supervised SH / albedo L1
terms, plus a small squared-norm prior on ``alpha``. It is minimised with Adam;
directions are renormalised after every step. The step size is cosine-annealed so
the iterate settles instead of hovering at L1 kinks.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .albedo_model import PcaModel, project, synthesize
from .losses import (LossBreakdown, LossWeights, albedo_supervision, photometric_l1,
                     scene_consistency, sh_supervision, total_loss)
from .optim import Adam
from .rasterizer import GBuffer, warp, warp_matrix
from .sh_lighting import C0, N_COEFFS, eval_basis, shade

log = logging.getLogger(__name__)

# Gray-world assumption for the scene backdrop used by conditioned initialisation.
GRAY_WORLD_ALBEDO = 0.5


class FitDivergedError(RuntimeError):
    pass


@dataclass
class FaceObservation:
    image: np.ndarray                  # (H, W, 3) linear crop
    gbuffer: GBuffer
    gt_albedo_uv: np.ndarray | None = None
    gt_sh: np.ndarray | None = None    # (3, 9)
    name: str = ""


@dataclass
class SceneObservation:
    faces: list
    scene_image: np.ndarray | None = None
    background_mask: np.ndarray | None = None
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if not self.faces:
            raise ValueError("a scene needs at least one face")
        for f in self.faces:
            if f.image.shape[:2] != f.gbuffer.shape:
                raise ValueError(f"crop {f.name!r}: image and G-buffer shapes differ")


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-2
    iters: int = 500
    lr_final: float = 1e-2      # cosine-annealed end rate as a fraction of lr; 1 keeps lr constant
    beta1: float = 0.9
    beta2: float = 0.999
    weights: LossWeights = field(default_factory=LossWeights)
    share_intensity: bool = True
    use_scene_consistency: bool = True
    condition_init: bool = True
    seed: int = 0
    prior_weight: float = 1e-3

    def __post_init__(self):
        if self.lr <= 0 or self.iters < 0 or self.prior_weight < 0 or not 0 < self.lr_final <= 1:
            raise ValueError("invalid optimisation hyperparameters")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["weights"] = self.weights.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "OptimConfig":
        data = dict(data)
        if "weights" in data:
            data["weights"] = LossWeights(**data["weights"])
        return cls(**data)


@dataclass
class SceneVariables:
    log_intensity: np.ndarray   # (3,) when shared, else (N, 3)
    direction: np.ndarray       # (N, 3, 9)
    alpha: np.ndarray           # (N, K)

    @property
    def shared(self) -> bool:
        return self.log_intensity.ndim == 1

    @property
    def n_faces(self) -> int:
        return len(self.direction)

    def intensity(self) -> np.ndarray:
        """Per-face per-channel intensity, shape (N, 3)."""
        li = self.log_intensity if not self.shared else np.broadcast_to(self.log_intensity, (self.n_faces, 3))
        return np.exp(li)

    def gammas(self) -> np.ndarray:
        return self.intensity()[..., None] * self.direction

    def copy(self) -> "SceneVariables":
        return SceneVariables(self.log_intensity.copy(), self.direction.copy(), self.alpha.copy())

    def params(self) -> dict:
        return {"log_intensity": self.log_intensity, "direction": self.direction, "alpha": self.alpha}

    @classmethod
    def from_params(cls, p: dict) -> "SceneVariables":
        return cls(p["log_intensity"], p["direction"], p["alpha"])

    def to_dict(self) -> dict:
        return {
            "shared_intensity": self.shared,
            "intensity": self.intensity().tolist(),
            "log_intensity": self.log_intensity.tolist(),
            "direction": self.direction.tolist(),
            "alpha": self.alpha.tolist(),
            "sh": self.gammas().tolist(),
        }


class FaceOperator:
    """Everything about one crop that stays fixed during a fit.

    Pixels are the masked pixels of the G-buffer in ``np.flatnonzero`` order.
    The warped model is ``a0 + B @ alpha`` with ``B`` of shape (P * 3, K).
    """

    def __init__(self, face: FaceObservation, model: PcaModel):
        g = face.gbuffer
        if not g.mask.any():
            raise ValueError(f"crop {face.name!r} has an empty face mask")
        d = model.d
        W = warp_matrix(g, d)
        P, K = W.shape[0], model.n_components
        self.n_pixels = P
        self.observed = face.image[g.mask]
        self.H = eval_basis(g.normal[g.mask])
        self.a0 = W @ model.mean.reshape(d * d, 3)
        scaled = (model.basis * model.scale).reshape(d * d, 3, K)
        B = np.empty((P, 3, K))
        for c in range(3):
            B[:, c, :] = W @ scaled[:, c, :]
        self.B = B.reshape(P * 3, K)
        self.gt_albedo = None
        if face.gt_albedo_uv is not None:
            gt = np.asarray(face.gt_albedo_uv, dtype=np.float64)
            self.gt_albedo = W @ gt.reshape(d * d, 3)
        self.gt_sh = None if face.gt_sh is None else np.asarray(face.gt_sh, dtype=np.float64)

    def albedo(self, alpha) -> np.ndarray:
        return self.a0 + (self.B @ alpha).reshape(self.n_pixels, 3)

    def shading(self, gamma) -> np.ndarray:
        return self.H @ gamma.T


@dataclass
class Evaluation:
    objective: float
    breakdown: LossBreakdown
    prior: float
    grads: dict
    permutation: np.ndarray


def evaluate_scene(ops, variables: SceneVariables, cfg: OptimConfig, permutation=None, rng=None) -> Evaluation:
    """Objective value and gradients w.r.t. every variable block."""
    w = cfg.weights
    n = len(ops)
    intensity = variables.intensity()
    gammas = intensity[..., None] * variables.direction
    g_gamma = np.zeros_like(gammas)
    g_alpha = np.zeros_like(variables.alpha)
    parts = {"pho": 0.0, "sc": 0.0, "sh": 0.0, "alb": 0.0}
    supervised = w.supervised
    for i, op in enumerate(ops):
        A = op.albedo(variables.alpha[i])
        S = op.shading(gammas[i])
        pho, gR = photometric_l1(op.observed, A * S)
        parts["pho"] += pho / n
        gA = w.pho / n * gR * S
        gS = w.pho / n * gR * A
        if supervised and op.gt_albedo is not None and w.alb > 0:
            alb, gA_sup = albedo_supervision(A, op.gt_albedo)
            parts["alb"] += alb / n
            gA = gA + w.alb / n * gA_sup
        if supervised and op.gt_sh is not None and w.sh > 0:
            shl, g_sh = sh_supervision(gammas[i], op.gt_sh)
            parts["sh"] += shl / n
            g_gamma[i] += w.sh / n * g_sh
        g_alpha[i] = op.B.T @ gA.ravel()
        g_gamma[i] += gS.T @ op.H
    if cfg.use_scene_consistency and n > 1:
        sc, g_sc, permutation = scene_consistency(gammas, permutation, rng)
        parts["sc"] = sc
        g_gamma += w.sc * g_sc
    elif permutation is None:
        permutation = np.arange(n)
    breakdown = total_loss(parts, w)
    prior = cfg.prior_weight * float(np.sum(variables.alpha**2))
    g_alpha += 2.0 * cfg.prior_weight * variables.alpha

    g_direction = intensity[..., None] * g_gamma
    g_li = intensity * np.sum(variables.direction * g_gamma, axis=-1)
    if variables.shared:
        g_li = g_li.sum(axis=0)
    grads = {"log_intensity": g_li, "direction": g_direction, "alpha": g_alpha}
    breakdown.grads = grads
    return Evaluation(breakdown.total + prior, breakdown, prior, grads, np.asarray(permutation))


def estimate_scene_intensity(obs: SceneObservation) -> np.ndarray | None:
    """Gray-world per-channel intensity from the scene backdrop, or None without a scene image."""
    if obs.scene_image is None:
        return None
    mask = obs.background_mask
    if mask is None:
        mask = np.ones(obs.scene_image.shape[:2], dtype=bool)
    if not mask.any():
        return None
    mean = obs.scene_image[mask].mean(axis=0)
    return np.maximum(mean, 1e-4) / (GRAY_WORLD_ALBEDO * C0)


def init_scene(obs: SceneObservation, model: PcaModel, cfg: OptimConfig) -> SceneVariables:
    n = len(obs.faces)
    intensity = np.ones(3)
    if cfg.condition_init:
        est = estimate_scene_intensity(obs)
        if est is not None:
            intensity = est
    li = np.log(intensity)
    if not cfg.share_intensity:
        li = np.tile(li, (n, 1))
    direction = np.zeros((n, 3, N_COEFFS))
    direction[:, :, 0] = 1.0
    return SceneVariables(li, direction, np.zeros((n, model.n_components)))


def _normalise_directions(direction):
    norm = np.linalg.norm(direction, axis=-1, keepdims=True)
    return direction / np.where(norm > 0, norm, 1.0)


@dataclass
class FitResult:
    variables: SceneVariables | None
    breakdown: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    name: str = ""
    error: str | None = None


def learning_rate(cfg: OptimConfig, it: int) -> float:
    """Cosine schedule from ``cfg.lr`` down to ``cfg.lr * cfg.lr_final``."""
    if cfg.iters <= 1:
        return cfg.lr
    frac = 0.5 * (1.0 + np.cos(np.pi * it / (cfg.iters - 1)))
    return cfg.lr * (cfg.lr_final + (1.0 - cfg.lr_final) * frac)


def fit_scene(obs: SceneObservation, model: PcaModel, cfg: OptimConfig, init: SceneVariables | None = None) -> FitResult:
    """Minimise the scene objective from ``init`` (default :func:`init_scene`)."""
    ops = [FaceOperator(f, model) for f in obs.faces]
    variables = (init or init_scene(obs, model, cfg)).copy()
    rng = np.random.default_rng([cfg.seed, obs.seed])
    params = variables.params()
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2)
    trace = []
    for it in range(cfg.iters):
        opt.lr = learning_rate(cfg, it)
        ev = evaluate_scene(ops, SceneVariables.from_params(params), cfg, rng=rng)
        if not np.isfinite(ev.objective) or not all(np.all(np.isfinite(g)) for g in ev.grads.values()):
            raise FitDivergedError(
                f"scene {obs.name!r}: non-finite objective at iteration {it} "
                f"(last objective {trace[-1]['objective'] if trace else 'n/a'}, lr={cfg.lr})")
        trace.append({"objective": ev.objective, "prior": ev.prior, **ev.breakdown.to_dict()})
        opt.step(params, ev.grads)
        params["direction"] = _normalise_directions(params["direction"])
    variables = SceneVariables.from_params(params)
    final = evaluate_scene(ops, variables, cfg, rng=np.random.default_rng([cfg.seed, obs.seed, 1]))
    breakdown = {"objective": final.objective, "prior": final.prior, **final.breakdown.to_dict()}
    return FitResult(variables, breakdown, trace, obs.name)


def predicted_albedo(model: PcaModel, variables: SceneVariables) -> list[np.ndarray]:
    """UV albedo maps of every face, clamped to [0, 1]."""
    return [np.clip(synthesize(model, a), 0.0, 1.0) for a in variables.alpha]


# Worker-process state for fit_batch.
_WORKER_MODEL = None


def _init_worker(model):
    global _WORKER_MODEL
    _WORKER_MODEL = model


def _fit_one(args):
    obs, cfg = args
    return _safe_fit(obs, _WORKER_MODEL, cfg)


def _safe_fit(obs, model, cfg):
    try:
        return fit_scene(obs, model, cfg)
    except Exception as exc:  # collected per scene; the batch continues
        log.error("fit of scene %r failed: %s", obs.name, exc)
        return FitResult(None, name=obs.name, error=f"{type(exc).__name__}: {exc}")


def fit_batch(scenes, model: PcaModel, cfg: OptimConfig, parallelism: int = 1) -> list[FitResult]:
    """Fit independent scenes, optionally across worker processes.

    Each scene draws its randomness from ``(cfg.seed, scene.seed)`` only, so
    results do not depend on ``parallelism``. Failures are returned as results
    with ``error`` set.
    """
    scenes = list(scenes)
    if not scenes:
        return []
    if parallelism <= 1 or len(scenes) == 1:
        return [_safe_fit(s, model, cfg) for s in scenes]
    with ProcessPoolExecutor(max_workers=parallelism, initializer=_init_worker, initargs=(model,)) as ex:
        return list(ex.map(_fit_one, [(s, cfg) for s in scenes]))


def photometric_objective(face: FaceObservation, albedo_img, sh) -> float:
    """Crop-only photometric L1 of a free (non-parametric) albedo image under ``sh``."""
    g = face.gbuffer
    rendered = np.asarray(albedo_img) * shade(g.normal, sh, g.mask)
    return photometric_l1(face.image, rendered, g.mask)[0]


@dataclass
class AmbiguityReport:
    scale: float
    mode: str
    loss_original: float
    loss_scaled: float
    difference: float
    projection_residual: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def demonstrate_ambiguity(face: FaceObservation, sh, scale: float, *, albedo_img=None,
                          model: PcaModel | None = None, alpha=None) -> AmbiguityReport:
    """Compare the photometric loss of a solution with its light-scaled counterpart.

    Free-albedo mode (``albedo_img`` given) pairs ``(I_A, sh)`` with
    ``(I_A / scale, scale * sh)``. PCA mode (``model`` and ``alpha`` given)
    projects the scaled UV map back into the model, so the two losses differ by
    the effect of the projection residual.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    sh = np.asarray(sh, dtype=np.float64)
    if albedo_img is not None:
        base = photometric_objective(face, albedo_img, sh)
        scaled = photometric_objective(face, np.asarray(albedo_img) / scale, scale * sh)
        return AmbiguityReport(scale, "free", base, scaled, abs(scaled - base))
    if model is None or alpha is None:
        raise ValueError("give either albedo_img or (model, alpha)")
    uv = synthesize(model, alpha)
    alpha_s = project(model, uv / scale)
    uv_s = synthesize(model, alpha_s)
    residual = float(np.linalg.norm(uv_s - uv / scale))
    base = photometric_objective(face, warp(uv, face.gbuffer), sh)
    scaled = photometric_objective(face, warp(uv_s, face.gbuffer), scale * sh)
    return AmbiguityReport(scale, "pca", base, scaled, abs(scaled - base), residual)


def with_flags(cfg: OptimConfig, **kw) -> OptimConfig:
    weights = kw.pop("weights", None)
    cfg = replace(cfg, **kw)
    return replace(cfg, weights=weights) if weights is not None else cfg
