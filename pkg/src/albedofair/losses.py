"""Fitting objectives and their analytic gradients.

All L1 terms are means over their elements (masked pixels x channels, or SH
coefficients) so the weights do not depend on resolution. The subgradient of
``|x|`` at 0 is taken as 0. Every loss returns ``(value, gradient)`` where the
gradient is with respect to the estimate argument.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class LossWeights:
    pho: float = 10.0
    sc: float = 10.0
    sh: float = 20.0
    alb: float = 20.0
    supervised: bool = True

    def __post_init__(self):
        for name in ("pho", "sc", "sh", "alb"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossBreakdown:
    total: float
    pho: float = 0.0
    sc: float = 0.0
    sh: float = 0.0
    alb: float = 0.0
    grads: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("total", "pho", "sc", "sh", "alb")}


def _masked_l1(target, estimate, mask):
    target = np.asarray(target, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if target.shape != estimate.shape:
        raise ValueError(f"shape mismatch {target.shape} vs {estimate.shape}")
    if mask is None:
        mask = np.ones(target.shape[:-1], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum()) * target.shape[-1]
    if count == 0:
        raise ValueError("loss mask is empty")
    resid = np.where(mask[..., None], estimate - target, 0.0)
    return float(np.abs(resid).sum() / count), np.sign(resid) / count


def photometric_l1(observed, rendered, mask=None):
    """Mean ``|I - I_R|`` over masked pixels and channels; gradient w.r.t. ``rendered``."""
    return _masked_l1(observed, rendered, mask)


def albedo_supervision(pred, gt, mask=None):
    """Mean L1 between rendered albedo images; gradient w.r.t. ``pred``."""
    return _masked_l1(gt, pred, mask)


def sh_supervision(est, gt):
    """Mean absolute SH coefficient difference; gradient w.r.t. ``est``."""
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {gt.shape}")
    diff = est - gt
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


def sample_permutation(n: int, rng) -> np.ndarray:
    """Uniform random permutation of ``range(n)``, restricted to derangements for n >= 2."""
    if n < 2:
        return np.arange(n)
    while True:
        perm = rng.permutation(n)
        if np.all(perm != np.arange(n)):
            return perm


def scene_consistency(gammas, permutation=None, rng=None):
    """Mean L1 between each face's SH vector and the one it is paired with by a permutation.

    ``gammas`` has shape (N, 3, 9). Pass an explicit ``permutation`` or an
    ``rng`` to draw one. Returns ``(value, gradient, permutation)``.
    """
    gammas = np.asarray(gammas, dtype=np.float64)
    n = len(gammas)
    if permutation is None:
        permutation = sample_permutation(n, rng if rng is not None else np.random.default_rng())
    permutation = np.asarray(permutation)
    if n < 2:
        return 0.0, np.zeros_like(gammas), permutation
    diff = gammas[permutation] - gammas
    s = np.sign(diff) / diff.size
    grad = -s
    np.add.at(grad, permutation, s)
    return float(np.abs(diff).mean()), grad, permutation


def total_loss(parts: dict, w: LossWeights) -> LossBreakdown:
    """Weighted sum of the four terms; the supervised pair is gated by ``w.supervised``."""
    ind = 1.0 if w.supervised else 0.0
    vals = {k: float(parts.get(k, 0.0)) for k in ("pho", "sc", "sh", "alb")}
    total = (w.pho * vals["pho"] + w.sc * vals["sc"]
             + ind * w.sh * vals["sh"] + ind * w.alb * vals["alb"])
    return LossBreakdown(total=total, **vals)
