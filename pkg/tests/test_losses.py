import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from albedofair.gradcheck import run_gradcheck
from albedofair.losses import (
    LossWeights,
    albedo_supervision,
    photometric_l1,
    sample_permutation,
    scene_consistency,
    sh_supervision,
    total_loss,
)


@pytest.mark.parametrize("fn", [photometric_l1, albedo_supervision])
def test_pixel_losses(fn):
    rng = np.random.default_rng(0)
    a = rng.uniform(size=(5, 6, 3))
    mask = rng.uniform(size=(5, 6)) < 0.6
    assert fn(a, a, mask)[0] == 0.0
    assert fn(a, a + 0.1, mask)[0] == pytest.approx(0.1)
    b = rng.uniform(size=(5, 6, 3))
    total, n = 0.0, 0
    for i, j in zip(*np.nonzero(mask)):
        for c in range(3):
            total += abs(a[i, j, c] - b[i, j, c])
            n += 1
    assert fn(a, b, mask)[0] == pytest.approx(total / n, abs=1e-14)
    with pytest.raises(ValueError):
        fn(a, b, np.zeros((5, 6), bool))


def test_sh_supervision_examples():
    rng = np.random.default_rng(1)
    g = rng.standard_normal((3, 9))
    assert sh_supervision(g, g)[0] == 0.0
    assert sh_supervision(g + 1, g)[0] == pytest.approx(1.0)
    e = rng.standard_normal((3, 9))
    assert sh_supervision(e, g)[0] == pytest.approx(sum(abs(x - y) for x, y in zip(e.ravel(), g.ravel())) / 27)


def test_subgradient_zero_at_kink():
    a = np.ones((2, 2, 3))
    _, g = photometric_l1(a, a)
    assert not g.any()


def test_scene_consistency_examples():
    rng = np.random.default_rng(2)
    g = rng.standard_normal((3, 9))
    assert scene_consistency(np.stack([g, g, g]), rng=rng)[0] == 0.0
    val, grad, perm = scene_consistency(g[None], rng=rng)
    assert val == 0.0 and list(perm) == [0]
    g1, g2 = rng.standard_normal((2, 3, 9))
    val, _, perm = scene_consistency(np.stack([g1, g2]), rng=rng)
    assert list(perm) == [1, 0]
    assert val == pytest.approx(np.mean([abs(x - y) for x, y in zip(g1.ravel(), g2.ravel())]))


def test_derangements():
    rng = np.random.default_rng(3)
    for n in range(2, 7):
        for _ in range(20):
            p = sample_permutation(n, rng)
            assert sorted(p) == list(range(n)) and np.all(p != np.arange(n))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_scene_consistency_relabel_symmetric(n, seed):
    # Relabelling the faces, with the permutation relabelled accordingly, leaves the value unchanged.
    rng = np.random.default_rng(seed)
    gam = rng.standard_normal((n, 3, 9))
    perm = sample_permutation(n, rng)
    sigma = rng.permutation(n)
    inv = np.argsort(sigma)
    v1 = scene_consistency(gam, perm)[0]
    v2 = scene_consistency(gam[sigma], inv[perm[sigma]])[0]
    assert v1 == pytest.approx(v2, abs=1e-14)
    assert v1 > 0


def test_total_loss():
    w = LossWeights()
    assert total_loss({}, w).total == 0.0
    ones = dict(pho=1, sc=1, sh=1, alb=1)
    assert total_loss(ones, w).total == 60.0
    assert total_loss(ones, LossWeights(supervised=False)).total == 20.0
    with pytest.raises(ValueError):
        LossWeights(pho=-1)


def test_gradients_match_finite_differences():
    results = run_gradcheck(seed=0, points_per_check=5)
    assert max(r.rel_error for r in results) < 1e-4


def test_gradcheck_negative_control():
    results = run_gradcheck(seed=0, points_per_check=2, corrupt=True)
    assert not any(r.passed for r in results)
