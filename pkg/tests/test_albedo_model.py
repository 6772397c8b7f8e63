import numpy as np
import pytest

from albedofair.albedo_model import fit_pca, load_model, project, save_model, synthesize
from albedofair.colorimetry import SKIN_TYPES
from albedofair.textures import balanced_library, check_coverage, type_counts


def _maps(rng, n, d=6):
    return [rng.uniform(0.05, 0.95, size=(d, d, 3)) for _ in range(n)]


def test_identical_samples():
    m = np.full((4, 4, 3), 0.3)
    model = fit_pca([m, m], 1)
    np.testing.assert_allclose(model.mean.reshape(4, 4, 3), m)
    np.testing.assert_allclose(model.eigenvalues, 0.0, atol=1e-20)


def test_rank_one_line():
    rng = np.random.default_rng(0)
    base = rng.uniform(0.2, 0.5, size=(5, 5, 3))
    direction = rng.standard_normal((5, 5, 3)) * 0.01
    model = fit_pca([base + t * direction for t in np.linspace(-1, 1, 7)], 3)
    assert model.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-10)


def test_reconstruction_matches_gram_oracle():
    rng = np.random.default_rng(1)
    maps = _maps(rng, 20)
    K = 5
    model = fit_pca(maps, K)
    X = np.stack([m.ravel() for m in maps])
    Xc = X - X.mean(axis=0)
    # Independent route: eigendecomposition of the 20 x 20 Gram matrix.
    w, v = np.linalg.eigh(Xc @ Xc.T)
    top = v[:, np.argsort(w)[::-1][:K]]
    U = Xc.T @ top
    U /= np.linalg.norm(U, axis=0)
    oracle_err = np.linalg.norm(Xc - Xc @ U @ U.T)
    ours = np.stack([synthesize(model, project(model, m)).ravel() for m in maps])
    assert np.linalg.norm(X - ours) == pytest.approx(oracle_err, rel=1e-9)
    np.testing.assert_allclose(np.sort(w)[::-1][:K] / 19, model.eigenvalues, rtol=1e-9)


def test_synthesize_and_project_examples():
    rng = np.random.default_rng(2)
    maps = _maps(rng, 8)
    model = fit_pca(maps, 7)
    mean = model.mean.reshape(6, 6, 3)
    np.testing.assert_array_equal(synthesize(model, np.zeros(7)), mean)
    # Full rank: 8 samples span 7 directions about the mean.
    assert np.max(np.abs(synthesize(model, project(model, maps[3])) - maps[3])) <= 1e-6
    e0 = np.eye(7)[0]
    np.testing.assert_allclose(synthesize(model, e0).ravel(), model.mean + model.scale[0] * model.basis[:, 0])
    np.testing.assert_allclose(project(model, mean), 0.0, atol=1e-12)
    shifted = (model.mean + model.scale[2] * model.basis[:, 2]).reshape(6, 6, 3)
    np.testing.assert_allclose(project(model, shifted), np.eye(7)[2], atol=1e-10)


def test_project_normal_equations():
    rng = np.random.default_rng(3)
    model = fit_pca(_maps(rng, 12), 4)
    x = rng.uniform(size=(6, 6, 3))
    B = model.basis * model.scale
    coef = np.linalg.solve(B.T @ B, B.T @ (x.ravel() - model.mean))
    np.testing.assert_allclose(project(model, x), coef, rtol=1e-9, atol=1e-9)
    resid = x.ravel() - synthesize(model, project(model, x)).ravel()
    assert np.max(np.abs(model.basis.T @ resid)) < 1e-6


def test_idempotence():
    rng = np.random.default_rng(4)
    model = fit_pca(_maps(rng, 12), 6)
    for _ in range(20):
        a = rng.standard_normal(6)
        np.testing.assert_allclose(project(model, synthesize(model, a)), a, atol=1e-8)


def test_unwhitened_model():
    rng = np.random.default_rng(5)
    model = fit_pca(_maps(rng, 6), 3, whitened=False)
    np.testing.assert_array_equal(model.scale, np.ones(3))


def test_errors():
    rng = np.random.default_rng(6)
    with pytest.raises(ValueError):
        fit_pca(_maps(rng, 3), 3)
    with pytest.raises(ValueError):
        fit_pca([np.zeros((4, 4, 3)), np.zeros((5, 5, 3)), np.zeros((4, 4, 3))], 1)
    model = fit_pca(_maps(rng, 4), 2)
    with pytest.raises(ValueError):
        synthesize(model, np.zeros(3))
    with pytest.raises(ValueError):
        project(model, np.zeros((5, 5, 3)))


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    model = fit_pca(_maps(rng, 10), 5)
    save_model(model, tmp_path / "m", extra={"note": "x"})
    back = load_model(tmp_path / "m")
    assert back.n_components == 5 and back.d == 6
    np.testing.assert_allclose(back.basis.T @ back.basis, np.eye(5), atol=1e-12)
    np.testing.assert_allclose(back.mean, model.mean, atol=1e-6)
    a = rng.standard_normal(5)
    np.testing.assert_allclose(project(back, synthesize(back, a)), a, atol=1e-8)


def test_procedural_library_balance():
    lib = balanced_library(5, d=32, seed=0)
    counts = type_counts(lib)
    assert all(counts[t.name] >= 5 for t in SKIN_TYPES)
    check_coverage(lib, 5)
    with pytest.raises(ValueError):
        check_coverage([s for s in lib if s.skin_type.name != "VI"])
    again = balanced_library(5, d=32, seed=0)
    assert all(np.array_equal(a.uv_map, b.uv_map) for a, b in zip(lib, again))
