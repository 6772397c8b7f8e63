import csv
import json
import warnings

import numpy as np
import pytest
from scipy import stats

from albedofair.benchmark import (
    GeneratorConfig,
    MetricsReport,
    _FRONT,
    aggregate_metrics,
    evaluate,
    generate_dataset,
    load_manifest,
    plan_dataset,
    render_report,
    sample_light,
)
from albedofair.colorimetry import SKIN_TYPES, lab_to_rgb, mean_ita, rgb_to_lab
from albedofair.io import read_f32, read_json, read_mask_png, write_f32
from albedofair.sh_lighting import shade

from .conftest import SMALL_GEN

# Per-type ITA errors (types I..VI) and the printed Avg / Bias / Score of two published rows.
DENG_ROW = [8.92, 9.08, 8.15, 10.90, 28.48, 69.90]
DENG_PRINTED = (22.57, 24.44, 47.02)
BALANCED_ROW = [11.90, 11.87, 11.20, 13.92, 16.15, 18.21]
BALANCED_PRINTED = (13.87, 2.79, 16.67)


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory, small_library, small_mesh):
    root = tmp_path_factory.mktemp("ds")
    generate_dataset(small_library, root, 4, SMALL_GEN, seed=2, mesh=small_mesh)
    return root


def test_empty_dataset(tmp_path, small_library, small_mesh):
    m = generate_dataset(small_library, tmp_path, 0, SMALL_GEN, seed=0, mesh=small_mesh)
    assert m["scenes"] == [] and m["n_faces"] == 0
    assert read_json(tmp_path / "manifest.json")["n_scenes"] == 0


def test_generation_deterministic(tmp_path, dataset, small_library, small_mesh):
    again = tmp_path / "again"
    generate_dataset(small_library, again, 4, SMALL_GEN, seed=2, mesh=small_mesh, jobs=2)
    assert _tree(again) == _tree(dataset)


def test_manifest_contents(dataset):
    manifest, root = load_manifest(dataset)
    assert manifest["n_faces"] == 12 and len(manifest["scenes"]) == 4
    for scene in manifest["scenes"]:
        light = read_json(root / scene["light"])
        np.testing.assert_array_equal(np.asarray(light), np.asarray(scene["sh"]))
        assert len(scene["faces"]) == 3
        assert all(f["skin_type"] in {t.name for t in SKIN_TYPES} for f in scene["faces"])
    with pytest.raises(FileNotFoundError):
        load_manifest(dataset / "nope")


def test_lights_are_physical():
    rng = np.random.default_rng(0)
    for _ in range(200):
        light = sample_light(rng)
        assert shade(_FRONT, light).min() >= 0.0
        assert np.all(np.linalg.norm(light, axis=1) > 0)


def test_face_balance_chi_square(small_library):
    plan = plan_dataset(small_library, 200, GeneratorConfig(), seed=0)
    counts = np.zeros(6)
    for s in plan:
        for f in s.faces:
            counts[int(f.skin_type) - 1] += 1
    assert counts.sum() == 600
    assert stats.chisquare(counts).pvalue > 0.01


@pytest.mark.parametrize("row,printed", [(DENG_ROW, DENG_PRINTED), (BALANCED_ROW, BALANCED_PRINTED)])
def test_published_rows(row, printed):
    rep = aggregate_metrics([(t, e, 0.0) for t, e in zip(SKIN_TYPES, row)])
    for got, want in zip((rep.avg_ita, rep.bias, rep.score), printed):
        assert got == pytest.approx(want, abs=0.02)


def test_equal_errors():
    rep = aggregate_metrics([(t, 5.0, 0.0) for t in SKIN_TYPES])
    assert (rep.avg_ita, rep.bias, rep.score) == (5.0, 0.0, 5.0)


def test_order_invariance_and_per_type_weighting():
    rng = np.random.default_rng(1)
    faces = [(SKIN_TYPES[k % 6], float(rng.uniform(0, 20)), float(rng.uniform())) for k in range(40)]
    a = aggregate_metrics(faces)
    b = aggregate_metrics([faces[i] for i in rng.permutation(40)])
    assert a.per_type == b.per_type
    assert a.score == pytest.approx(b.score, abs=1e-12)
    means = [np.mean([e for t, e, _ in faces if t == s]) for s in SKIN_TYPES]
    assert a.avg_ita == pytest.approx(np.mean(means), abs=1e-12)
    assert a.bias == pytest.approx(np.std(means, ddof=1), abs=1e-12)


def test_absent_type_warns():
    with pytest.warns(UserWarning):
        rep = aggregate_metrics([(SKIN_TYPES[0], 1.0, 0.0), (SKIN_TYPES[1], 3.0, 0.0)])
    assert rep.per_type["VI"] is None and rep.avg_ita == 2.0


def _predict(dataset, out, transform):
    manifest, root = load_manifest(dataset)
    out.mkdir(parents=True, exist_ok=True)
    for scene in manifest["scenes"]:
        for f in scene["faces"]:
            gt = read_f32(root / manifest["subjects"][f["subject"]]["albedo"])
            write_f32(out / f"{f['face_id']}.f32", transform(gt))
    return manifest, root


def test_evaluate_ground_truth_is_zero(dataset, tmp_path):
    _predict(dataset, tmp_path, lambda gt: gt)
    rep = evaluate(dataset, tmp_path)
    assert rep.avg_ita == 0.0 and rep.bias == 0.0 and rep.score == 0.0 and rep.mae == 0.0
    assert rep.n_missing == 0 and rep.n_faces == 12


def test_evaluate_uniform_ita_shift(dataset, tmp_path):
    # Rotating (L - 50, b) by a fixed angle shifts every pixel's ITA by exactly
    # that angle, so every type sees the same error and the bias vanishes.
    # (A constant L* or b* offset does not do this: ITA is nonlinear in both.)
    delta = np.radians(2.0)

    def rotate(gt):
        lab = rgb_to_lab(gt)
        x, y = lab[..., 2].copy(), lab[..., 0] - 50.0
        lab[..., 2] = x * np.cos(delta) - y * np.sin(delta)
        lab[..., 0] = 50.0 + x * np.sin(delta) + y * np.cos(delta)
        return lab_to_rgb(lab)
    _predict(dataset, tmp_path, rotate)
    rep = evaluate(dataset, tmp_path)
    vals = [v for v in rep.per_type.values() if v is not None]
    np.testing.assert_allclose(vals, 2.0, atol=1e-6)
    assert rep.bias < 1e-6


def test_evaluate_brute_force(dataset, tmp_path):
    rng = np.random.default_rng(3)
    manifest, root = _predict(dataset, tmp_path, lambda gt: np.clip(gt + rng.normal(0, 0.05, gt.shape), 0, 1))
    rep = evaluate(dataset, tmp_path)
    mask = read_mask_png(root / manifest["skin_mask"])
    by_type = {}
    for scene in manifest["scenes"]:
        for f in scene["faces"]:
            gt = read_f32(root / manifest["subjects"][f["subject"]]["albedo"])
            pred = read_f32(tmp_path / f"{f['face_id']}.f32")
            by_type.setdefault(f["skin_type"], []).append(abs(mean_ita(pred, mask) - mean_ita(gt, mask)))
    means = [np.mean(v) for v in by_type.values()]
    expected_bias = np.std(means, ddof=1) if len(means) > 1 else 0.0
    assert rep.avg_ita == pytest.approx(np.mean(means), abs=1e-10)
    assert rep.bias == pytest.approx(expected_bias, abs=1e-10)


def test_evaluate_missing_predictions(dataset, tmp_path):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = evaluate(dataset, tmp_path)
    assert rep.n_missing == 12 and rep.n_faces == 0


def test_report_files(tmp_path):
    rep = aggregate_metrics([(t, e, 0.0) for t, e in zip(SKIN_TYPES, DENG_ROW)])
    paths = render_report(rep, tmp_path, label="deng")
    with open(paths["csv"]) as fh:
        row = next(csv.DictReader(fh))
    assert (row["avg_ita"], row["bias"], row["score"]) == ("22.57", "24.44", "47.02")
    back = MetricsReport.from_dict(json.loads(paths["json"].read_text()))
    assert back == rep
    assert paths["svg"].read_text().startswith("<svg")
    empty = render_report(aggregate_metrics([]), tmp_path / "e")
    assert empty["faces_csv"].read_text() == "face_id,skin_type,ita_error,mae\n"
