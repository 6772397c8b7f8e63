"""Skin-type balanced synthetic benchmark: generation, evaluation, reporting.

A scene holds ``n_faces`` heads lit by one shared SH light, placed side by
side in front of a gray-world backdrop. For every face a skin type is drawn
uniformly from I-VI, then a subject uniformly within that type.

Dataset layout (all paths in the manifest are relative to its directory)::

    manifest.json
    skin_mask.png
    albedo/<subject>.f32|.json|.png
    scenes/<scene>/scene.png, background_mask.png, light.json,
                   f<k>_crop.png, f<k>_gbuffer.f32|.json
"""
from __future__ import annotations

import csv
import io as _io
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .albedo_model import PcaModel, synthesize
from .colorimetry import SKIN_TYPES, SkinType, ita_error
from .geometry import Mesh, head_mesh, skin_mask
from .inverse_renderer import (FaceObservation, FitResult, OptimConfig, SceneObservation,
                               fit_batch, predicted_albedo, with_flags)
from .io import (read_f32, read_json, read_mask_png, read_png_linear, write_f32, write_json,
                 write_mask_png, write_png_linear)
from .rasterizer import (WeakPerspectiveCamera, load_gbuffer, rasterize, rotation_matrix, save_gbuffer,
                         warp)
from .sh_lighting import N_COEFFS, shade
from .textures import AlbedoSample, check_coverage, classify_maps, type_counts

log = logging.getLogger(__name__)

GENERATOR_VERSION = f"albedofair-{__version__}"
PAPER_SCALE_SCENES = 721
DESK_SCALE_SCENES = 60


@dataclass(frozen=True)
class GeneratorConfig:
    n_faces: int = 3
    crop_size: int = 64
    margin: int = 8
    noise: float = 0.0
    yaw: float = 0.35
    pitch: float = 0.15
    intensity_range: tuple = (2.4, 3.6)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["intensity_range"] = list(self.intensity_range)
        return out


@dataclass
class FaceSpec:
    subject: str
    skin_type: SkinType
    yaw: float
    pitch: float


@dataclass
class SceneSpec:
    scene_id: str
    seed: int
    light: np.ndarray        # (3, 9) shared by every face
    faces: list


def _hemisphere(n=512):
    """Fibonacci points on the camera-facing hemisphere (z >= 0)."""
    k = np.arange(n) + 0.5
    z = k / n
    phi = np.pi * (1 + 5**0.5) * k
    r = np.sqrt(1 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


_FRONT = _hemisphere()


def sample_light(rng, intensity_range=(2.4, 3.6), max_tries: int = 1000) -> np.ndarray:
    """DC-dominant SH light with a mild colour tint.

    Draws are rejected until the irradiance is non-negative on every
    camera-facing normal; a raw SH vector can otherwise emit negative light,
    which no real scene does and which image export would clip.
    """
    for _ in range(max_tries):
        base = rng.uniform(*intensity_range)
        tint = np.clip(1.0 + 0.12 * rng.standard_normal(3), 0.8, 1.2)
        d = np.concatenate([[1.0], 0.3 * rng.standard_normal(3), 0.1 * rng.standard_normal(5)])
        d /= np.linalg.norm(d)
        dirs = d + 0.03 * rng.standard_normal((3, N_COEFFS))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        light = (base * tint)[:, None] * dirs
        if shade(_FRONT, light).min() >= 0.0:
            return light
    raise RuntimeError("could not draw a non-negative light")


def _subjects_by_type(samples):
    by_type = {t: [] for t in SKIN_TYPES}
    for s in samples:
        by_type[s.skin_type].append(s.name)
    return by_type


def plan_dataset(samples, n_scenes: int, cfg: GeneratorConfig, seed: int) -> list[SceneSpec]:
    """Draw lights, skin types, subjects and poses for every scene."""
    check_coverage(samples)
    by_type = _subjects_by_type(samples)
    rng = np.random.default_rng(seed)
    scenes = []
    for k in range(n_scenes):
        light = sample_light(rng, cfg.intensity_range)
        faces = []
        for _ in range(cfg.n_faces):
            skin_type = SKIN_TYPES[rng.integers(len(SKIN_TYPES))]
            names = by_type[skin_type]
            subject = names[rng.integers(len(names))]
            faces.append(FaceSpec(subject, skin_type, float(rng.uniform(-cfg.yaw, cfg.yaw)),
                                  float(rng.uniform(-cfg.pitch, cfg.pitch))))
        scenes.append(SceneSpec(f"s{k:04d}", k, light, faces))
    return scenes


def crop_camera(cfg: GeneratorConfig, yaw: float, pitch: float) -> WeakPerspectiveCamera:
    c = cfg.crop_size
    return WeakPerspectiveCamera(0.45 * c, np.array([c / 2.0, c / 2.0]), rotation_matrix(yaw, pitch))


def scene_size(cfg: GeneratorConfig) -> tuple[int, int]:
    c, m = cfg.crop_size, cfg.margin
    return c + 2 * m, cfg.n_faces * c + (cfg.n_faces + 1) * m


def crop_box(cfg: GeneratorConfig, k: int) -> tuple[int, int, int, int]:
    """(row, col, height, width) of face ``k`` inside the scene image."""
    c, m = cfg.crop_size, cfg.margin
    return m, m + k * (c + m), c, c


def backdrop(cfg: GeneratorConfig, light, rng) -> np.ndarray:
    """Curved gray-world wall: normals sweep horizontally, albedo averages 0.5."""
    h, w = scene_size(cfg)
    phi = (np.arange(w) + 0.5) / w * (2 * np.pi / 3) - np.pi / 3
    normals = np.stack([np.sin(phi), np.zeros(w), np.cos(phi)], axis=-1)
    normals = np.broadcast_to(normals, (h, w, 3))
    yy, xx = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    tex = np.zeros((h, w))
    for _ in range(3):
        f = rng.uniform(1.0, 4.0, size=2)
        tex += np.cos(2 * np.pi * (f[0] * xx + f[1] * yy) + rng.uniform(0, 2 * np.pi))
    albedo = 0.5 * (1.0 + 0.25 * tex / 3.0)
    return albedo[..., None] * shade(normals, light)


def render_scene(spec: SceneSpec, albedo: dict, mesh: Mesh, cfg: GeneratorConfig, seed: int):
    """Scene image, background mask, per-face crops and G-buffers."""
    rng = np.random.default_rng([seed, spec.seed])
    image = backdrop(cfg, spec.light, rng)
    bg = np.ones(image.shape[:2], dtype=bool)
    crops, gbuffers = [], []
    for k, face in enumerate(spec.faces):
        g = rasterize(mesh, crop_camera(cfg, face.yaw, face.pitch), cfg.crop_size, cfg.crop_size)
        face_img = warp(albedo[face.subject], g) * shade(g.normal, spec.light, g.mask)
        r, c, h, w = crop_box(cfg, k)
        window = image[r:r + h, c:c + w]
        window[g.mask] = face_img[g.mask]
        bg[r:r + h, c:c + w] &= ~g.mask
        gbuffers.append(g)
    if cfg.noise > 0:
        image = image + cfg.noise * rng.standard_normal(image.shape)
    for k in range(len(spec.faces)):
        r, c, h, w = crop_box(cfg, k)
        crops.append(image[r:r + h, c:c + w].copy())
    return image, bg, crops, gbuffers


def _write_scene(args):
    spec, albedo, mesh, cfg, seed, root = args
    root = Path(root)
    sdir = root / "scenes" / spec.scene_id
    image, bg, crops, gbuffers = render_scene(spec, albedo, mesh, cfg, seed)
    write_png_linear(sdir / "scene.png", image)
    write_mask_png(sdir / "background_mask.png", bg)
    write_json(sdir / "light.json", spec.light.tolist())
    faces = []
    for k, (face, crop, g) in enumerate(zip(spec.faces, crops, gbuffers)):
        write_png_linear(sdir / f"f{k}_crop.png", crop)
        save_gbuffer(sdir / f"f{k}_gbuffer.f32", g)
        faces.append({
            "face_id": f"{spec.scene_id}_f{k}",
            "subject": face.subject,
            "skin_type": face.skin_type.name,
            "crop": f"scenes/{spec.scene_id}/f{k}_crop.png",
            "gbuffer": f"scenes/{spec.scene_id}/f{k}_gbuffer.f32",
            "box": list(crop_box(cfg, k)),
            "camera": crop_camera(cfg, face.yaw, face.pitch).to_dict(),
            "degenerate_triangles": int(g.degenerate),
        })
    return {
        "scene_id": spec.scene_id,
        "seed": spec.seed,
        "scene_image": f"scenes/{spec.scene_id}/scene.png",
        "background_mask": f"scenes/{spec.scene_id}/background_mask.png",
        "light": f"scenes/{spec.scene_id}/light.json",
        "sh": spec.light.tolist(),
        "faces": faces,
    }


def generate_dataset(source, out_dir, n_scenes: int, cfg: GeneratorConfig | None = None, seed: int = 0,
                     mesh: Mesh | None = None, jobs: int = 1, model_samples_per_type: int = 8) -> dict:
    """Render a balanced dataset into ``out_dir`` and return its manifest.

    ``source`` is a list of :class:`AlbedoSample` (procedural or loaded
    textures) or a :class:`PcaModel`, from which subjects are drawn by
    rejection sampling until every skin type has ``model_samples_per_type``.
    """
    cfg = cfg or GeneratorConfig()
    mesh = mesh or head_mesh()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = subjects_from_model(source, model_samples_per_type, seed) if isinstance(source, PcaModel) else list(source)
    check_coverage(samples)
    d = samples[0].uv_map.shape[0]
    specs = plan_dataset(samples, n_scenes, cfg, seed)

    used = sorted({f.subject for s in specs for f in s.faces})
    by_name = {s.name: s for s in samples}
    subjects = {}
    for name in used:
        s = by_name[name]
        write_f32(out / "albedo" / f"{name}.f32", s.uv_map, layout="(d, d, 3) linear RGB")
        write_png_linear(out / "albedo" / f"{name}.png", s.uv_map)
        subjects[name] = {"albedo": f"albedo/{name}.f32", "skin_type": s.skin_type.name, "ita": float(s.ita)}
    write_mask_png(out / "skin_mask.png", skin_mask(d))

    tasks = [(spec, {f.subject: by_name[f.subject].uv_map for f in spec.faces}, mesh, cfg, seed, str(out))
             for spec in specs]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            scenes = list(ex.map(_write_scene, tasks))
    else:
        scenes = [_write_scene(t) for t in tasks]

    counts = {t.name: 0 for t in SKIN_TYPES}
    for spec in specs:
        for f in spec.faces:
            counts[f.skin_type.name] += 1
    manifest = {
        "generator_version": GENERATOR_VERSION,
        "seed": seed,
        "config": cfg.to_dict(),
        "uv_size": d,
        "skin_mask": "skin_mask.png",
        "n_scenes": n_scenes,
        "n_faces": n_scenes * cfg.n_faces,
        "face_type_counts": counts,
        "subject_type_counts": type_counts(samples),
        "subjects": subjects,
        "scenes": scenes,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def subjects_from_model(model: PcaModel, per_type: int, seed: int, max_draws: int = 20000) -> list[AlbedoSample]:
    """Draw subjects from the model prior, keeping ``per_type`` of each skin type."""
    rng = np.random.default_rng([seed, 7])
    kept = {t: [] for t in SKIN_TYPES}
    for _ in range(max_draws):
        if all(len(v) >= per_type for v in kept.values()):
            break
        m = np.clip(synthesize(model, rng.standard_normal(model.n_components)), 0.0, 1.0)
        s = classify_maps([m])[0]
        if len(kept[s.skin_type]) < per_type:
            kept[s.skin_type].append(s)
    out = []
    for t in SKIN_TYPES:
        for k, s in enumerate(kept[t]):
            out.append(AlbedoSample(s.uv_map, t, s.ita, f"{t.name}_{k:03d}"))
    check_coverage(out)
    return out


def load_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    return read_json(path), path.parent


def load_scene(root, scene: dict, manifest: dict, supervised: bool = True) -> SceneObservation:
    root = Path(root)
    faces = []
    gt_sh = np.asarray(read_json(root / scene["light"]), dtype=np.float64)
    for f in scene["faces"]:
        gt = read_f32(root / manifest["subjects"][f["subject"]]["albedo"]) if supervised else None
        faces.append(FaceObservation(read_png_linear(root / f["crop"]), load_gbuffer(root / f["gbuffer"]),
                                     gt, gt_sh if supervised else None, f["face_id"]))
    return SceneObservation(faces, read_png_linear(root / scene["scene_image"]),
                            read_mask_png(root / scene["background_mask"]), int(scene["seed"]), scene["scene_id"])


def fit_dataset(dataset, model: PcaModel, cfg: OptimConfig, out_dir, jobs: int = 1) -> list[FitResult]:
    """Fit every scene and write ``<face_id>.f32/.png`` maps plus ``fits/<scene>.json``."""
    manifest, root = load_manifest(dataset)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenes = [load_scene(root, s, manifest, cfg.weights.supervised) for s in manifest["scenes"]]
    results = fit_batch(scenes, model, cfg, jobs)
    for scene, res in zip(manifest["scenes"], results):
        record = {"scene_id": scene["scene_id"], "seed": cfg.seed, "version": __version__,
                  "config": cfg.to_dict(), "error": res.error}
        if res.variables is not None:
            record["variables"] = res.variables.to_dict()
            record["final_losses"] = res.breakdown
            record["gt_intensity"] = np.linalg.norm(np.asarray(scene["sh"]), axis=1).tolist()
            for face, uv in zip(scene["faces"], predicted_albedo(model, res.variables)):
                write_f32(out / f"{face['face_id']}.f32", uv, layout="(d, d, 3) linear RGB")
                write_png_linear(out / f"{face['face_id']}.png", uv)
        write_json(out / "fits" / f"{scene['scene_id']}.json", record)
    return results


# ---------------------------------------------------------------- metrics


@dataclass
class MetricsReport:
    per_type: dict              # skin type name -> mean ITA error, None when absent
    counts: dict
    avg_ita: float
    bias: float
    score: float
    mae: float
    n_faces: int
    n_missing: int = 0
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "MetricsReport":
        return cls(**data)


def aggregate_per_type(per_type: dict) -> tuple[float, float, float]:
    """(avg ITA, bias, score) from per-type mean errors.

    Avg ITA weights every present type equally; bias is the sample (n - 1)
    standard deviation of the per-type means.
    """
    vals = np.array([v for v in per_type.values() if v is not None], dtype=np.float64)
    if vals.size == 0:
        return 0.0, 0.0, 0.0
    avg = float(vals.mean())
    bias = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return avg, bias, avg + bias


def aggregate_metrics(per_face, meta: dict | None = None, n_missing: int = 0) -> MetricsReport:
    """``per_face`` is an iterable of ``(skin_type, ita_error, mae)`` or detail-row dicts."""
    rows = []
    for item in per_face:
        if isinstance(item, dict):
            rows.append(dict(item))
        else:
            st, e, mae = item
            rows.append({"skin_type": SkinType[st].name if isinstance(st, str) else SkinType(st).name,
                         "ita_error": float(e), "mae": float(mae)})
    per_type, counts = {}, {}
    for t in SKIN_TYPES:
        errs = [r["ita_error"] for r in rows if r["skin_type"] == t.name]
        counts[t.name] = len(errs)
        # fsum is correctly rounded, so the result does not depend on face order.
        per_type[t.name] = math.fsum(errs) / len(errs) if errs else None
    absent = [k for k, v in per_type.items() if v is None]
    if absent and rows:
        warnings.warn(f"skin types without faces excluded from aggregation: {absent}", stacklevel=2)
    avg, bias, score = aggregate_per_type(per_type)
    mae = math.fsum(r["mae"] for r in rows) / len(rows) if rows else 0.0
    return MetricsReport(per_type, counts, avg, bias, score, mae, len(rows), n_missing, rows, meta or {})


def evaluate(dataset, predictions_dir, per_pixel: bool = False) -> MetricsReport:
    """Score predicted UV maps against the dataset's ground truth."""
    manifest, root = load_manifest(dataset)
    pred_dir = Path(predictions_dir)
    mask = read_mask_png(root / manifest["skin_mask"])
    cache = {}
    rows, missing = [], 0
    for scene in manifest["scenes"]:
        for f in scene["faces"]:
            path = pred_dir / f"{f['face_id']}.f32"
            if not path.exists():
                missing += 1
                log.warning("no prediction for %s", f["face_id"])
                continue
            if f["subject"] not in cache:
                cache[f["subject"]] = read_f32(root / manifest["subjects"][f["subject"]]["albedo"])
            gt = cache[f["subject"]]
            pred = read_f32(path)
            rows.append({
                "face_id": f["face_id"],
                "skin_type": f["skin_type"],
                "ita_error": float(ita_error(pred, gt, mask, per_pixel=per_pixel)),
                "mae": float(np.mean(np.abs(pred - gt))),
            })
    meta = {"generator_version": manifest["generator_version"], "dataset_seed": manifest["seed"],
            "per_pixel_ita": per_pixel, "version": __version__}
    return aggregate_metrics(rows, meta, missing)


# ---------------------------------------------------------------- reports

SUMMARY_FIELDS = ["label", "avg_ita", "bias", "score", "mae"] + [t.name for t in SKIN_TYPES]
DETAIL_FIELDS = ["face_id", "skin_type", "ita_error", "mae"]


def summary_row(report: MetricsReport, label: str = "") -> dict:
    row = {"label": label, "avg_ita": f"{report.avg_ita:.2f}", "bias": f"{report.bias:.2f}",
           "score": f"{report.score:.2f}", "mae": f"{report.mae:.2f}"}
    for t in SKIN_TYPES:
        v = report.per_type.get(t.name)
        row[t.name] = "" if v is None else f"{v:.2f}"
    return row


def _csv(fields, rows) -> str:
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def bar_chart_svg(report: MetricsReport, title: str = "ITA error per skin type") -> str:
    width, height, pad = 420, 260, 40
    vals = [report.per_type.get(t.name) or 0.0 for t in SKIN_TYPES]
    top = max(max(vals), 1e-9)
    bw = (width - 2 * pad) / len(vals)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">{title}</text>']
    for k, (t, v) in enumerate(zip(SKIN_TYPES, vals)):
        h = (height - 2 * pad) * v / top
        x = pad + k * bw + 4
        y = height - pad - h
        shade_hex = f"#{int(230 - 30 * k):02x}{int(200 - 32 * k):02x}{int(170 - 26 * k):02x}"
        parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bw - 8:.1f}" height="{h:.1f}" fill="{shade_hex}"/>')
        parts.append(f'<text x="{x + (bw - 8) / 2:.1f}" y="{y - 4:.1f}" text-anchor="middle" font-size="10">{v:.2f}</text>')
        parts.append(f'<text x="{x + (bw - 8) / 2:.1f}" y="{height - pad + 14:.1f}" text-anchor="middle" font-size="11">{t.name}</text>')
    parts.append(f'<text x="{pad}" y="{height - 8}" font-size="10">Avg {report.avg_ita:.2f}  Bias {report.bias:.2f}  '
                 f'Score {report.score:.2f}  MAE {report.mae:.2f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_report(report: MetricsReport, out_dir, name: str = "report", label: str = "") -> dict:
    """Write ``<name>.json``, ``<name>.csv`` (summary), ``<name>_faces.csv`` and ``<name>.svg``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / f"{name}{suffix}" for k, suffix in
             (("json", ".json"), ("csv", ".csv"), ("faces_csv", "_faces.csv"), ("svg", ".svg"))}
    write_json(paths["json"], report.to_dict())
    paths["csv"].write_text(_csv(SUMMARY_FIELDS, [summary_row(report, label)]))
    paths["faces_csv"].write_text(_csv(DETAIL_FIELDS, report.rows))
    paths["svg"].write_text(bar_chart_svg(report))
    return paths


ABLATION_ARMS = {
    # arm: (share_intensity, use_scene_consistency, condition_init)
    "none": (False, False, False),
    "+sc": (True, True, False),
    "+cond-init": (True, False, True),
    "+both": (True, True, True),
}


def run_ablation(dataset, model: PcaModel, cfg: OptimConfig, out_dir, jobs: int = 1, arms=None) -> dict:
    """Fit and evaluate every arm; returns ``{arm: MetricsReport}`` and writes a comparison table."""
    out = Path(out_dir)
    reports = {}
    for arm in arms or ABLATION_ARMS:
        share, sc, cond = ABLATION_ARMS[arm]
        arm_cfg = with_flags(cfg, share_intensity=share, use_scene_consistency=sc, condition_init=cond)
        arm_dir = out / arm.replace("+", "plus_")
        fit_dataset(dataset, model, arm_cfg, arm_dir / "predictions", jobs)
        rep = evaluate(dataset, arm_dir / "predictions")
        rep.meta.update({"arm": arm, "config": arm_cfg.to_dict()})
        render_report(rep, arm_dir, label=arm)
        reports[arm] = rep
    (out / "ablation.csv").write_text(_csv(SUMMARY_FIELDS, [summary_row(r, a) for a, r in reports.items()]))
    write_json(out / "ablation.json", {a: r.to_dict() for a, r in reports.items()})
    return reports
