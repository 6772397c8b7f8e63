"""Command-line interface: ``albedofair <subcommand> [options]``.

Exit codes: 0 success, 2 usage or input error, 3 runtime failure.
Options may also come from ``--config FILE.json`` (keys are option names with
underscores); explicit flags win over the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3
CACHE_ENV = "ALBEDOFAIR_CACHE"

log = logging.getLogger("albedofair")


class InputError(Exception):
    pass


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "albedofair"))


def default_model_path() -> Path:
    return cache_dir() / "model"


def _run_record(args, **extra) -> dict:
    rec = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    rec.update({"version": __version__, **extra})
    return rec


def _load_model(path):
    from .albedo_model import load_model

    path = Path(path) if path else default_model_path()
    if not path.with_suffix(".json").exists():
        raise InputError(f"model not found: {path.with_suffix('.json')} (run build-model first)")
    return load_model(path)


def _optim_config(args):
    from .inverse_renderer import OptimConfig
    from .losses import LossWeights

    weights = LossWeights(args.w_pho, args.w_sc, args.w_sh, args.w_alb, supervised=not args.unsupervised)
    return OptimConfig(lr=args.lr, iters=args.iters, lr_final=args.lr_final, weights=weights,
                       share_intensity=not args.no_share_intensity,
                       use_scene_consistency=not args.no_scene_consistency,
                       condition_init=not args.no_condition_init,
                       seed=args.seed, prior_weight=args.prior)


def _check_dataset(path):
    p = Path(path)
    if not (p / "manifest.json").exists():
        raise InputError(f"not a dataset directory (no manifest.json): {p}")
    return p


# ------------------------------------------------------------------ commands


def cmd_build_model(args) -> int:
    from .albedo_model import fit_pca, save_model
    from .io import write_json
    from .textures import balanced_library, check_coverage, load_texture_dir, type_counts

    if args.textures:
        tex = Path(args.textures)
        if not tex.is_dir():
            raise InputError(f"texture directory not found: {tex}")
        samples = load_texture_dir(tex)
    elif args.procedural:
        samples = balanced_library(args.per_type, args.d, args.seed)
    else:
        raise InputError("give --procedural or --textures DIR")
    try:
        check_coverage(samples)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = Path(args.out) if args.out else default_model_path()
    model = fit_pca([s.uv_map for s in samples], args.components)
    balance = {"type_counts": type_counts(samples),
               "samples": [{"name": s.name, "skin_type": s.skin_type.name, "ita": s.ita} for s in samples]}
    save_model(model, out, extra={"seed": args.seed, "balance": balance["type_counts"]})
    write_json(out.parent / f"{out.name}_balance.json", {**balance, "run": _run_record(args)})
    print(f"model: {out.with_suffix('.json')}  components={model.n_components}  types={balance['type_counts']}")
    return EXIT_OK


def cmd_generate(args) -> int:
    from .benchmark import PAPER_SCALE_SCENES, GeneratorConfig, generate_dataset
    from .geometry import head_mesh, read_obj, uv_sphere
    from .io import write_json
    from .textures import balanced_library, load_texture_dir

    if args.textures:
        source = load_texture_dir(args.textures)
    elif args.model:
        source = _load_model(args.model)
    else:
        source = balanced_library(args.subjects_per_type, args.d, args.seed + 1)
    if args.mesh:
        if not Path(args.mesh).exists():
            raise InputError(f"mesh not found: {args.mesh}")
        mesh = read_obj(args.mesh)
    else:
        mesh = uv_sphere() if args.sphere else head_mesh()
    n = PAPER_SCALE_SCENES if args.paper_scale else args.scenes
    cfg = GeneratorConfig(n_faces=args.faces, crop_size=args.crop, noise=args.noise)
    try:
        manifest = generate_dataset(source, args.out, n, cfg, args.seed, mesh, args.jobs,
                                    model_samples_per_type=args.subjects_per_type)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    write_json(Path(args.out) / "run.json", _run_record(args))
    print(f"dataset: {args.out}  scenes={manifest['n_scenes']}  crops={manifest['n_faces']}  "
          f"types={manifest['face_type_counts']}")
    return EXIT_OK


def cmd_fit(args) -> int:
    from .benchmark import fit_dataset
    from .io import write_json

    dataset = _check_dataset(args.dataset)
    model = _load_model(args.model)
    cfg = _optim_config(args)
    results = fit_dataset(dataset, model, cfg, args.out, args.jobs)
    write_json(Path(args.out) / "run.json", _run_record(args, config=cfg.to_dict()))
    failed = [r.name for r in results if r.error]
    print(f"fitted {len(results) - len(failed)}/{len(results)} scenes -> {args.out}")
    if failed:
        log.error("failed scenes: %s", ", ".join(failed))
        return EXIT_RUNTIME
    return EXIT_OK


def _parse_per_type(text):
    from .colorimetry import SKIN_TYPES

    vals = [float(v) for v in text.split(",")]
    if len(vals) != len(SKIN_TYPES):
        raise InputError("--per-type-errors needs six comma-separated values (types I..VI)")
    return [(t, v, 0.0) for t, v in zip(SKIN_TYPES, vals)]


def cmd_evaluate(args) -> int:
    from .benchmark import aggregate_metrics, evaluate, render_report

    if args.per_type_errors:
        report = aggregate_metrics(_parse_per_type(args.per_type_errors), {"version": __version__})
    else:
        if not args.dataset or not args.predictions:
            raise InputError("evaluate needs --dataset and --predictions (or --per-type-errors)")
        dataset = _check_dataset(args.dataset)
        if not Path(args.predictions).is_dir():
            raise InputError(f"predictions directory not found: {args.predictions}")
        report = evaluate(dataset, args.predictions, per_pixel=args.per_pixel_ita)
    report.meta["run"] = _run_record(args)
    paths = render_report(report, args.out, label=args.label)
    print(f"Avg ITA {report.avg_ita:.2f}  Bias {report.bias:.2f}  Score {report.score:.2f}  "
          f"MAE {report.mae:.2f}  faces={report.n_faces} missing={report.n_missing}")
    print(f"report: {paths['csv']}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from collections import defaultdict

    from .gradcheck import TOLERANCE, run_gradcheck
    from .io import write_json

    results = run_gradcheck(args.seed, args.points, corrupt=args.corrupt_gradient)
    worst = defaultdict(float)
    counts = defaultdict(int)
    for r in results:
        worst[r.name] = max(worst[r.name], r.rel_error)
        counts[r.name] += 1
    ok = all(r.passed for r in results)
    for name in worst:
        status = "PASS" if worst[name] < TOLERANCE else "FAIL"
        print(f"{status}  {name:32s} points={counts[name]:4d}  max rel err={worst[name]:.3e}")
    print(f"{'PASS' if ok else 'FAIL'}: {sum(r.passed for r in results)}/{len(results)} checks below {TOLERANCE:g}")
    if args.out:
        write_json(args.out, {"passed": ok, "tolerance": TOLERANCE, "worst": dict(worst),
                              "run": _run_record(args)})
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_ablate(args) -> int:
    from .benchmark import ABLATION_ARMS, run_ablation, summary_row

    dataset = _check_dataset(args.dataset)
    model = _load_model(args.model)
    arms = args.arms.split(",") if args.arms else list(ABLATION_ARMS)
    unknown = [a for a in arms if a not in ABLATION_ARMS]
    if unknown:
        raise InputError(f"unknown arms {unknown}; choose from {list(ABLATION_ARMS)}")
    reports = run_ablation(dataset, model, _optim_config(args), args.out, args.jobs, arms)
    print(f"{'arm':12s} {'AvgITA':>7s} {'Bias':>7s} {'Score':>7s} {'MAE':>7s}")
    for arm, rep in reports.items():
        row = summary_row(rep, arm)
        print(f"{arm:12s} {row['avg_ita']:>7s} {row['bias']:>7s} {row['score']:>7s} {row['mae']:>7s}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_fit_options(p):
    p.add_argument("--model", help="model path prefix (default: $%s/model)" % CACHE_ENV)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--lr-final", type=float, default=1e-2, help="end of the cosine schedule, as a fraction of --lr")
    p.add_argument("--prior", type=float, default=1e-3, help="weight of the squared-norm alpha prior")
    p.add_argument("--w-pho", type=float, default=10.0)
    p.add_argument("--w-sc", type=float, default=10.0)
    p.add_argument("--w-sh", type=float, default=20.0)
    p.add_argument("--w-alb", type=float, default=20.0)
    p.add_argument("--unsupervised", action="store_true", help="indicator off: drop SH / albedo supervision")
    p.add_argument("--no-scene-consistency", action="store_true")
    p.add_argument("--no-share-intensity", action="store_true")
    p.add_argument("--no-condition-init", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="albedofair", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file of option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("build-model", help="build the PCA albedo model")
    common(p)
    p.add_argument("--procedural", action="store_true", help="use the procedural balanced library")
    p.add_argument("--per-type", type=int, default=10)
    p.add_argument("--textures", help="directory of .f32 / .png UV maps")
    p.add_argument("--components", type=int, default=20)
    p.add_argument("--d", type=int, default=256, help="UV resolution for procedural maps")
    p.add_argument("--out", help="model path prefix")
    p.set_defaults(func=cmd_build_model)

    p = sub.add_parser("generate", help="render a balanced benchmark dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=60)
    p.add_argument("--paper-scale", action="store_true", help="721 scenes")
    p.add_argument("--faces", type=int, default=3)
    p.add_argument("--crop", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--textures", help="subject UV maps (default: procedural subjects)")
    p.add_argument("--model", help="draw subjects from this PCA model instead")
    p.add_argument("--subjects-per-type", type=int, default=8)
    p.add_argument("--d", type=int, default=256)
    p.add_argument("--mesh", help="OBJ head mesh (default: bundled parametric head)")
    p.add_argument("--sphere", action="store_true", help="use the UV-sphere fallback mesh")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="fit albedo and light for every scene")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_fit_options(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="ITA / bias / score / MAE report")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--predictions")
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="")
    p.add_argument("--per-pixel-ita", action="store_true", help="mean per-pixel ITA difference")
    p.add_argument("--per-type-errors", help="aggregate six given per-type errors instead")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    common(p)
    p.add_argument("--points", type=int, default=100, help="random points per check")
    p.add_argument("--corrupt-gradient", action="store_true", help="negative control")
    p.add_argument("--out", help="write a JSON summary")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="compare mechanism ablation arms")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--arms", help="comma-separated subset of: none,+sc,+cond-init,+both")
    _add_fit_options(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            defaults = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(defaults) - known)
        if unknown:
            parser.error(f"unknown config keys: {unknown}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:
        log.exception("runtime failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
