"""Command-line interface.

Exit codes: 0 success, 1 invalid input, 2 I/O failure. File outputs are
atomic (write to a temp file, then rename), and every run with an output
directory echoes its fully resolved configuration there as JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import compose as compose_mod
from . import curation, flare, metrics, niqe, retinex, routing
from .core import ImageRgb, InvalidInput, IoError, SeededRng, load_png, save_png, save_png_plane

SCHEMA_VERSION = compose_mod.SCHEMA_VERSION


def _atomic_json(obj, path: Path):
    compose_mod.atomic_write_json(obj, path)


def _atomic_save_png(image, path: Path, plane=False):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".png.tmp")
    os.close(fd)
    try:
        (save_png_plane if plane else save_png)(image, tmp)
        os.replace(tmp, path)
    except OSError as e:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IoError(str(e)) from e


def _echo_config(out_dir: Path, args: argparse.Namespace):
    resolved = {k: str(v) if isinstance(v, Path) else v for k, v in vars(args).items() if k != "func"}
    resolved["schema_version"] = SCHEMA_VERSION
    _atomic_json(resolved, out_dir / "run_config.json")


def cmd_decompose(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    image = load_png(args.input)
    pair = retinex.decompose(image, blur_sigma=args.sigma, eps=args.eps)
    _atomic_save_png(pair.illumination, out_dir / "illumination.png", plane=True)
    reflectance = ImageRgb(np.clip(pair.reflectance.data, 0.0, 1.0))
    _atomic_save_png(reflectance, out_dir / "reflectance.png")
    _atomic_json(
        {"schema_version": SCHEMA_VERSION, "sigma": args.sigma, "eps": args.eps, "input": str(args.input)},
        out_dir / "meta.json",
    )
    _echo_config(out_dir, args)
    return 0


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.recipe) as f:
        recipe = compose_mod.recipe_from_dict(json.load(f))
    if args.seed is not None:
        recipe.seed = args.seed
    sample = compose_mod.compose_scene(load_png(args.input), recipe)
    _atomic_save_png(sample.degraded, out_dir / "degraded.png")
    _atomic_save_png(sample.flared, out_dir / "flare.png")
    _atomic_json(
        {
            "schema_version": SCHEMA_VERSION,
            "labels": sample.labels,
            "beta": sample.beta,
            "seed": sample.seed,
            "recipe": sample.recipe,
            "omega_stats": sample.omega_stats,
        },
        out_dir / "meta.json",
    )
    _echo_config(out_dir, args)
    return 0


def cmd_flare(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    image = load_png(args.input)
    params = flare.FlareParams(
        alpha=args.alpha,
        beta_base=args.beta_base,
        rho_ref=args.rho_ref,
        tau_percentile=args.tau,
        feather_radius=args.feather,
    )
    light = flare.extract_light_sources(image, args.tau, args.feather)
    kernel = flare.apsf_kernel(args.apsf_size, args.apsf_sigma, args.apsf_gamma)
    flared, beta = flare.apply_flare(image, light, kernel, params)
    _atomic_save_png(flared, out_dir / "flared.png")
    _atomic_save_png(light, out_dir / "light.png", plane=True)
    rho = float(np.mean(light.data > 0.5))
    _atomic_json({"schema_version": SCHEMA_VERSION, "beta": beta, "rho": rho}, out_dir / "meta.json")
    _echo_config(out_dir, args)
    return 0


def cmd_curate(args) -> int:
    in_dir = Path(args.input)
    paths = sorted(in_dir.glob("*.png"))
    if not paths:
        raise InvalidInput(f"no PNG files in {in_dir}")
    thresholds = curation.CurationThresholds()
    if args.thresholds:
        with open(args.thresholds) as f:
            thresholds = curation.CurationThresholds(**json.load(f))
    scores = [curation.score_image(load_png(p)) for p in paths]
    keep = set(curation.filter_candidates(scores, thresholds))
    out = Path(args.output)
    fd, tmp = tempfile.mkstemp(dir=out.parent or Path("."), suffix=".csv.tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["path", "brightness", "gradient", "smd2", "keep"])
            for i, (p, s) in enumerate(zip(paths, scores)):
                writer.writerow([str(p), f"{s.avg_brightness:.6f}", f"{s.avg_gradient:.6f}",
                                 f"{s.smd2:.8f}", int(i in keep)])
        os.replace(tmp, out)
    except OSError as e:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IoError(str(e)) from e
    return 0


def cmd_dataset_build(args) -> int:
    with open(args.plan) as f:
        plan = json.load(f)
    plan = {k: v for k, v in plan.items() if k != "schema_version"}
    compose_mod.build_dataset(args.gt, plan, args.out, args.seed, jobs=args.jobs)
    _echo_config(Path(args.out), args)
    return 0


def cmd_eval(args) -> int:
    test = load_png(args.test)
    if args.metric == "niqe":
        model = niqe.NiqeModel.load(args.model)
        print(f"{niqe.niqe_score(test, model):.6f}")
        return 0
    ref = load_png(args.ref)
    if args.metric == "psnr":
        value = metrics.psnr(ref, test, peak=args.peak)
        print("inf" if math.isinf(value) else f"{value:.6f}")
    elif args.metric == "ssim":
        print(f"{metrics.ssim(ref, test):.6f}")
    else:
        print(f"{metrics.l1_loss(ref, test):.6f}")
    return 0


def cmd_niqe_fit(args) -> int:
    corpus_dir = Path(args.corpus)
    paths = sorted(corpus_dir.glob("*.png"))
    if not paths:
        raise InvalidInput(f"no PNG files in {corpus_dir}")
    corpus = [load_png(p) for p in paths]
    model = niqe.niqe_fit(corpus, patch_size=args.patch_size, sharpness_fraction=args.sharpness)
    payload = model.to_dict()
    _atomic_json(payload, Path(args.output))
    return 0


def cmd_routing_gradcheck(args) -> int:
    config = routing.RoutingConfig(num_units=args.B, top_k=args.K, dim=args.D)
    report = routing.grad_check(config, seed=args.seed, h=args.h, n_instances=args.instances)
    print(json.dumps(report, indent=2))
    return 0


def cmd_routing_demo(args) -> int:
    """Selection histograms per synthetic single-weather tag."""
    config = routing.RoutingConfig(num_units=args.B, top_k=args.K, dim=args.D)
    rng = SeededRng(args.seed, "routing-demo")
    g = rng.generator
    params = routing.RoutingParams.random(config, rng.derive("params"))
    centers = g.normal(0, 2.0, (4, config.dim))
    histograms = {}
    for c, tag in enumerate(routing.WEATHER_CLASSES):
        f_enc = centers[c] + g.normal(0, 0.1, (args.tokens, config.dim))
        fbar = routing.ksu_forward(f_enc, params)
        _, sel = routing.route(fbar, params, config)
        hist = np.bincount(sel.indices.ravel(), minlength=config.num_units)
        histograms[tag] = hist.tolist()
    print(json.dumps({"schema_version": SCHEMA_VERSION, "seed": args.seed,
                      "B": config.num_units, "K": config.top_k, "histograms": histograms}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nightweather")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("decompose", help="split an image into illumination and reflectance")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sigma", type=float, default=retinex.DEFAULT_SIGMA)
    p.add_argument("--eps", type=float, default=retinex.DEFAULT_EPS)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("synth", help="compose one degradation recipe")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--recipe", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("flare", help="add light-source flare")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--alpha", type=float, default=0.995)
    p.add_argument("--beta-base", type=float, default=0.3)
    p.add_argument("--rho-ref", type=float, default=1.0 / 64.0)
    p.add_argument("--tau", type=float, default=99.0)
    p.add_argument("--feather", type=float, default=2.0)
    p.add_argument("--apsf-size", type=int, default=21)
    p.add_argument("--apsf-sigma", type=float, default=3.0)
    p.add_argument("--apsf-gamma", type=float, default=2.5)
    p.set_defaults(func=cmd_flare)

    p = sub.add_parser("curate", help="score candidate ground truths")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--thresholds", default=None)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("dataset")
    dsub = p.add_subparsers(dest="dataset_command")
    pb = dsub.add_parser("build", help="build a labeled degradation dataset")
    pb.add_argument("--gt", required=True)
    pb.add_argument("--plan", required=True)
    pb.add_argument("--out", required=True)
    pb.add_argument("--seed", type=int, required=True)
    pb.add_argument("--jobs", type=int, default=1)
    pb.set_defaults(func=cmd_dataset_build)

    p = sub.add_parser("eval", help="image quality metrics")
    p.add_argument("metric", choices=["psnr", "ssim", "l1", "niqe"])
    p.add_argument("--ref", default=None)
    p.add_argument("--test", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--peak", type=float, default=1.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("niqe")
    nsub = p.add_subparsers(dest="niqe_command")
    pf = nsub.add_parser("fit", help="fit a pristine NIQE model")
    pf.add_argument("--corpus", required=True)
    pf.add_argument("--out", dest="output", required=True)
    pf.add_argument("--patch-size", type=int, default=96)
    pf.add_argument("--sharpness", type=float, default=0.75)
    pf.set_defaults(func=cmd_niqe_fit)

    p = sub.add_parser("routing")
    rsub = p.add_subparsers(dest="routing_command")
    pg = rsub.add_parser("gradcheck", help="verify analytic gradients")
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--B", type=int, default=25)
    pg.add_argument("--K", type=int, default=10)
    pg.add_argument("--D", type=int, default=16)
    pg.add_argument("--h", type=float, default=1e-5)
    pg.add_argument("--instances", type=int, default=1)
    pg.set_defaults(func=cmd_routing_gradcheck)
    pd = rsub.add_parser("demo", help="selection histograms per weather tag")
    pd.add_argument("--seed", type=int, default=0)
    pd.add_argument("--B", type=int, default=25)
    pd.add_argument("--K", type=int, default=10)
    pd.add_argument("--D", type=int, default=16)
    pd.add_argument("--tokens", type=int, default=32)
    pd.set_defaults(func=cmd_routing_demo)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 1
    if args.command == "eval" and args.metric != "niqe" and args.ref is None:
        print("eval: --ref is required for psnr/ssim/l1", file=sys.stderr)
        return 1
    if args.command == "eval" and args.metric == "niqe" and args.model is None:
        print("eval niqe: --model is required", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except IoError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 2
    except (InvalidInput, ValueError, FileNotFoundError, json.JSONDecodeError) as e:
        if isinstance(e, FileNotFoundError):
            print(f"I/O error: {e}", file=sys.stderr)
            return 2
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
