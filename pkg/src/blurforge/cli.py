"""Command-line entry point: ``blurforge <subcommand> ...``.

Exit status is 0 on success, 1 on invalid input or usage, 2 on I/O failure.
JSON goes to stdout with floats written at full (round-trip) precision.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bezier_encode import render_heatmap_viz
from .blur_synth import SynthConfig, compose_blur, dense_trajectory_fit, deltas_to_meta
from .camera_geom import CameraIntrinsics
from .dataset_pipeline import DatasetConfig, generate_dataset, validate_manifest
from .errors import BlurforgeError
from .images import load_image, save_heatmap, save_image, save_mask
from .imu_ingest import ExposureWindow, constant_rate_deltas, integrate_window, parse_gyro_log, write_gyro_log
from .metrics_eval import evaluate_endpoints, parse_annotations, psnr, ssim
from .motion import MotionSpec, random_smooth_motion, sample_gyro
from .trajectory import trace_grid

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str, n: int | None = None) -> tuple:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _point(text):
    return _floats(text, 2)


def _vec3(text):
    return _floats(text, 3)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- shared option groups ------------------------------------------------------

def _add_intrinsics(p, need_size: bool):
    g = p.add_argument_group("intrinsics")
    g.add_argument("--intrinsics", type=Path, help="JSON file with fx, fy, cx, cy, width, height")
    g.add_argument("--focal", type=float, help="focal length in pixels (fx; fy too unless --fy)")
    g.add_argument("--fy", type=float)
    g.add_argument("--cx", type=float)
    g.add_argument("--cy", type=float)
    if need_size:
        g.add_argument("--width", type=int, default=640)
        g.add_argument("--height", type=int, default=480)


def _intrinsics(args, width=None, height=None) -> CameraIntrinsics:
    if args.intrinsics is not None:
        k = CameraIntrinsics.from_dict(json.loads(args.intrinsics.read_text()))
        if width is not None and (k.width, k.height) != (width, height):
            k = CameraIntrinsics.centered(k.fx, width, height, fy=k.fy)
        return k
    if args.focal is None:
        raise UsageError("either --intrinsics or --focal is required")
    w = width if width is not None else args.width
    h = height if height is not None else args.height
    k = CameraIntrinsics.centered(args.focal, w, h, fy=args.fy)
    if args.cx is not None or args.cy is not None:
        cx = k.cx if args.cx is None else args.cx
        cy = k.cy if args.cy is None else args.cy
        k = CameraIntrinsics(k.fx, k.fy, cx, cy, w, h)
    return k


def _add_motion(p):
    g = p.add_argument_group("motion (gyro log window, or constant rates)")
    g.add_argument("--gyro-log", type=Path, help="gyro CSV: t,wx,wy,wz")
    g.add_argument("--t-start", type=float, default=0.0, help="exposure start in seconds")
    g.add_argument("--tau", type=float, default=0.03, help="exposure time in seconds")
    g.add_argument("--pitch-rate", type=float, default=0.0, help="rad/s about x")
    g.add_argument("--yaw-rate", type=float, default=0.0, help="rad/s about y")
    g.add_argument("--roll-rate", type=float, default=0.0, help="rad/s about z")
    g.add_argument("--intervals", type=int, default=6, help="gyro intervals for constant rates")


def _deltas(args):
    window = ExposureWindow(args.t_start, args.tau)
    if args.gyro_log is not None:
        with open(args.gyro_log, "rb") as fh:
            samples = parse_gyro_log(fh)
        return window, integrate_window(samples, window)
    if args.intervals < 1:
        raise UsageError("--intervals must be >= 1")
    omega = (args.pitch_rate, args.yaw_rate, args.roll_rate)
    return window, constant_rate_deltas(omega, args.tau, args.intervals, args.t_start)


def _add_synth_tuning(p):
    p.add_argument("--n-cap", type=int, default=SynthConfig.n_cap)
    p.add_argument("--fit-tol", type=float, default=SynthConfig.fit_tol)
    p.add_argument("--d-max", type=float, default=SynthConfig.d_max)


def _synth_config(args) -> SynthConfig:
    return SynthConfig(n_cap=args.n_cap, fit_tol=args.fit_tol, d_max=args.d_max)


# -- subcommands -----------------------------------------------------------------

def cmd_trace(args):
    k = _intrinsics(args)
    window, deltas = _deltas(args)
    trajs = trace_grid(np.array(args.point, dtype=float), deltas, k)
    _emit({
        "intrinsics": k.to_dict(),
        "window": {"t_start": window.t_start, "tau": window.tau},
        "deltas": deltas_to_meta(deltas),
        "trajectories": [t.to_dict() for t in trajs],
    })


def cmd_synth(args):
    linear = not args.no_linearize
    sharp = load_image(args.image, linearize=linear)
    k = _intrinsics(args, sharp.shape[1], sharp.shape[0])
    window, deltas = _deltas(args)
    comp = compose_blur(sharp, deltas, k, _synth_config(args))
    save_image(args.out, comp.blurred, linear=linear)
    if args.mask_out is not None:
        save_mask(args.mask_out, comp.contamination_mask)
    _emit({
        "blurred": str(args.out),
        "mask": None if args.mask_out is None else str(args.mask_out),
        "intrinsics": k.to_dict(),
        "window": {"t_start": window.t_start, "tau": window.tau},
        "stage_plan": comp.stage_plan.to_dict(),
        "contaminated_pixels": int(comp.contamination_mask.sum()),
        "corner_trajectories": [t.nodes.tolist() for t in comp.corner_trajs],
    })


def cmd_heatmap(args):
    k = _intrinsics(args)
    _, deltas = _deltas(args)
    fit = dense_trajectory_fit(deltas, k, _synth_config(args))
    stem = Path(args.out)
    files = {}
    for key, fld in (("hc", fit.control), ("he", fit.endpoint)):
        raw, meta = save_heatmap(stem.with_name(f"{stem.name}_{key}"), fld)
        files[key], files[key + "_meta"] = str(raw), str(meta)
    if args.viz is not None:
        img = render_heatmap_viz(fit.endpoint, args.stride)
        save_image(args.viz, img, linear=False)
        files["viz"] = str(args.viz)
    _emit({
        "files": files,
        "intrinsics": k.to_dict(),
        "fit": {"fit_tol": args.fit_tol, "n_failed": fit.n_failed, "fraction_ok": fit.fraction_ok,
                "max_deviation": float(np.max(fit.deviation))},
    })


def cmd_dataset(args):
    if args.validate is not None:
        issues = validate_manifest(args.validate)
        _emit({"manifest": str(args.validate), "issues": [i.to_dict() for i in issues]})
        return EXIT_INVALID if issues else EXIT_OK
    for name in ("backgrounds", "gyro_log", "output"):
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")
    policy = "fixed" if args.window_start else "random"
    size = (args.width, args.height)
    cfg = DatasetConfig(
        backgrounds_dir=str(args.backgrounds),
        gyro_log=str(args.gyro_log),
        intrinsics=_intrinsics(args, *size),
        output_dir=str(args.output),
        policy=policy,
        seed=args.seed,
        windows=tuple(args.window_start or ()),
        tau=args.tau,
        n_cap=args.n_cap,
        d_max=args.d_max,
        fit_tol=args.fit_tol,
        srgb_linearize=not args.no_linearize,
        workers=args.workers,
        min_displacement=args.min_displacement,
    )
    manifest = generate_dataset(cfg)
    _emit({
        "manifest": str(manifest.path),
        "entries": len(manifest.entries),
        "failed": manifest.n_failed,
        "errors": {e["id"]: e["error"] for e in manifest.entries if e.get("error")},
    })


def cmd_eval_endpoints(args):
    k = _intrinsics(args)
    with open(args.annotations, "rb") as fh:
        records = parse_annotations(fh)
    with open(args.gyro_log, "rb") as fh:
        samples = parse_gyro_log(fh)
    report = evaluate_endpoints(records, samples, k)
    _emit(report.to_dict())


def cmd_metrics(args):
    a = load_image(args.a)
    b = load_image(args.b)
    _emit({"psnr": psnr(a, b, srgb=args.srgb), "ssim": ssim(a, b, srgb=args.srgb), "srgb": args.srgb})


def cmd_simulate_gyro(args):
    if args.motion is not None:
        spec = MotionSpec.from_dict(json.loads(args.motion.read_text()))
    elif args.random_seed is not None:
        spec = random_smooth_motion(np.random.default_rng(args.random_seed), max_rate=args.max_rate)
    else:
        spec = MotionSpec(constant=args.constant)
    if args.rate <= 0 or args.duration < 0:
        raise UsageError("--rate must be positive and --duration non-negative")
    samples = sample_gyro(spec, args.t0, args.duration, args.rate, bias=args.bias)
    text = write_gyro_log(samples)
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
        _emit({"out": str(args.out), "samples": len(samples), "motion": spec.to_dict()})


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blurforge", description="Gyro-driven motion-blur synthesis toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("trace", help="trajectory of one or more pixels over an exposure")
    p.add_argument("--point", type=_point, action="append", required=True, help="u,v (repeatable)")
    _add_intrinsics(p, need_size=True)
    _add_motion(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("synth", help="blur one sharp image")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="blurred PNG")
    p.add_argument("--mask-out", type=Path, help="contamination mask PNG")
    p.add_argument("--no-linearize", action="store_true", help="treat PNG values as linear light")
    _add_intrinsics(p, need_size=False)
    _add_motion(p)
    _add_synth_tuning(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("heatmap", help="dense Bezier heatmaps (H_c, H_e) and a preview PNG")
    p.add_argument("--out", type=Path, required=True, help="output stem; writes <stem>_hc.f32 etc.")
    p.add_argument("--viz", type=Path, help="preview PNG of splatted endpoints")
    p.add_argument("--stride", type=int, default=8, help="pixel stride for the preview")
    _add_intrinsics(p, need_size=True)
    _add_motion(p)
    _add_synth_tuning(p)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("dataset", help="generate a triplet dataset, or --validate a manifest")
    p.add_argument("--backgrounds", type=Path)
    p.add_argument("--gyro-log", type=Path)
    p.add_argument("--output", type=Path)
    p.add_argument("--seed", type=int, default=0, help="seed for the random window policy")
    p.add_argument("--window-start", type=float, action="append",
                   help="fixed window start (repeatable); switches to the fixed policy")
    p.add_argument("--tau", type=float, default=0.03)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--min-displacement", type=float, default=1.0,
                   help="reject random windows whose corners move less than this (px)")
    p.add_argument("--no-linearize", action="store_true")
    p.add_argument("--validate", type=Path, metavar="MANIFEST", help="check an existing manifest")
    _add_intrinsics(p, need_size=True)
    _add_synth_tuning(p)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("eval-endpoints", help="endpoint error of annotated trajectories")
    p.add_argument("--annotations", type=Path, required=True,
                   help="CSV: record_id,u_start,v_start,u_end,v_end,t_start,tau")
    p.add_argument("--gyro-log", type=Path, required=True)
    _add_intrinsics(p, need_size=True)
    p.set_defaults(func=cmd_eval_endpoints)

    p = sub.add_parser("metrics", help="PSNR and SSIM between two images")
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)
    p.add_argument("--srgb", action="store_true", help="compare sRGB-encoded values")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("simulate-gyro", help="sample an analytic motion into a gyro CSV")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--motion", type=Path, help="motion JSON: {constant, sines: [...]}")
    src.add_argument("--random-seed", type=int, help="draw a random smooth motion")
    src.add_argument("--constant", type=_vec3, default=(0.0, 0.0, 0.0), help="wx,wy,wz in rad/s")
    p.add_argument("--max-rate", type=float, default=2.0, help="rate bound for --random-seed")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--rate", type=float, default=200.0, help="samples per second")
    p.add_argument("--bias", type=_vec3, help="constant bias added to every sample")
    p.add_argument("--out", type=Path, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_simulate_gyro)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args)
    except UsageError as exc:
        print(f"blurforge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BlurforgeError, ValueError) as exc:
        if isinstance(exc, OSError):
            print(f"blurforge {args.command}: I/O error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"blurforge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"blurforge {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())
