"""Command-line interface.

Subcommands:

* ``gen``         write a synthetic test image
* ``register``    register a moving image onto a fixed one
* ``asymmetry``   optimum-offset asymmetry sweep
* ``scales``      similarity-vs-offset curves over the scale grids
* ``jointreport`` joint densities of both argument orders and their divergence
* ``bench``       evaluation-speed benchmark against the flop model
* ``plot``        render experiment CSV artifacts to PNG

Heavy imports happen after argument parsing so that ``--threads`` can pin
the BLAS/OpenMP pool sizes before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _add_common(parser):
    parser.add_argument("--config", help="JSON file with experiment settings")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS/OpenMP thread count (set before numpy loads)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lorreg",
        description="Locally orderless registration toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic test image")
    p.add_argument("--kind", choices=("blob", "gradient", "random"),
                   default="blob")
    p.add_argument("--dims", default="64,64", help="comma-separated grid size")
    p.add_argument("--std", type=float, default=8.0, help="blob std (voxels)")
    p.add_argument("--direction", default="1,0",
                   help="gradient direction components")
    p.add_argument("--sigma", type=float, default=2.0,
                   help="random-field smoothing")
    p.add_argument("--output", required=True, help="output image path (.img)")
    _add_common(p)

    p = sub.add_parser("register", help="register moving onto fixed")
    p.add_argument("--moving", required=True)
    p.add_argument("--fixed", required=True)
    p.add_argument("--measure", default="nmi")
    p.add_argument("--estimator", choices=("pw", "gpv"), default="pw")
    p.add_argument("--transform",
                   choices=("translation", "rigid", "bspline_ffd"),
                   default="translation")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--control-shape", default=None,
                   help="FFD control grid, e.g. 4,4")
    p.add_argument("--output", default="result.json")
    _add_common(p)

    for name, helptext in (
            ("asymmetry", "optimum-offset asymmetry sweep"),
            ("scales", "similarity curves over the scale grids"),
            ("jointreport", "joint densities and their divergence"),
            ("bench", "evaluation-speed benchmark")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)

    p = sub.add_parser("plot", help="render CSV artifacts to PNG")
    p.add_argument("--input", required=True, help="CSV file or directory")
    _add_common(p)
    return parser


def _pin_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _parse_ints(text):
    return tuple(int(v) for v in text.split(","))


def _experiment_config(args):
    from .experiments import ExperimentConfig

    overrides = {"experiment": args.command}
    if args.seed is not None:
        overrides["seed"] = args.seed
    return ExperimentConfig.from_json(args.config, **overrides)


def _cmd_gen(args):
    import numpy as np

    from .grid import save_image
    from .synth import gaussian_blob, linear_gradient, smooth_random_field

    dims = _parse_ints(args.dims)
    if args.kind == "blob":
        img = gaussian_blob(dims, std=args.std)
    elif args.kind == "gradient":
        direction = np.array([float(v) for v in args.direction.split(",")])
        img = linear_gradient(dims, direction)
    else:
        img = smooth_random_field(dims, sigma=args.sigma,
                                  seed=args.seed or 0)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    save_image(img, args.output)
    print(f"wrote {args.output} dims={dims}")
    return 0


def _cmd_register(args):
    from .grid import load_image
    from .kernels import ScaleTriple
    from .measures import MeasureSpec
    from .objective import ObjectiveConfig
    from .registration import register, save_result
    from .transforms import make_transform

    moving = load_image(args.moving)
    fixed = load_image(args.fixed)
    alpha = args.alpha if args.estimator == "gpv" else float("inf")
    config = ObjectiveConfig(
        measure=MeasureSpec(args.measure),
        scales=ScaleTriple(args.sigma, args.beta, alpha),
        estimator=args.estimator,
        bins=args.bins,
    )
    control = _parse_ints(args.control_shape) if args.control_shape else None
    init = make_transform(args.transform, fixed.dims, control_shape=control)
    result = register(config, moving, fixed, init, max_iter=args.max_iter)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    save_result(result, config, args.output)
    print(f"final value {result.value:.6g} "
          f"({result.trace.termination}, {len(result.trace.values) - 1} iterations)")
    print(f"wrote {args.output}")
    return 0


def _cmd_experiment(args):
    from . import experiments

    runner = {
        "asymmetry": experiments.run_asymmetry_sweep,
        "scales": experiments.run_scale_sweep,
        "jointreport": experiments.run_joint_density_report,
        "bench": experiments.run_bench,
    }[args.command]
    path = runner(_experiment_config(args), args.out)
    print(f"wrote {path}")
    return 0


def _cmd_plot(args):
    from .plots import emit_plots

    produced = emit_plots(args.input, args.out)
    for p in produced:
        print(f"wrote {p}")
    return 0 if produced else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None):
        _pin_threads(args.threads)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "register":
            return _cmd_register(args)
        if args.command == "plot":
            return _cmd_plot(args)
        return _cmd_experiment(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
