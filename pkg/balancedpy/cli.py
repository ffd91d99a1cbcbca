import argparse
import json
import sys
from dataclasses import replace
from balancedpy.exceptions import BalancedError, ConfigError, DegenerateFamily
from balancedpy.experiment import ExperimentConfig, emit_weights_figure_data, load_config, run_experiment
from balancedpy.family import orthonormalize, parse_family
from balancedpy.measure import make_rng, parse_measure
from balancedpy.sampler_bss import BssConfig, dump_trace, run_bss_procedure
from balancedpy.sampler_iid import calibrate_c1
from balancedpy.tools import format_cell, to_serializable

RUN_FLAGS = {
    "--family": dict(type=str, help="monomial, chebyshev, legendre, indicator, fourier:<f1>,<f2> or file:<path>"),
    "--degree": dict(type=int, help="polynomial degree, dimension is degree + 1"),
    "--dist": dict(type=str, help="reference measure, e.g. uniform-grid:1001"),
    "--sampler": dict(type=str, help="uniform, leverage, bss or iid:<measure>"),
    "--epsilon": dict(type=float, help="target accuracy in (0, 1)"),
    "--noise": dict(type=str, help="zero, gauss:<sigma> or adversarial:<preset>"),
    "--trials": dict(type=int, help="number of Monte-Carlo trials"),
    "--seed": dict(type=int, help="base seed, falls back to ACTIVE_SAMPLER_SEED then 0"),
    "--jobs": dict(type=int, help="worker processes"),
    "--out": dict(type=str, help="trial CSV path, the summary JSON goes next to it"),
    "--mode": dict(type=str, choices=["query", "active", "sparseft"], help="experiment mode"),
    "--solver": dict(type=str, choices=["direct", "taylor"], help="ERM solver"),
    "--m": dict(type=int, help="fixed sample size for i.i.d. samplers and sparseft"),
    "--m0": dict(type=int, help="unlabeled draws in active mode"),
    "--C": dict(type=float, help="sizing constant"),
    "--K": dict(type=float, help="condition number used to size m0"),
    "--max-attempts": dict(type=int, dest="max_attempts", help="reruns allowed until a good execution"),
}

SPARSEFT_FLAGS = {
    "--k": dict(type=int, help="sparsity, 1 or 2"),
    "--F": dict(type=float, help="frequency band limit"),
    "--T": dict(type=float, help="time window [-T, T]"),
    "--net": dict(type=float, help="frequency net spacing"),
    "--grid-size": dict(type=int, dest="grid_size", help="weight density grid size"),
}


def _add_flags(parser: argparse.ArgumentParser, flags: dict) -> None:
    for flag, kwargs in flags.items():
        parser.add_argument(flag, default=None, **kwargs)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="JSON config, overrides flags")
    parser.add_argument("--timing", action="store_true", help="write wall times into the trial CSV")
    parser.add_argument("--quiet", action="store_true", help="hide state messages and progress bars")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="balancedpy", description="active linear regression via well-balanced sampling")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="seeded Monte-Carlo trials")
    _add_flags(run, RUN_FLAGS)
    _add_flags(run, SPARSEFT_FLAGS)
    _add_common(run)

    active = sub.add_parser("active", help="trials under an unknown distribution (run --mode active)")
    _add_flags(active, {k: v for k, v in RUN_FLAGS.items() if k not in ["--mode", "--dist"]})
    active.add_argument("--dist", "--true-dist", dest="dist", type=str, default=None, help="the distribution unlabeled points come from")
    _add_common(active)

    weights = sub.add_parser("weights", help="leverage density of a family as CSV (x, density)")
    weights.add_argument("--family", type=str, default="legendre")
    weights.add_argument("--degree", type=int, default=9)
    weights.add_argument("--dist", type=str, default="uniform-grid:1001")
    weights.add_argument("--out", type=str, default=None)

    sparseft = sub.add_parser("sparseft", help="k-sparse Fourier signals")
    sparseft_sub = sparseft.add_subparsers(dest="sparseft_command", required=True)
    sparse_weights = sparseft_sub.add_parser("weights", help="importance density as CSV (x, density)")
    sparse_weights.add_argument("--k", type=int, default=1)
    sparse_weights.add_argument("--out", type=str, default=None)
    recover = sparseft_sub.add_parser("recover", help="recovery trials (run --mode sparseft)")
    _add_flags(recover, {k: v for k, v in RUN_FLAGS.items() if k in ["--epsilon", "--noise", "--trials", "--seed", "--jobs", "--out", "--m", "--C"]})
    _add_flags(recover, SPARSEFT_FLAGS)
    _add_common(recover)

    calibrate = sub.add_parser("calibrate", help="smallest C1 reaching a good-execution rate")
    calibrate.add_argument("--family", type=str, default="legendre")
    calibrate.add_argument("--degree", type=int, default=9)
    calibrate.add_argument("--dist", type=str, default="uniform-grid:1001")
    calibrate.add_argument("--sampling-dist", dest="sampling_dist", type=str, default=None, help="D', defaults to --dist")
    calibrate.add_argument("--target", type=float, default=0.9)
    calibrate.add_argument("--epsilon", type=float, default=0.25)
    calibrate.add_argument("--trials", type=int, default=100)
    calibrate.add_argument("--seed", type=int, default=0)
    calibrate.add_argument("--quiet", action="store_true")

    trace = sub.add_parser("trace", help="one BSS run, per-round JSON lines")
    trace.add_argument("--family", type=str, default="legendre")
    trace.add_argument("--degree", type=int, default=9)
    trace.add_argument("--dist", type=str, default="uniform-grid:1001")
    trace.add_argument("--epsilon", type=float, default=0.25)
    trace.add_argument("--seed", type=int, default=0)
    trace.add_argument("--out", type=str, required=True)
    trace.add_argument("--quiet", action="store_true")

    return parser


def config_from_args(args: argparse.Namespace, mode: str = None) -> ExperimentConfig:
    """Defaults, then the flags that were given, then --config"""

    overrides = {}
    for name in ExperimentConfig.__dataclass_fields__:
        value = getattr(args, name, None)
        if value is not None and name != "timing":
            overrides[name] = value
    if getattr(args, "timing", False):
        overrides["timing"] = True
    if mode is not None:
        overrides["mode"] = mode

    config = replace(ExperimentConfig(), **overrides)
    if getattr(args, "config", None) is not None:
        config = load_config(args.config, base=config)
    return config.validate()


def _run(args, mode=None) -> int:
    config = config_from_args(args, mode)
    summary = run_experiment(config, quiet=args.quiet)
    if config.out is None:
        print(json.dumps(to_serializable(summary), indent=2, sort_keys=True))
    return 0


def _calibrate(args) -> int:
    fam = orthonormalize(parse_family(args.family, args.degree), parse_measure(args.dist))
    D_prime = fam.measure if args.sampling_dist is None else parse_measure(args.sampling_dist)
    c1 = calibrate_c1(fam, D_prime, args.target, args.epsilon, args.trials, seed=args.seed, quiet=args.quiet)
    print(json.dumps({"C1": c1, "target": args.target, "epsilon": args.epsilon, "trials": args.trials}, indent=2, sort_keys=True))
    return 0


def _trace(args) -> int:
    fam = orthonormalize(parse_family(args.family, args.degree), parse_measure(args.dist))
    rows = []
    S_w = run_bss_procedure(fam, args.epsilon, BssConfig(args.epsilon, fam.dimension), make_rng(args.seed), rows, args.quiet)
    dump_trace(rows, args.out)
    if not args.quiet:
        print("rounds: {}, gap: {:.4g}".format(S_w.info["rounds"], S_w.info["gap"]))
    return 0


def _print_table(table: tuple, out: str) -> None:
    if out is None:
        print("x,density")
        for x, density in zip(*table):
            print("{},{}".format(format_cell(x), format_cell(density)))


def main(argv: list = None) -> int:
    """Entry point of the balancedpy command; returns the exit code"""

    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        elif args.command == "active":
            return _run(args, mode="active")
        elif args.command == "weights":
            _print_table(emit_weights_figure_data(args.family, args.out, dist=args.dist, degree=args.degree), args.out)
            return 0
        elif args.command == "sparseft":
            if args.sparseft_command == "weights":
                _print_table(emit_weights_figure_data(args.k, args.out), args.out)
                return 0
            return _run(args, mode="sparseft")
        elif args.command == "calibrate":
            return _calibrate(args)
        elif args.command == "trace":
            return _trace(args)
    except ConfigError as e:
        print("error: {}".format(e), file=sys.stderr)
        return 2
    except DegenerateFamily as e:
        print("error: {}".format(e), file=sys.stderr)
        print("hint: the sample does not support the family, try a larger --m0 or a smaller --degree", file=sys.stderr)
        return 1
    except BalancedError as e:
        print("error: {}".format(e), file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print("error: {}".format(e), file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
