"""Command line entry point: ``knntwosample <subcommand> [flags]``.

Results go to stdout as ``key=value`` lines (or CSV for grid runs); the
resolved configuration and progress go to stderr. Exit status is 0 on
success, 2 for invalid input and 3 when a numerical computation fails.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import NumericalError, ValidationError
from .experiments import emit_csv, estimate_power, make_family, parse_plan, parse_value, plan_values
from .sampling import SampleDesign, read_labeled_csv, sample_poissonized, write_labeled_csv
from .statistic import TestConfig, null_variance_sigma0, run_test
from .theory import (
    classify_regime,
    coeff_a,
    coeff_b,
    phase_transition_dimension,
    predicted_power_one_sided,
    predicted_power_two_sided,
)

SEED_ENV = "KNNTWOSAMPLE_SEED"
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

__all__ = ["main", "build_parser", "SEED_ENV"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _formatter(prog):
    # fixed width keeps --help output independent of the terminal
    return argparse.HelpFormatter(prog, width=88, max_help_position=30)


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _emit(pairs, stream=None):
    stream = stream or sys.stdout
    for key, value in pairs:
        print(f"{key}={_fmt(value)}", file=stream)


def _echo_config(name, values: dict):
    body = " ".join(f"{k}={_fmt(v)}" for k, v in values.items())
    print(f"# {name}: {body}", file=sys.stderr)


def _resolve_seed(flag: Optional[int], fallback: Optional[int] = None) -> int:
    if flag is not None:
        return flag
    if fallback is not None:
        return fallback
    env = os.environ.get(SEED_ENV)
    if env is None or not env.strip():
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValidationError(f"{SEED_ENV} must be an integer; got {env!r}") from None


def _float_list(text):
    value = parse_value(text)
    values = value if isinstance(value, list) else [value]
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def _int_list(text):
    values = _float_list(text)
    if any(v != int(v) for v in values):
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}")
    return [int(v) for v in values]


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return value


# -- subcommands -----------------------------------------------------------


def cmd_test(args) -> int:
    design = None
    if (args.n1 is None) != (args.n2 is None):
        raise ValidationError("--n1 and --n2 go together")
    if args.n1 is not None:
        design = SampleDesign(args.n1, args.n2)
    labeled = read_labeled_csv(args.input, design)
    config = TestConfig(args.k, args.alpha, args.side)
    _echo_config("test", {"input": args.input, "k": config.k, "alpha": config.alpha,
                          "side": config.side, "n1": labeled.design.n1,
                          "n2": labeled.design.n2})
    outcome = run_test(labeled, config).as_dict()
    record = {"T": outcome.pop("t_stat"), "R": outcome.pop("r_stat")}
    for key in ("p_value", "decision", "k", "alpha", "side"):
        record[key] = outcome.pop(key)
    record.update(outcome)
    _emit(record.items())
    return EXIT_OK


def cmd_sample(args) -> int:
    seed = _resolve_seed(args.seed)
    family = make_family(args.family, args.d)
    theta1 = np.atleast_1d(args.theta)
    if args.theta2 is not None:
        theta2 = np.atleast_1d(args.theta2)
    else:
        n = args.n1 + args.n2
        theta2 = theta1 + np.atleast_1d(args.h) * (n ** args.b if args.b is not None else 0.0)
    _echo_config("sample", {"family": args.family, "d": args.d, "n1": args.n1, "n2": args.n2,
                            "theta1": theta1.tolist(), "theta2": theta2.tolist(),
                            "seed": seed, "output": args.output})
    design = SampleDesign(args.n1, args.n2)
    labeled = sample_poissonized(design, family.at(theta1), family.at(theta2), seed)
    write_labeled_csv(labeled, args.output)
    _emit([("output", args.output), ("n_points", len(labeled)),
           ("n_label1", int(np.sum(labeled.labels == 1))),
           ("n_label2", int(np.sum(labeled.labels == 2)))])
    return EXIT_OK


def cmd_theory(args) -> int:
    seed = _resolve_seed(args.seed)
    family = make_family(args.family, args.d)
    _echo_config("theory", {"family": args.family, "d": args.d, "theta": args.theta,
                            "h": args.h, "p": args.p, "gamma": args.gamma, "b": args.b,
                            "alpha": args.alpha, "beta": args.beta, "method": args.method,
                            "seed": seed})
    a = coeff_a(family, args.theta, args.h, args.p, seed=seed)
    b = coeff_b(family, args.theta, args.h, args.p, method=args.method, seed=seed)
    out = [("a", a.value), ("a_stderr", a.stderr), ("b", b.value), ("b_stderr", b.stderr),
           ("b_method", b.method), ("sigma0_sq", null_variance_sigma0(args.p))]
    if args.gamma is not None:
        out.append(("d_t", phase_transition_dimension(args.gamma)))
        if args.b is not None:
            report = classify_regime(args.d, args.gamma, args.b)
            out += [("case", report.case), ("lower_threshold", str(report.lower_threshold)),
                    ("upper_threshold", str(report.upper_threshold)),
                    ("regime", report.regime)]
            for side, predict in (("one", predicted_power_one_sided),
                                  ("two", predicted_power_two_sided)):
                pred = predict((a.value, b.value), report, args.alpha, args.beta)
                out += [(f"power_{side}", pred.value if pred.value is not None else pred.label),
                        (f"power_{side}_formula", pred.formula)]
        else:
            out.append(("regime", "none (pass --b)"))
    _emit(out)
    return EXIT_OK


_PLAN_FLAGS = ("family", "theta1", "h", "b_values", "k_values", "delta_values", "n1", "n2",
               "d", "alpha", "sides", "replicates", "seed")


def _plan_from_args(args, command):
    overrides = {name: getattr(args, name, None) for name in _PLAN_FLAGS}
    text = ""
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
    plan_seed = plan_values(text).get("seed")
    overrides["seed"] = _resolve_seed(args.seed, None if plan_seed is None else int(plan_seed))
    if command == "curve":
        if overrides["delta_values"] is not None:
            raise ValidationError("curve takes --k; use heatmap for a delta grid")
    plan = parse_plan(text, overrides)
    if command == "curve" and plan.k_values is None:
        raise ValidationError("curve needs an explicit k list")
    if command == "heatmap" and plan.delta_values is None:
        raise ValidationError("heatmap needs a delta list")
    _echo_config(command, {f: getattr(plan, f) for f in plan.__dataclass_fields__})
    return plan


def cmd_power(args) -> int:
    plan = _plan_from_args(args, "power")
    if len(plan.b_values) * len(plan.schedule) != 1:
        raise ValidationError("power runs a single cell; give one b and one k or delta")
    surface = estimate_power(plan, threads=args.threads, progress=args.progress)
    out = []
    for side, x, b in surface.keys():
        est = surface.cells[(side, x, b)]
        lo, hi = est.ci
        out += [(f"{side}.k", surface.k_for(x)), (f"{side}.b", b), (f"{side}.reps", est.reps),
                (f"{side}.rejects", est.rejects), (f"{side}.failures", est.failures),
                (f"{side}.power", est.power), (f"{side}.ci_lo", lo), (f"{side}.ci_hi", hi)]
    _emit(out)
    return EXIT_OK


def cmd_grid(args) -> int:
    plan = _plan_from_args(args, args.command)
    surface = estimate_power(plan, threads=args.threads, progress=args.progress)
    if args.output in (None, "-"):
        emit_csv(surface, sys.stdout)
    else:
        emit_csv(surface, args.output)
        _emit([("output", args.output), ("cells", len(surface.cells))])
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftests

    results = run_selftests(seed=_resolve_seed(args.seed))
    _emit((name, "pass" if ok else "fail") for name, ok in results)
    return EXIT_OK if all(ok for _, ok in results) else EXIT_NUMERIC


# -- parser ----------------------------------------------------------------


def _add_common(p, seed=True):
    if seed:
        p.add_argument("--seed", type=int, default=None,
                       help=f"master seed (default: ${SEED_ENV}, else 0)")


def _add_plan_flags(p, grid_flag):
    p.add_argument("--config", metavar="PATH",
                   help="plan file of key = value lines; flags override its values")
    p.add_argument("--family", help="parametric family (default sph-normal)")
    p.add_argument("--d", type=_positive_int, help="dimension")
    p.add_argument("--theta", dest="theta1", type=_float_list, help="base parameter theta1")
    p.add_argument("--h", type=_float_list, help="direction of the deviation")
    p.add_argument("--n1", type=_positive_int, help="expected size of sample 1")
    p.add_argument("--n2", type=_positive_int, help="expected size of sample 2")
    p.add_argument("--b", dest="b_values", type=_float_list,
                   help="deviation exponent(s): list, [..] or linspace(lo,hi,n)")
    if grid_flag in ("k", "both"):
        p.add_argument("--k", dest="k_values", type=_int_list, help="neighbor count(s)")
    if grid_flag in ("delta", "both"):
        p.add_argument("--delta", dest="delta_values", type=_float_list,
                       help="neighbor exponent(s); k = round(N^delta)")
    p.add_argument("--alpha", type=float, help="test level (default 0.1)")
    p.add_argument("--sides", type=lambda s: [x.strip() for x in s.split(",")],
                   help="comma list of one, two, conditional (default one,two)")
    p.add_argument("--reps", dest="replicates", type=_positive_int,
                   help="replicates per cell (default 500)")
    _add_common(p)
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker processes (default: available CPUs)")
    p.add_argument("--progress", action="store_true", help="report progress on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="knntwosample", formatter_class=_formatter,
                     description="Two-sample testing with growing-k nearest-neighbor graphs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("test", help="run a two-sample test on a labeled CSV",
                       formatter_class=_formatter,
                       description="Test whether the two labeled samples in a CSV "
                                   "(columns x1..xd,label) share a distribution.")
    p.add_argument("--input", required=True, metavar="PATH", help="CSV with x1..xd,label")
    p.add_argument("--k", required=True, type=_positive_int, help="neighbors per point")
    p.add_argument("--alpha", type=float, default=0.05, help="test level (default 0.05)")
    p.add_argument("--side", choices=("one", "two"), default="one",
                   help="one: reject for few cross edges; two: reject for |R| large")
    p.add_argument("--n1", type=_positive_int, help="design size of sample 1 (default: count)")
    p.add_argument("--n2", type=_positive_int, help="design size of sample 2 (default: count)")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("sample", help="draw a Poissonized labeled sample",
                       formatter_class=_formatter,
                       description="Draw Poisson(N1+N2) points from N1 f + N2 g and write "
                                   "them as CSV.")
    p.add_argument("--family", default="sph-normal", help="parametric family")
    p.add_argument("--d", type=_positive_int, required=True, help="dimension")
    p.add_argument("--n1", type=_positive_int, required=True, help="expected size of sample 1")
    p.add_argument("--n2", type=_positive_int, required=True, help="expected size of sample 2")
    p.add_argument("--theta", type=_float_list, required=True, help="parameter of f")
    p.add_argument("--theta2", type=_float_list, help="parameter of g (default: --theta)")
    p.add_argument("--h", type=_float_list, default=[0.0], help="g uses theta + h N^b")
    p.add_argument("--b", type=float, help="deviation exponent for --h")
    p.add_argument("--output", required=True, metavar="PATH", help="CSV to write")
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("theory", help="coefficients, thresholds and predicted power",
                       formatter_class=_formatter,
                       description="Local-power coefficients a and b, the phase-transition "
                                   "dimension and, with --b, the regime and limiting power.")
    p.add_argument("--family", default="sph-normal", help="parametric family")
    p.add_argument("--d", type=_positive_int, required=True, help="dimension")
    p.add_argument("--theta", type=_float_list, required=True, help="base parameter theta1")
    p.add_argument("--h", type=_float_list, required=True, help="direction of the deviation")
    p.add_argument("--p", type=float, required=True, help="proportion N1/N of sample 1")
    p.add_argument("--gamma", type=float, help="neighbor exponent, k = N^gamma")
    p.add_argument("--b", type=float, help="deviation exponent, theta_N - theta1 = h N^b")
    p.add_argument("--alpha", type=float, default=0.1, help="test level (default 0.1)")
    p.add_argument("--beta", type=float, help="boundary constant for the N^(-1/4) case")
    p.add_argument("--method", choices=("auto", "closed", "numeric"), default="auto",
                   help="how to evaluate b (default auto: closed form when known)")
    _add_common(p)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("power", help="Monte-Carlo power of a single cell",
                       formatter_class=_formatter,
                       description="Estimate rejection rates at one (k or delta, b) cell.")
    _add_plan_flags(p, "both")
    p.set_defaults(func=cmd_power)

    for name, grid, text in (("curve", "k", "power over a b grid for each k"),
                             ("heatmap", "delta", "power over a (b, delta) grid")):
        p = sub.add_parser(name, help=text, formatter_class=_formatter,
                           description=f"Estimate {text} and write CSV.")
        _add_plan_flags(p, grid)
        p.add_argument("--output", metavar="PATH", help="CSV to write (default stdout)")
        p.set_defaults(func=cmd_grid)

    p = sub.add_parser("selftest", help="run built-in oracle checks",
                       formatter_class=_formatter,
                       description="Check the implementation against independent oracles.")
    _add_common(p)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"knntwosample: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"knntwosample: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"knntwosample: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
