"""Command-line interface: ``delaysys <command> ...``.

Exit codes: 0 success, 2 usage error, 3 data or validation error,
4 numerical failure.  Errors are reported as a single line on stderr::

    error: code=3 kind=data type=RtdsError msg=...
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import gramians, h2_norm
from .balancing import (balanced_realization, balanced_truncation, load_info, save_info,
                        write_hsv_csv)
from .benchmarks import (SWEEP_SIZES_GRAM, SWEEP_SIZES_H2, registry, run_benchmark,
                         scaling_exponent, timing_sweep, write_timing_csv)
from .core import QuadOptions, load_rtds, random_rtds, save_rtds
from .freqresp import freq_grid, write_bode_csv, write_freqresp_csv, write_sigma_csv
from .quadrature import evaluation_count
from .simulation import settled_step_response, step_response, write_step_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def _human(x) -> str:
    return f"{x:.5g}"


def _machine(x) -> str:
    return f"{x:.17g}"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _report(EXIT_USAGE, "usage", "ArgumentError", f"{self.prog}: {message}")
        raise SystemExit(EXIT_USAGE)


def _report(code, kind, type_name, message):
    msg = " ".join(str(message).split())
    print(f"error: code={code} kind={kind} type={type_name} msg={msg}", file=sys.stderr)


# ----------------------------------------------------------- flag types

def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0 or math.isinf(value):
        raise argparse.ArgumentTypeError(f"must be positive and finite: {text!r}")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {text!r}")
    return value


def _nonneg_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative: {text!r}")
    return value


def _limit(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if math.isnan(value) or value < 0:
        raise argparse.ArgumentTypeError(f"frequency limits must be >= 0: {text!r}")
    return value


def _param(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, float(value) if any(c in value for c in ".eE") else int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value of {key} is not a number: {value!r}") from None


# --------------------------------------------------------------- parser

def _quad_parent():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("quadrature options")
    g.add_argument("--sparse", action="store_true",
                   help="factor sI - A(s) as a sparse matrix at each frequency")
    g.add_argument("--rel-tol", type=_positive_float, default=1e-6, metavar="R",
                   help="relative tolerance (default: %(default)g)")
    g.add_argument("--abs-tol", type=_positive_float, default=1e-10, metavar="A",
                   help="absolute tolerance (default: %(default)g)")
    g.add_argument("--freq-int", type=_limit, nargs=2, default=None, metavar=("LO", "HI"),
                   help="integrate over LO <= |w| <= HI only; HI may be 'inf'")
    return p


def _grid_args(p):
    p.add_argument("--wmin", type=_positive_float, default=1e-2, help="lowest frequency in rad/s (default: %(default)g)")
    p.add_argument("--wmax", type=_positive_float, default=1e2, help="highest frequency in rad/s (default: %(default)g)")
    p.add_argument("--points", type=_positive_int, default=400,
                   help="number of log-spaced frequencies (default: %(default)d)")
    p.add_argument("-o", "--output", metavar="CSV", help="output CSV (default: standard output)")
    p.add_argument("--plot", metavar="FILE", help="also render a figure (format from the extension)")


def build_parser() -> argparse.ArgumentParser:
    quad = _quad_parent()
    parser = _Parser(prog="delaysys",
                     description="Analysis and model reduction of linear systems with state, input and output delays.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads for frequency sweeps "
                             "(default: $DELAYSYS_THREADS or all cores)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("h2", parents=[quad], help="H2 norm", description="Compute the H2 norm of a system.")
    p.add_argument("system", help="system JSON file")
    p.add_argument("--format", choices=("text", "json"), default="text",
                   help="text (5 significant digits) or json (full precision)")

    p = sub.add_parser("gram", parents=[quad], help="gramians", description="Compute controllability and/or observability gramians.")
    p.add_argument("system", help="system JSON file")
    p.add_argument("--which", choices=("co", "c", "o"), default="co",
                   help="c: controllability, o: observability, co: both (default)")
    p.add_argument("-o", "--output", metavar="FILE",
                   help="write gramians to FILE; JSON if it ends in .json, CSV otherwise")

    p = sub.add_parser("balreal", parents=[quad], help="balanced realization",
                       description="Balance a system and store the transformation.")
    p.add_argument("system", help="system JSON file")
    p.add_argument("-o", "--output", required=True, metavar="JSON", help="balanced system file")
    p.add_argument("--info", metavar="JSON", help="write the balancing info (gramians, T, T^-1, hsv)")
    p.add_argument("--hsv", metavar="CSV", help="write singular values and energy fractions")
    p.add_argument("--plot", metavar="FILE", help="bar chart of the state energy fractions")

    p = sub.add_parser("balred", parents=[quad], help="balanced truncation",
                       description="Reduce a system by (frequency-limited) balanced truncation.")
    p.add_argument("system", help="system JSON file")
    p.add_argument("--order", type=_positive_int, required=True, help="reduced state dimension")
    p.add_argument("-o", "--output", required=True, metavar="JSON", help="reduced system file")
    p.add_argument("--info", metavar="JSON",
                   help="balancing info: reused when the file exists, written otherwise")
    p.add_argument("--hsv", metavar="CSV", help="write singular values and energy fractions")
    p.add_argument("--plot", metavar="FILE",
                   help="singular value plot of full and reduced systems")

    p = sub.add_parser("bode", help="Bode data", description="Magnitude and phase on a log grid.")
    p.add_argument("systems", nargs="+", metavar="system", help="system JSON file(s)")
    _grid_args(p)
    p.add_argument("--complex", action="store_true",
                   help="write raw real and imaginary parts instead of magnitude and phase")

    p = sub.add_parser("sigma", help="singular value data", description="Singular values of G(jw) on a log grid.")
    p.add_argument("systems", nargs="+", metavar="system", help="system JSON file(s)")
    _grid_args(p)

    p = sub.add_parser("step", help="step response", description="Unit step responses from zero history.")
    p.add_argument("systems", nargs="+", metavar="system", help="system JSON file(s), overlaid in one CSV")
    p.add_argument("--tfinal", type=_positive_float, default=None,
                   help="end time (default: extend until the response settles)")
    p.add_argument("--points", type=_positive_int, default=501, help="output samples (default: %(default)d)")
    p.add_argument("--rel-tol", type=_positive_float, default=1e-8, metavar="R",
                   help="integrator relative tolerance (default: %(default)g)")
    p.add_argument("--abs-tol", type=_positive_float, default=1e-10, metavar="A",
                   help="integrator absolute tolerance (default: %(default)g)")
    p.add_argument("-o", "--output", metavar="CSV", help="output CSV (default: standard output)")
    p.add_argument("--plot", metavar="FILE", help="also render a figure")

    p = sub.add_parser("bench", parents=[quad], help="benchmarks and timing study",
                       description="Run a registered benchmark, list the registry, or time random systems.")
    p.add_argument("id", nargs="?", help="benchmark id (see --list)")
    p.add_argument("--task", default="h2", help="h2 or reduce:K (default: %(default)s)")
    p.add_argument("--data", metavar="JSON", help="system file for benchmarks that are not generated")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                   help="generator parameter, e.g. h=0.3 for HS or n=500 for HR2 (repeatable)")
    p.add_argument("-o", "--output", metavar="FILE",
                   help="report JSON, or the timing CSV with --sweep")
    p.add_argument("--reduced", metavar="JSON", help="with reduce:K, write the reduced system")
    p.add_argument("--list", action="store_true", help="list registered benchmarks")
    p.add_argument("--sweep", choices=("h2", "gram"), help="timing study on random systems")
    p.add_argument("--max-n", type=_positive_int, default=None,
                   help="largest size in the timing study (default: all sizes)")
    p.add_argument("--seeds", type=_positive_int, default=5, help="systems per size (default: %(default)d)")
    p.add_argument("--plot", metavar="FILE", help="timing plot for --sweep")

    p = sub.add_parser("random", help="random test system", description="Generate a random delay system.")
    p.add_argument("--n", type=_positive_int, required=True, help="state dimension")
    p.add_argument("--seed", type=_nonneg_int, required=True, help="generator seed")
    p.add_argument("-o", "--output", required=True, metavar="JSON", help="system file")
    p.add_argument("--name", default=None, help="system name (default: random-N-SEED)")
    return parser


# ------------------------------------------------------------- commands

def _opts(args) -> QuadOptions:
    interval = (0.0, math.inf)
    if args.freq_int is not None:
        interval = tuple(args.freq_int)
    return QuadOptions(abs_tol=args.abs_tol, rel_tol=args.rel_tol, sparse=args.sparse,
                       freq_interval=interval)


def _validate(args, parser):
    if getattr(args, "freq_int", None) is not None:
        lo, hi = args.freq_int
        if not lo < hi:
            parser.error(f"--freq-int needs LO < HI, got {lo:g} {hi:g}")
    if args.command in ("bode", "sigma") and not args.wmin < args.wmax:
        parser.error("--wmin must be below --wmax")
    if args.command == "bench":
        if args.sweep is None and not args.list and args.id is None:
            parser.error("bench needs a benchmark id, --list or --sweep")
        if args.sweep is not None and args.id is not None:
            parser.error("--sweep does not take a benchmark id")
        if args.task != "h2" and not args.task.startswith("reduce:"):
            parser.error(f"--task must be h2 or reduce:K, got {args.task!r}")


def _dump_json(doc, path=None):
    text = json.dumps(doc, indent=1, allow_nan=True)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


def _jsonable(diag):
    out = {}
    for k, v in diag.items():
        if isinstance(v, dict):
            out[k] = _jsonable(v)
        elif isinstance(v, (bool, np.bool_)):
            out[k] = bool(v)
        elif isinstance(v, (int, np.integer)):
            out[k] = int(v)
        elif isinstance(v, (float, np.floating)):
            out[k] = float(v)
        else:
            out[k] = v
    return out


def cmd_h2(args):
    sys_ = load_rtds(args.system)
    start = time.perf_counter()
    value, diag = h2_norm(sys_, _opts(args), full_output=True)
    elapsed = time.perf_counter() - start
    if args.format == "json":
        doc = {"system": sys_.name, "h2_norm": value, "wall_time": elapsed, **_jsonable(diag)}
        print(json.dumps(doc, indent=1))
        return
    print(f"h2_norm             {_human(value)}")
    print(f"evaluations         {diag['evaluations']}")
    print(f"panels              {diag['panels']}")
    print(f"abs_error_estimate  {_human(diag['abs_error_estimate'])}")
    print(f"converged           {str(diag['converged']).lower()}")
    print(f"wall_time           {_human(elapsed)}")


def _gram_csv(pair, path):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        n = (pair.wc if pair.wc is not None else pair.wo).shape[0]
        w.writerow(["gramian", "row"] + [f"col_{j + 1}" for j in range(n)])
        for name, mat in (("wc", pair.wc), ("wo", pair.wo)):
            if mat is None:
                continue
            for i, row in enumerate(mat):
                w.writerow([name, i + 1] + [_machine(x) for x in row])


def cmd_gram(args):
    sys_ = load_rtds(args.system)
    pair = gramians(sys_, args.which, _opts(args))
    if args.output:
        if args.output.endswith(".json"):
            lo, hi = pair.freq_interval
            doc = {"system": sys_.name,
                   "freq_interval": [lo, None if math.isinf(hi) else hi],
                   "wc": None if pair.wc is None else pair.wc.tolist(),
                   "wo": None if pair.wo is None else pair.wo.tolist(),
                   "diagnostics": _jsonable(pair.diagnostics)}
            _dump_json(doc, args.output)
        else:
            _gram_csv(pair, args.output)
    for name, mat in (("Wc", pair.wc), ("Wo", pair.wo)):
        if mat is None:
            continue
        print(f"{name} =")
        for row in mat:
            print("  " + "  ".join(f"{_human(x):>11}" for x in row))
    print(f"evaluations {pair.diagnostics['evaluations']}")


def cmd_balreal(args):
    sys_ = load_rtds(args.system)
    balanced, info = balanced_realization(sys_, _opts(args))
    save_rtds(balanced, args.output)
    if args.info:
        save_info(info, args.info)
    _finish_balancing(args, info)


def _finish_balancing(args, info):
    if args.hsv:
        write_hsv_csv(info, args.hsv)
    print("hsv " + " ".join(_human(x) for x in info.hsv))
    print("energy_fraction " + " ".join(_human(x) for x in info.energy_fractions()))
    if args.plot and args.command == "balreal":
        from .plotting import plot_hsv
        plot_hsv(info.hsv, args.plot)


def cmd_balred(args):
    sys_ = load_rtds(args.system)
    opts = _opts(args)
    info = None
    if args.info and Path(args.info).is_file():
        info = load_info(args.info)
    count0 = evaluation_count()
    start = time.perf_counter()
    reduced, new_info = balanced_truncation(sys_, args.order, opts, info=info)
    elapsed = time.perf_counter() - start
    evaluations = evaluation_count() - count0
    if args.info and info is None:
        save_info(new_info, args.info)
    save_rtds(reduced.renamed(f"{sys_.name or 'system'}-r{args.order}"), args.output)
    print(f"order {args.order}")
    print(f"info_reused {str(info is not None).lower()}")
    print(f"quadrature_evaluations {evaluations}")
    print(f"wall_time {_human(elapsed)}")
    _finish_balancing(args, new_info)
    if args.plot:
        from .plotting import plot_sigma
        grid = np.logspace(-2, 3, 400)
        frs = [freq_grid(s, grid, args.threads) for s in (sys_.renamed(sys_.name or "full"),
                                                         reduced.renamed(f"order {args.order}"))]
        plot_sigma(frs, args.plot)


def _systems(paths):
    out = []
    for p in paths:
        s = load_rtds(p)
        out.append(s if s.name else s.renamed(Path(p).stem))
    return out


def _freq_command(args, writer, plotter):
    grid = np.logspace(math.log10(args.wmin), math.log10(args.wmax), args.points)
    frs = [freq_grid(s, grid, args.threads) for s in _systems(args.systems)]
    writer(frs, args.output or sys.stdout)
    if args.plot:
        plotter(frs, args.plot)


def cmd_bode(args):
    from .plotting import plot_bode
    _freq_command(args, write_freqresp_csv if args.complex else write_bode_csv, plot_bode)


def cmd_sigma(args):
    from .plotting import plot_sigma
    _freq_command(args, write_sigma_csv, plot_sigma)


def cmd_step(args):
    kw = {"rel_tol": args.rel_tol, "abs_tol": args.abs_tol, "points": args.points}
    responses = []
    for s in _systems(args.systems):
        if args.tfinal is None:
            responses.append(settled_step_response(s, **kw))
        else:
            responses.append(step_response(s, args.tfinal, **kw))
    write_step_csv(responses, args.output or sys.stdout)
    if args.plot:
        from .plotting import plot_step
        plot_step(responses, args.plot)


def cmd_bench(args):
    if args.list:
        for e in registry():
            dims = "x".join(str(d) for d in e.dims)
            print(f"{e.id:6s} {e.collection:10s} {e.source:9s} dims={dims} "
                  f"delays={','.join(map(str, e.delay_counts))}  {e.description}")
        return
    opts = _opts(args)
    if args.sweep:
        sizes = SWEEP_SIZES_H2 if args.sweep == "h2" else SWEEP_SIZES_GRAM
        if args.max_n is not None:
            sizes = [n for n in sizes if n <= args.max_n]

        def progress(row):
            print(f"n={row['n']} mean_time={_human(row['mean_time'])} "
                  f"std_time={_human(row['std_time'])} failures={row['failures']}", file=sys.stderr)

        rows = timing_sweep(args.sweep, sizes, args.seeds, opts, progress)
        write_timing_csv(rows, args.output or sys.stdout)
        print(f"scaling_exponent {_human(scaling_exponent(rows))}", file=sys.stderr)
        if args.plot:
            from .plotting import plot_timing
            plot_timing(rows, args.plot, label=args.sweep)
        return
    params = dict(args.param)
    report = run_benchmark(args.id, args.task, opts, args.data, **params)
    reduced = report.pop("reduced_system", None)
    if reduced is not None and args.reduced:
        save_rtds(reduced, args.reduced)
    _dump_json(_jsonable(report), args.output)


def cmd_random(args):
    name = args.name or f"random-{args.n}-{args.seed}"
    save_rtds(random_rtds(args.n, args.seed).renamed(name), args.output)


COMMANDS = {"h2": cmd_h2, "gram": cmd_gram, "balreal": cmd_balreal, "balred": cmd_balred,
            "bode": cmd_bode, "sigma": cmd_sigma, "step": cmd_step, "bench": cmd_bench,
            "random": cmd_random}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except ArithmeticError as exc:
        _report(EXIT_NUMERICAL, "numerical", type(exc).__name__, exc)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        _report(EXIT_NUMERICAL, "numerical", type(exc).__name__, exc)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        _report(EXIT_DATA, "data", type(exc).__name__, exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
