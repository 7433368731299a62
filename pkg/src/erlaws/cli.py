"""Command-line entry point.

Subcommands::

    erlaws iid-exact --alpha 0.1,0.5
    erlaws rate-fn --process rademacher --method scgf --alpha 0,0.25,0.5
    erlaws er-scan --process rademacher --schedule log --alpha 0.5 --n-max 1e6
    erlaws tower-info --beta 2 [--csv]
    erlaws corr --process tower --length 1000000 --lags 1,10,100
    erlaws series --process doubling --length 1000 --out series.csv
    erlaws experiment E1 [--config file]

Exit status: 0 success / all criteria pass, 1 criteria failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import large_deviations as ld
from .er_functionals import Fixed, Logarithmic, Polynomial, er_scan, geometric_grid
from .errors import ConfigError, ErlawsError
from .experiments import (autocorrelation, load_config_file, make_config, process_from_config,
                          run_experiment)
from .processes import IID, generate_series, write_series_csv
from .rng import DEFAULT_SEED, parse_seed
from .young_tower import build_example_tower, tail_probability

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list:
    return [int(x) for x in _floats(text)]


def _count(text: str) -> int:
    try:
        return int(float(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")


def _seed(text: str) -> int:
    try:
        return parse_seed(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_seed, default=None, help="master seed (decimal or 0x-hex)")
    p.add_argument("--out", default=None, help="output file (or directory for experiment)")
    p.add_argument("--replicas", type=_count, default=None)
    p.add_argument("--quiet", action="store_true")


def _process_args(p: argparse.ArgumentParser, default: str = "rademacher") -> None:
    p.add_argument("--process", choices=["rademacher", "iid", "doubling", "tower"], default=default)
    p.add_argument("--values", type=_floats, help="iid support values")
    p.add_argument("--probs", type=_floats, help="iid probabilities")
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--kappa", type=float, default=0.01)
    p.add_argument("--unmodified", action="store_true", help="tower without the column-3 change")
    p.add_argument("--variant", choices=["phi", "phi2"], default=None)


def _spec(args):
    cfg = {"process": args.process, "beta": args.beta, "kappa": args.kappa,
           "modified": not args.unmodified, "seed": args.seed if args.seed is not None else DEFAULT_SEED}
    if args.values is not None:
        cfg["values"] = args.values
    if args.probs is not None:
        cfg["probs"] = args.probs
    if args.variant is not None:
        cfg["variant"] = args.variant
    if args.process == "iid" and (args.values is None or args.probs is None):
        raise ConfigError("--process iid needs --values and --probs", key="values")
    return process_from_config(cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erlaws", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("iid-exact", help="exact i.i.d. rate c_alpha and minimizer t_alpha")
    p.add_argument("--values", type=_floats, default=[-1.0, 1.0])
    p.add_argument("--probs", type=_floats, default=[0.5, 0.5])
    p.add_argument("--alpha", type=_floats, required=True)
    _common(p)

    p = sub.add_parser("rate-fn", help="rate function estimate as CSV")
    _process_args(p)
    p.add_argument("--method", choices=["exact", "scgf", "tail"], default="scgf")
    p.add_argument("--alpha", type=_floats, required=True)
    p.add_argument("--n", type=_count, default=64, help="block length (scgf)")
    p.add_argument("--n-grid", type=_ints, default=[4, 8, 12, 16, 24], help="tail-fit grid")
    p.add_argument("--t-grid", type=_floats, default=None, help="t_min,t_max,step")
    _common(p)

    p = sub.add_parser("er-scan", help="maximal window averages over a geometric n-grid")
    _process_args(p)
    p.add_argument("--schedule", choices=["log", "poly", "fixed"], required=True)
    p.add_argument("--rate", type=float, default=None, help="I(alpha) for log (default: exact iid)")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--n-max", type=_count, default=10 ** 6)
    p.add_argument("--n-min", type=_count, default=1000)
    p.add_argument("--grid-ratio", type=float, default=2.0)
    _common(p)

    p = sub.add_parser("tower-info", help="column table of the example tower")
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--kappa", type=float, default=0.01)
    p.add_argument("--unmodified", action="store_true")
    p.add_argument("--csv", action="store_true", help="machine-readable CSV")
    p.add_argument("--rows", type=int, default=10)
    _common(p)

    p = sub.add_parser("corr", help="autocorrelation and decay fits")
    _process_args(p, default="tower")
    p.add_argument("--length", type=_count, default=10 ** 6)
    p.add_argument("--lags", type=_ints, default=[0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000])
    _common(p)

    p = sub.add_parser("series", help="export a series as CSV t,phi,S")
    _process_args(p)
    p.add_argument("--length", type=_count, default=1000)
    _common(p)

    p = sub.add_parser("experiment", help="run an acceptance experiment E1..E7")
    p.add_argument("name")
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--max-samples", type=_count, default=None)
    _common(p)
    return parser


def _open_out(path):
    return open(path, "w", newline="", encoding="utf-8") if path else sys.stdout


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def cmd_iid_exact(args) -> int:
    from .processes import DiscreteDistribution
    dist = DiscreteDistribution(args.values, args.probs)
    fh = _open_out(args.out)
    fh.write("alpha,t_alpha,c_alpha\n")
    status = EXIT_OK
    for a in args.alpha:
        try:
            r = ld.solve_t_alpha(dist, a)
            fh.write(f"{a!r},{r.t_alpha!r},{r.c_alpha!r}\n")
        except ErlawsError as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = EXIT_USAGE
    if fh is not sys.stdout:
        fh.close()
    return status


def cmd_rate_fn(args) -> int:
    spec = _spec(args)
    replicas = args.replicas or 100_000
    if args.method == "exact":
        if not isinstance(spec.kind, IID):
            raise ConfigError("exact method needs an i.i.d. process", key="process")
        rf = ld.exact_rate_function(spec.kind.dist, args.alpha)
    elif args.method == "scgf":
        lo, hi, step = args.t_grid if args.t_grid else (-3.0, 3.0, 0.01)
        t_grid = np.round(np.arange(lo, hi + step / 2, step), 10)
        table = ld.empirical_scgf(spec, args.n, replicas, t_grid)
        rf = ld.scgf_rate_function(table, args.alpha)
    else:
        rf = ld.tail_rate_function(spec, args.alpha, args.n_grid, replicas)
    fh = _open_out(args.out)
    w = _writer(fh)
    w.writerow(["alpha", "I_hat", "method", "n", "replicas", "stderr"])
    for a, i, m, n, r, s in rf.rows():
        w.writerow([repr(a), repr(i), m, n, r, repr(s)])
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def cmd_er_scan(args) -> int:
    spec = _spec(args)
    t_alpha = None
    if args.schedule == "log":
        rate = args.rate
        if isinstance(spec.kind, IID):
            exact = ld.solve_t_alpha(spec.kind.dist, args.alpha)
            t_alpha = exact.t_alpha
            rate = rate if rate is not None else exact.c_alpha
        if rate is None:
            raise ConfigError("--rate is required for a logarithmic schedule on this process", key="rate")
        schedule = Logarithmic(rate)
    elif args.schedule == "poly":
        schedule = Polynomial(args.tau)
    else:
        schedule = Fixed(args.k)
    grid = geometric_grid(args.n_max, args.grid_ratio, args.n_min)
    res = er_scan(spec, schedule, args.alpha, grid, t_alpha, skip_infeasible=True)
    fh = _open_out(args.out)
    fh.write(f"# spec={spec.describe()} schedule={schedule} alpha={args.alpha!r}\n")
    w = _writer(fh)
    w.writerow(["n", "k", "theta", "theta_over_k", "ddl_stat"])
    for r in res.rows:
        w.writerow([r.n, r.k, repr(r.theta), repr(r.theta_over_k),
                    "" if r.ddl_stat is None else repr(r.ddl_stat)])
    if fh is not sys.stdout:
        fh.close()
    for n, reason in res.skipped:
        if not args.quiet:
            print(f"skipped n={n}: {reason}", file=sys.stderr)
    return EXIT_OK


def cmd_tower_info(args) -> int:
    tower = build_example_tower(args.beta, args.kappa, not args.unmodified)
    header = ["i", "m_i", "R_i", "nu_bar", "nu_delta"]
    rows = [[i, tower.mass(i), tower.height(i), tower.nu_bar(i), tower.nu_delta(i)]
            for i in range(1, args.rows + 1)]
    ns = np.array([2 ** p for p in range(4, 15)])
    slope = float(np.polyfit(np.log(ns), np.log([tail_probability(tower, int(n)) for n in ns]), 1)[0])
    fh = _open_out(args.out)
    if args.csv:
        w = _writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([r[0], repr(r[1]), r[2], repr(r[3]), repr(r[4])])
    else:
        fh.write(f"{'i':>4}  {'m_i':>14}  {'R_i':>4}  {'nu_bar':>14}  {'nu_delta':>14}\n")
        for i, m, R, nb, nd in rows:
            fh.write(f"{i:>4}  {m:>14.8g}  {R:>4}  {nb:>14.8g}  {nd:>14.8g}\n")
        fh.write(f"Zbar = {tower.Zbar:.12g}\nZdelta = {tower.Zdelta:.12g}\n"
                 f"i_max = {tower.i_max}\ntail slope (n = 2^4..2^14) = {slope:.4f}\n")
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def cmd_corr(args) -> int:
    spec = _spec(args)
    res = autocorrelation(spec, args.length, args.lags)
    fh = _open_out(args.out)
    w = _writer(fh)
    w.writerow(["lag", "C"])
    for lag, c in zip(res.lags, res.C):
        w.writerow([int(lag), repr(float(c))])
    if fh is not sys.stdout:
        fh.close()
    if not args.quiet:
        print(f"semilog slope {res.semilog_slope:.4g} (rms {res.semilog_residual:.3g}); "
              f"log-log slope {res.loglog_slope:.4g} (rms {res.loglog_residual:.3g})", file=sys.stderr)
    return EXIT_OK


def cmd_series(args) -> int:
    spec = _spec(args)
    P = generate_series(spec, args.length)
    if args.out:
        write_series_csv(args.out, P)
    else:
        write_series_csv("/dev/stdout", P)
    return EXIT_OK


def cmd_experiment(args) -> int:
    file_values = load_config_file(args.config) if args.config else None
    overrides = {"seed": args.seed, "replicas": args.replicas, "max_samples": args.max_samples,
                 "output": args.out}
    cfg = make_config(args.name, file_values, overrides)
    log = None if args.quiet else print
    result = run_experiment(cfg, log=log)
    return EXIT_OK if result.verdict.passed else EXIT_FAIL


COMMANDS = {
    "iid-exact": cmd_iid_exact,
    "rate-fn": cmd_rate_fn,
    "er-scan": cmd_er_scan,
    "tower-info": cmd_tower_info,
    "corr": cmd_corr,
    "series": cmd_series,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        where = f" (key '{exc.key}')" if exc.key else ""
        print(f"usage error{where}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ErlawsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
