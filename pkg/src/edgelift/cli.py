"""Command-line interface: ``edgelift analyze|simulate|calibrate|dump-null``.

Exit codes: 0 success, 2 input error, 3 statistical degeneracy.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .calibration import placebo_calibration
from .contrasts import class_totals
from .errors import DegenerateError, IngestError
from .ingest import ExperimentConfig, parse_edge_file, resolve_group_sizes
from .permutation import STATISTICS, PermutationPlan, run_permutations, write_null_csv
from .report import CONTRAST_STATS, ESTIMATE_STATS, render_report, run_analysis
from .simulator import SimulationParams, simulate, write_simulation

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE = 0, 2, 3


def _add_experiment_args(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--input", required=True, help="edge file (src,dest,msg,srcT,destT)")
    ap.add_argument("--p", type=float, required=True, help="treatment probability")
    ap.add_argument("--n-treated", type=int)
    ap.add_argument("--n-control", type=int)
    ap.add_argument("--iterations", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mode", choices=("full", "sender", "recipient"), default="full")
    ap.add_argument("--ci-level", type=float, default=0.90)
    ap.add_argument("--normalization", choices=("expected", "realized"), default="realized")
    ap.add_argument("--window-days", type=float, help="length of the data window, for warnings")
    ap.add_argument("--delimiter", choices=(",", "tab"), help="force the field delimiter")
    ap.add_argument("--drop-self-loops", action="store_true",
                    help="drop and count self-loops instead of failing")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", help="output path (default: stdout)")


def _config(args) -> ExperimentConfig:
    return ExperimentConfig(
        p=args.p,
        n_treated=args.n_treated,
        n_control=args.n_control,
        seed=args.seed,
        iterations=args.iterations,
        ci_level=args.ci_level,
        permutation_mode=args.mode,
        normalization=args.normalization,
        window_days=args.window_days,
    )


def _read(args):
    delim = {"tab": "\t", ",": ","}.get(args.delimiter) if args.delimiter else None
    return parse_edge_file(args.input, delimiter=delim, drop_self_loops=args.drop_self_loops)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> int:
    config = _config(args)
    edges, summary = _read(args)
    report = run_analysis(config, edges, workers=args.workers, ingest_summary=summary)
    _emit(render_report(report, args.format), args.out)
    return EXIT_OK


def cmd_dump_null(args) -> int:
    if not args.out:
        raise IngestError("dump-null needs --out")
    config = _config(args)
    edges, _ = _read(args)
    sizes = resolve_group_sizes(edges, config)[:2]
    class_totals(edges, sizes)
    names = args.statistics.split(",") if args.statistics else [
        *ESTIMATE_STATS, *CONTRAST_STATS
    ]
    unknown = [n for n in names if n not in STATISTICS]
    if unknown:
        raise IngestError(f"unknown statistics: {', '.join(unknown)}")
    plan = PermutationPlan(config.permutation_mode, config.iterations, config.seed,
                           config.p, config.ci_level)
    results = {}
    for name in names:
        results.update(run_permutations(
            edges, [name], plan, sizes, normalization=config.normalization,
            workers=args.workers,
        ))
    write_null_csv(results, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = SimulationParams(
        n=args.n,
        p=args.p,
        lam=args.lam,
        q1=args.q1,
        q2=args.q2,
        alpha=args.alpha,
        max_chain_depth=None if args.max_depth <= 0 else args.max_depth,
        seed=args.seed,
        perfect_affinity=args.perfect_affinity,
    )
    edges, truth = simulate(params, workers=args.workers)
    edge_path, truth_path = write_simulation(edges, truth, params, args.out)
    sys.stderr.write(f"wrote {len(edges)} edges to {edge_path}, truth to {truth_path}\n")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if not args.statistic:
        args.statistic = ["corrected_lift"]
    res = placebo_calibration(
        replicates=args.replicates,
        n=args.n,
        lam=args.lam,
        p=args.p,
        iterations=args.iterations,
        seed=args.seed,
        statistics=args.statistic,
        level=args.level,
        workers=args.workers,
    )
    d = {}
    for name, r in res.items():
        d[name] = r.to_dict()
        if not args.keep_p_values:
            d[name].pop("p_values")
    _emit(json.dumps(d, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edgelift", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="analyze an edge file")
    _add_experiment_args(a)
    a.add_argument("--format", choices=("json", "text"), default="json")
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("dump-null", help="write permutation null distributions as CSV")
    _add_experiment_args(d)
    d.add_argument("--statistics", help="comma-separated statistic names")
    d.set_defaults(func=cmd_dump_null)

    s = sub.add_parser("simulate", help="generate a synthetic experiment")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=float, default=0.5)
    s.add_argument("--lambda", dest="lam", type=float, default=0.02)
    s.add_argument("--q1", type=float, default=0.0)
    s.add_argument("--q2", type=float, default=0.0)
    s.add_argument("--alpha", type=float, default=0.0)
    s.add_argument("--perfect-affinity", action="store_true")
    s.add_argument("--max-depth", type=int, default=50, help="<= 0 for unbounded chains")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True, help="edge file path; truth goes to <stem>.truth.json")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="placebo false-positive rate of the permutation test")
    c.add_argument("--replicates", type=int, default=200)
    c.add_argument("--n", type=int, default=2000)
    c.add_argument("--lambda", dest="lam", type=float, default=0.02)
    c.add_argument("--p", type=float, default=0.5)
    c.add_argument("--iterations", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--statistic", action="append", choices=sorted(STATISTICS),
                   help="statistic to calibrate (repeatable; default corrected_lift)")
    c.add_argument("--level", type=float, default=0.05)
    c.add_argument("--keep-p-values", action="store_true")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR)
    try:
        return args.func(args)
    except (IngestError, FileNotFoundError, ValueError) as exc:
        sys.stderr.write(f"input error: {exc}\n")
        return EXIT_INPUT
    except DegenerateError as exc:
        sys.stderr.write(f"degenerate data: {exc}\n")
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
