"""Command-line front end.

Exit codes: 0 success, 1 any other failure, 2 the data falsify the budgets.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .bounds import BoundSolver
from .config import RunConfig, default_config_json
from .errors import BoundError, HypothesisFalsified, InvalidInput, OptimizerFailed
from .experiments.area import METHODS, run_area_comparison, summarize_area
from .experiments.control import run_control_study, summarize_control
from .experiments.oracle_check import run_oracle_check
from .gp_core import ProblemData
from .records import jsonable, read_dataset, read_queries, write_records

EXIT_OK, EXIT_ERROR, EXIT_FALSIFIED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="JSON config with sections problem/optimizer/experiment/io")
    p.add_argument("--seed", type=int, metavar="U64", help="master seed (overrides experiment.master_seed)")
    p.add_argument("--threads", type=int, metavar="INT", help="worker threads for trials")
    p.add_argument("--json", action="store_true", default=None, help="also emit JSON")
    p.add_argument("--out", metavar="DIR", help="output directory")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    p = _Parser(prog="kernelbounds", description="Deterministic kernel bounds under energy-bounded noise.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    b = sub.add_parser("bound", parents=[common], help="bounds at query points for a CSV dataset")
    b.add_argument("dataset", help="CSV with header x_1,...,x_d,y")
    q = b.add_mutually_exclusive_group(required=True)
    q.add_argument("--grid", action="append", metavar="LO:HI:COUNT", help="query grid, once per input dimension")
    q.add_argument("--queries", metavar="PATH", help="CSV with header x_1,...,x_d")

    sub.add_parser("compare", parents=[common], help="envelope area versus N")
    sub.add_parser("safe-control", parents=[common], help="safe-control success rate and solve time")
    sub.add_parser("oracle-check", parents=[common], help="randomised bounds-versus-oracle check")
    return p


def parse_grid(specs) -> np.ndarray:
    """Cartesian product of ``lo:hi:count`` specs, first dimension varying slowest."""
    axes = []
    for s in specs:
        parts = s.split(":")
        if len(parts) != 3:
            raise InvalidInput("grid spec must be lo:hi:count", spec=s)
        try:
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise InvalidInput("grid spec must be lo:hi:count", spec=s) from None
        if n < 1:
            raise InvalidInput("grid count must be >= 1", spec=s)
        axes.append(np.linspace(lo, hi, n))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    return cfg.with_overrides(seed=args.seed, threads=args.threads, out_dir=args.out, json_out=args.json)


@contextlib.contextmanager
def _sink(out_dir: Optional[str], name: str):
    """File under ``out_dir`` or stdout when no directory is configured."""
    if out_dir is None:
        yield sys.stdout
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", newline="", encoding="utf-8") as fh:
        yield fh


def _dump_json(fh, obj) -> None:
    json.dump(jsonable(obj), fh, indent=2, allow_nan=False)
    fh.write("\n")


BOUND_FIELDS = ("lower", "upper", "sigma_star_lower", "sigma_star_upper", "case_lower", "case_upper", "status")


def cmd_bound(args, cfg: RunConfig) -> int:
    x, y = read_dataset(args.dataset)
    queries = parse_grid(args.grid) if args.grid else read_queries(args.queries)
    d = x.shape[1]
    if queries.shape[1] != d:
        raise InvalidInput("query dimension does not match the dataset", dataset=d, queries=queries.shape[1])
    p = cfg.problem
    data = ProblemData(x, y, p.kf, p.kw, p.gamma_f_sq, p.gamma_w_sq)
    results = BoundSolver(data, cfg.optimizer).solve(queries)
    xcols = ["x"] if d == 1 else [f"x_{i + 1}" for i in range(d)]
    records, errors = [], []
    for qi, r in zip(queries, results):
        rec = dict(zip(xcols, (float(v) for v in qi)))
        status = "ok"
        if isinstance(r, OptimizerFailed):
            errors.append(r.to_dict())
            r, status = r.context["result"], "not_converged"
        if isinstance(r, BoundError):
            errors.append(r.to_dict())
            rec.update({k: float("nan") for k in BOUND_FIELDS[:4]})
            rec.update(case_lower="", case_upper="", status=r.kind)
        else:
            rec.update(
                lower=r.lower,
                upper=r.upper,
                sigma_star_lower=r.sigma_star_lower,
                sigma_star_upper=r.sigma_star_upper,
                case_lower=r.case_lower.value,
                case_upper=r.case_upper.value,
                status=status,
            )
        records.append(rec)
    header = xcols + list(BOUND_FIELDS)
    out_dir = cfg.io.out_dir
    if out_dir is not None or not cfg.io.json:
        with _sink(out_dir, "bound.csv") as fh:
            write_records(fh, records, header)
    if cfg.io.json:
        with _sink(out_dir, "bound.json") as fh:
            _dump_json(fh, {"records": records, "errors": errors})
    hard = [e for e in errors if e["kind"] != "OptimizerFailed"]
    return EXIT_ERROR if hard else EXIT_OK


def _out_dir(cfg: RunConfig) -> str:
    return cfg.io.out_dir or "results"


def cmd_compare(args, cfg: RunConfig) -> int:
    failures: list = []
    reports = run_area_comparison(cfg.experiment.area, cfg.optimizer, cfg.io.threads, failures)
    out = _out_dir(cfg)
    rows = [r.to_row() for r in reports]
    result_cols = ["N", "trial"] + [f"area_{m}" for m in METHODS] + [f"contained_{m}" for m in METHODS]
    with _sink(out, "area_trials.csv") as fh:
        write_records(fh, rows, result_cols)
    summary = {"config": cfg.experiment.area.to_dict(), "summary": summarize_area(reports), "errors": failures}
    with _sink(out, "area_summary.json") as fh:
        _dump_json(fh, summary)
    if cfg.io.timing:
        with _sink(out, "area_timing.csv") as fh:
            write_records(fh, rows, ["N", "trial"] + [f"time_{m}" for m in METHODS])
    if cfg.io.json:
        _dump_json(sys.stdout, summary["summary"])
    return EXIT_OK


def cmd_safe_control(args, cfg: RunConfig) -> int:
    failures: list = []
    exp = cfg.experiment
    reports = run_control_study(exp.control, exp.control_problem, cfg.optimizer, cfg.io.threads, failures)
    out = _out_dir(cfg)
    rows = [r.to_row() for r in reports]
    with _sink(out, "control_trials.csv") as fh:
        write_records(fh, rows, ["method", "N", "repetition", "success_rate", "safety_violations", "failures"])
    summary = summarize_control(reports)
    rates = {n: {m: v["success_rate"] for m, v in e.items()} for n, e in summary.items()}
    doc = {"config": exp.control.to_dict(), "problem": exp.control_problem.to_dict(), "success_rate": rates, "errors": failures}
    with _sink(out, "control_summary.json") as fh:
        _dump_json(fh, doc)
    if cfg.io.timing:
        with _sink(out, "control_timing.csv") as fh:
            write_records(fh, rows, ["method", "N", "repetition", "time_median", "time_p5", "time_p95"])
        with _sink(out, "control_timing.json") as fh:
            _dump_json(fh, summary)
    if cfg.io.json:
        _dump_json(sys.stdout, summary)
    return EXIT_OK


def cmd_oracle_check(args, cfg: RunConfig) -> int:
    rep = run_oracle_check(cfg.experiment.oracle, cfg.optimizer, threads=cfg.io.threads)
    print(f"max relative discrepancy {rep.max_discrepancy:.3e} over {rep.instances} instances "
          f"(max gap {rep.max_gap:.3e}, errors {len(rep.failures)})")
    if cfg.io.out_dir is not None:
        with _sink(cfg.io.out_dir, "oracle_check.json") as fh:
            _dump_json(fh, rep.to_dict())
    elif cfg.io.json:
        _dump_json(sys.stdout, rep.to_dict())
    return EXIT_OK if rep.passed else EXIT_ERROR


COMMANDS = {
    "bound": cmd_bound,
    "compare": cmd_compare,
    "safe-control": cmd_safe_control,
    "oracle-check": cmd_oracle_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(default_config_json())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_ERROR
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](args, cfg)
    except HypothesisFalsified as exc:
        ctx = exc.context
        print(f"falsified: {exc.message}", file=sys.stderr)
        print(
            f"  min beta^2 over probes {ctx.get('min_beta_sq', ctx.get('beta_sq'))}; "
            f"inflating both budgets by {ctx.get('inflation', 'n/a')} restores consistency",
            file=sys.stderr,
        )
        return EXIT_FALSIFIED
    except BoundError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
