"""Command-line entry point: ``porosplit run | verify | report``."""

import argparse
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import ConfigError, load_config
from .coupling import REPORT_COLUMNS, SUMMARY_COLUMNS, CouplingError, run_transient
from .io import contraction_summary, read_csv, write_csv, write_vtk
from .verify import run_checks

log = logging.getLogger("porosplit")


class UsageError(Exception):
    pass


def _thread_limit():
    value = os.environ.get("PORO_THREADS")
    if not value:
        return None
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"PORO_THREADS must be a positive integer, got {value!r}") from None
    if n < 1:
        raise UsageError("PORO_THREADS must be >= 1")
    return n


def _write_outputs(cfg, problem, history, out):
    prov = cfg.provenance()
    write_csv(out / "iterations.csv", REPORT_COLUMNS, [r.row() for r in history.reports], prov)
    write_csv(out / "steps.csv", SUMMARY_COLUMNS, [s.row() for s in history.summaries],
              prov + [f"equilibrated = {str(history.equilibrated).lower()}"])


def cmd_run(args):
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    problem = cfg.build_problem()
    every = cfg.output.snapshot_every

    def snapshot(history):
        n = len(history.states) - 1
        if cfg.output.vtk and every > 0 and n % every == 0:
            write_vtk(out / f"state_{n:04d}.vtk", problem.mesh, history.states[-1],
                      problem.model)

    try:
        history = run_transient(problem, cfg.time_steps, cfg.time.n_steps, cfg.controls,
                                p0=cfg.scenario.initial_pressure, on_step=snapshot)
    except CouplingError as exc:
        if exc.history is not None:
            _write_outputs(cfg, problem, exc.history, out)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_outputs(cfg, problem, history, out)
    for s in history.summaries:
        print(f"step {s.step}: t={s.time:g} iterations={s.iterations} "
              f"mean ratio={s.mean_ratio:.3e} mass residual={s.mass_residual_rel:.2e}")
    print(f"wrote {out / 'iterations.csv'} and {out / 'steps.csv'}")
    return 0


def cmd_verify(args):
    ok, n = run_checks(args.filter)
    if n == 0:
        raise UsageError(f"no check matches {args.filter!r}")
    if not ok:
        print("verify: some checks failed", file=sys.stderr)
    return 0 if ok else 1


def cmd_report(args):
    path = Path(args.csv)
    if not path.is_file():
        raise UsageError(f"CSV file not found: {path}")
    try:
        _, header, rows = read_csv(path)
        if not {"step", "m", "ratio"} <= set(header):
            raise ValueError("not a per-iteration report (missing step/m/ratio columns)")
        print(contraction_summary(rows))
    except (ValueError, KeyError) as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="porosplit",
                                     description="Fixed-stress split poromechanics driver")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a transient simulation from a config file")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides [output] directory)")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("verify", help="run the built-in property checks")
    p.add_argument("--filter", help="only run checks whose name contains this text")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("report", help="summarise a per-iteration CSV report")
    p.add_argument("csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        limit = _thread_limit()
        with threadpool_limits(limits=limit):
            return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surface as a diagnostic, not a traceback
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
