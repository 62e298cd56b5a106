"""Command line entry point: ``flocktrack {simulate,sweep,riemann,fit,audit}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import functionals as fn
from .lab import ConfigError, ExperimentConfig, riemann_fan, run_suite, simulate
from .wave_algebra import DomainError, State

log = logging.getLogger("flocktrack")


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    over = {}
    if getattr(args, "out", None):
        over["output_dir"] = args.out
    if getattr(args, "nu", None) is not None:
        over["nu"] = tuple(args.nu)
    if getattr(args, "t_end", None) is not None:
        over["t_end"] = args.t_end
    if getattr(args, "sample_dt", None) is not None:
        over["sample_dt"] = args.sample_dt
    if getattr(args, "workers", None) is not None:
        over["workers"] = args.workers
    return cfg.replace(**over) if over else cfg


def _print_audits(audits: dict) -> None:
    for name, ok in audits.items():
        print(f"  {name:<15} {'PASS' if ok else 'FAIL'}")


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    ok = True
    for nu in cfg.nu:
        res = simulate(cfg, nu, out)
        print(f"nu={nu}: {res.n_events} events, max {res.max_fronts} fronts, "
              f"{res.wall_time:.1f}s, C2={res.fit.get('C2')}")
        _print_audits(res.audits)
        ok &= res.ok
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    cfg = _load(args)
    report = run_suite(cfg, Path(cfg.output_dir))
    for r in report.runs:
        status = "error: " + r.error if r.error else f"{r.wall_time:.1f}s"
        print(f"nu={r.nu}: {status}")
    print("momentum error ratios:", ", ".join(f"{x:.3f}" for x in report.momentum_ratios))
    print("L1 distances between levels:", ", ".join(f"{x:.3e}" for x in report.l1_distances))
    _print_audits(report.audits)
    return 0 if report.ok else 1


def cmd_audit(args) -> int:
    """Re-check a finished sweep from its summary file."""
    path = Path(args.run_dir) / "summary.json"
    with open(path) as fh:
        summary = json.load(fh)
    audits = dict(summary.get("audits", {}))
    for run in summary.get("runs", []):
        if run.get("error"):
            audits[f"run_nu{run['nu']}"] = False
    _print_audits(audits)
    return 0 if audits and all(audits.values()) else 1


def cmd_riemann(args) -> int:
    left = State(1.0 / args.left[0], args.left[1])
    right = State(1.0 / args.right[0], args.right[1])
    rows = riemann_fan(left, right, args.alpha)
    if args.json:
        print(json.dumps(rows, indent=2))
        return 0
    for r in rows:
        speed = "-" if r["speed"] is None else f"{r['speed']:+.10g}"
        print(f"family {r['family']}  {r['kind']:<11}  size {r['size']:+.12g}  speed {speed}")
    mid = rows[0]["right"]
    print(f"middle state: rho = {1.0 / mid[0]:.12g}, v = {mid[1]:.12g}")
    return 0


def cmd_fit(args) -> int:
    with open(args.diagnostics, newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["t"]) for r in rows])
    L = np.array([float(r["L"]) for r in rows])
    window = tuple(args.window) if args.window else fn.decay_window(t, L)
    fit = fn.fit_decay(t, L, window)
    payload = fit.to_json()
    if args.output:
        fn.write_fit_json(args.output, fit)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0 if fit.C2 > 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flocktrack", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def run_opts(sp):
        sp.add_argument("config", help="YAML experiment file")
        sp.add_argument("-o", "--out", help="output directory (overrides the config)")
        sp.add_argument("--nu", type=int, nargs="+", help="refinement levels")
        sp.add_argument("--t-end", type=float)
        sp.add_argument("--sample-dt", type=float, help="spacing of the sample grid")

    sp = sub.add_parser("simulate", help="run each level and write per-run outputs")
    run_opts(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="run all levels and the cross-level report")
    run_opts(sp)
    sp.add_argument("-j", "--workers", type=int)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("audit", help="re-check the audits recorded by a sweep")
    sp.add_argument("run_dir")
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("riemann", help="solve one Riemann problem")
    sp.add_argument("--left", type=float, nargs=2, required=True, metavar=("RHO", "V"))
    sp.add_argument("--right", type=float, nargs=2, required=True, metavar=("RHO", "V"))
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_riemann)

    sp = sub.add_parser("fit", help="exponential fit of L(t) from a diagnostics CSV")
    sp.add_argument("diagnostics")
    sp.add_argument("--window", type=float, nargs=2, metavar=("T_A", "T_B"))
    sp.add_argument("--output")
    sp.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
