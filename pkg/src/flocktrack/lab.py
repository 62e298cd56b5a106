"""Experiment configuration, normalisation and run orchestration."""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from . import eulerian_bridge as eb
from . import front_tracker as ft
from . import functionals as fn
from .data import (Datum, PiecewiseConstantDatum, ScaledDatum, TabulatedDatum, TwoBumpDatum,
                   riemann_datum)
from .wave_algebra import (Family, Kind, ModelParams, State, apply_wave, lagrangian_speed,
                           solve_riemann)

log = logging.getLogger(__name__)

AUDITS = ("ledger", "cases", "tv", "mass", "trap", "interface", "consistency", "momentum_order")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

DATUM_FAMILIES = {
    "two_bump": {"M", "a0", "b0", "centers", "width", "amps", "vels"},
    "riemann": {"rho_l", "v_l", "rho_r", "v_r", "a0", "x_mid", "b0"},
    "cells": {"edges", "rhos", "vels"},
    "tabulated": {"path"},
}


@dataclass(frozen=True)
class DatumSpec:
    family: str = "two_bump"
    params: Mapping[str, Any] = field(default_factory=dict)

    def build(self, base_dir: Path | None = None) -> Datum:
        p = dict(self.params)
        if self.family == "two_bump":
            for key in ("centers", "amps", "vels"):
                if key in p:
                    p[key] = tuple(p[key])
            return TwoBumpDatum(**p)
        if self.family == "riemann":
            return riemann_datum(**p)
        if self.family == "cells":
            return PiecewiseConstantDatum(p["edges"], p["rhos"], p["vels"])
        if self.family == "tabulated":
            path = Path(p["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return TabulatedDatum.from_csv(path)
        raise ConfigError(f"unknown datum family {self.family!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """All inputs of a run or sweep.

    Schedules at level ``nu``: ``eta0 / 2**nu``, ``dt0 / 2**nu``,
    ``n0 * 2**nu`` cells and reflection quantum ``quantum0 / 2**nu``.
    """
    alpha: float = 1.0
    K: float = 1.0
    datum: DatumSpec = field(default_factory=DatumSpec)
    nu: tuple[int, ...] = (0, 1, 2)
    eta0: float = 0.05
    dt0: float = 0.02
    n0: int = 64
    quantum0: float = 0.0
    t_end: float = 40.0
    sample_dt: float = 0.1
    output_dir: str = "out"
    max_events: int = 20_000_000
    normalize: bool = True
    workers: int = 1
    write_events: bool = True
    check_every: int = 0
    audits: tuple[str, ...] = AUDITS
    base_dir: str = "."

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base_dir: str = ".") -> "ExperimentConfig":
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        if "datum" in kw:
            d = dict(kw["datum"])
            family = d.pop("family", "two_bump")
            if family not in DATUM_FAMILIES:
                raise ConfigError(f"unknown datum family {family!r}")
            bad = set(d) - DATUM_FAMILIES[family]
            if bad:
                raise ConfigError(f"unknown keys for datum family {family!r}: {sorted(bad)}")
            kw["datum"] = DatumSpec(family, d)
        if "nu" in kw:
            nu = kw["nu"]
            kw["nu"] = tuple(int(n) for n in ([nu] if isinstance(nu, int) else nu))
        if "audits" in kw:
            bad = set(kw["audits"]) - set(AUDITS)
            if bad:
                raise ConfigError(f"unknown audits: {sorted(bad)}")
            kw["audits"] = tuple(kw["audits"])
        cfg = cls(**kw, base_dir=base_dir)
        cfg.check_basic()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        return cls.from_mapping(data, base_dir=str(path.parent))

    def replace(self, **kw) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return ExperimentConfig(**d)

    def check_basic(self) -> None:
        for name in ("alpha", "K", "eta0", "dt0", "t_end", "sample_dt"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n0 < 1 or self.quantum0 < 0 or any(n < 0 for n in self.nu):
            raise ConfigError("n0 >= 1, quantum0 >= 0 and nu >= 0 required")

    def build_datum(self) -> Datum:
        return self.datum.build(Path(self.base_dir))

    def to_json(self) -> dict:
        d = asdict(self)
        d["datum"] = {"family": self.datum.family, **dict(self.datum.params)}
        d.pop("base_dir")
        return d


# ---------------------------------------------------------------------------
# normalisation

@dataclass(frozen=True)
class NormalizedProblem:
    """Unit-kernel, zero-mean problem obtained by ``(x, t) -> (lam x, lam t)``."""
    lam: float
    shift: float
    datum: Datum
    original: Datum
    K: float

    @property
    def M(self) -> float:
        return self.datum.mass

    def time_to_original(self, t):
        return np.asarray(t) / self.lam

    def x_to_original(self, x):
        return np.asarray(x) / self.lam

    def velocity_to_original(self, v):
        return np.asarray(v) + self.shift

    def rate_to_original(self, c2: float) -> float:
        return c2 * self.lam


def normalize(datum: Datum, K: float) -> NormalizedProblem:
    if not K > 0:
        raise ConfigError("K must be positive")
    lam = math.sqrt(K)
    vbar = datum.momentum() / datum.mass
    return NormalizedProblem(lam, vbar, ScaledDatum(datum, lam, vbar), datum, K)


def check_step_bounds(cfg: ExperimentConfig, M: float, K_eff: float, q: float) -> None:
    bound = min(1.0, 2.0 / math.cosh(q))
    for nu in cfg.nu:
        dt = cfg.dt0 * 2.0 ** (-nu)
        if not K_eff * M * dt < bound:
            raise ConfigError(f"K*M*dt = {K_eff * M * dt:.6g} at nu={nu} violates "
                              f"the bound min(1, 2/cosh q) = {bound:.6g}")


def problem_of(cfg: ExperimentConfig) -> tuple[Datum, ModelParams, NormalizedProblem | None]:
    """Datum and model actually simulated (normalised unless disabled)."""
    datum = cfg.build_datum()
    if cfg.normalize:
        prob = normalize(datum, cfg.K)
        return prob.datum, ModelParams(cfg.alpha, prob.M, 1.0), prob
    return datum, ModelParams(cfg.alpha, datum.mass, cfg.K), None


# ---------------------------------------------------------------------------
# single run

@dataclass
class RunResult:
    nu: int
    ok: bool
    error: str | None = None
    q: float = math.nan
    wall_time: float = 0.0
    n_events: int = 0
    max_fronts: int = 0
    times: list = field(default_factory=list)
    L: list = field(default_factory=list)
    v_osc: list = field(default_factory=list)
    rho_dev: list = field(default_factory=list)
    support: list = field(default_factory=list)
    momentum_err: list = field(default_factory=list)
    mass_err_max: float = 0.0
    max_dL: float = 0.0
    closure_err: float = 0.0
    L0: float = 0.0
    tv_violations: int = 0
    recon_err_max: float = 0.0
    cases: dict = field(default_factory=dict)
    case_failures: dict = field(default_factory=dict)
    refl_bound_failures: int = 0
    trap_fraction: float = 1.0
    trap_windows: int = 0
    T_bar: float = 0.0
    C_R: float = 0.0
    interface_residual: float = 0.0
    consistency_residual: float = 0.0
    fit: dict = field(default_factory=dict)
    step_reflection: dict = field(default_factory=dict)
    rho_inf_est: float = math.nan
    # coarse profile samples for cross-level comparison: (t, edges, rho)
    profiles: list = field(default_factory=list)
    audits: dict = field(default_factory=dict)

    def summary(self) -> dict:
        d = asdict(self)
        for key in ("times", "L", "v_osc", "rho_dev", "support", "momentum_err", "profiles"):
            d.pop(key)
        return _finite(d)


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def sample_grid(t_end: float, sample_dt: float) -> np.ndarray:
    n = int(round(t_end / sample_dt))
    return np.linspace(0.0, n * sample_dt, n + 1)


def simulate(cfg: ExperimentConfig, nu: int, out_dir: Path | None = None,
             keep_trajectory: bool = False, problem: tuple[Datum, ModelParams] | None = None):
    """One run at level ``nu`` with all per-run audits; returns ``RunResult``.

    ``problem`` overrides the datum and model built from ``cfg``.  With
    ``keep_trajectory`` the trajectory is returned as a second value.
    """
    datum, params = problem if problem is not None else problem_of(cfg)[:2]
    q = datum.q(cfg.alpha)
    check_step_bounds(cfg.replace(nu=(nu,)), params.M, params.K, q)
    started = time.perf_counter()
    state = ft.init_from_data(datum.u_lagr, datum.v_lagr, nu, params, cfg.eta0, cfg.dt0,
                              cfg.n0, cfg.quantum0, q)
    t_end = cfg.t_end
    grid = sample_grid(t_end, cfg.sample_dt)
    traj = ft.run(state, t_end, grid, log_events=True, max_events=cfg.max_events,
                  a0=datum.a0, check_every=cfg.check_every, track_interfaces=True)
    res = RunResult(nu, True, q=q, n_events=len(traj.log), max_fronts=traj.max_fronts)
    _evaluate(res, traj, params, q)
    res.wall_time = time.perf_counter() - started
    res.audits = per_run_audits(res, cfg.audits)
    res.ok = all(res.audits.values())
    if out_dir is not None:
        write_run(out_dir, res, traj, params, q, cfg.write_events)
    return (res, traj) if keep_trajectory else res


def _evaluate(res: RunResult, traj: ft.Trajectory, params: ModelParams, q: float) -> None:
    alpha = params.alpha
    diags = [fn.sample(s, q) for s in traj.snapshots]
    profiles = [eb.reconstruct(s, params) for s in traj.snapshots]
    res.times = [d.t for d in diags]
    res.L = [d.L for d in diags]
    res.L0 = diags[0].L
    res.max_dL = float(traj.log.delta_L.max()) if len(traj.log) else 0.0
    res.closure_err = fn.closure_error(diags, traj.log)
    res.tv_violations = sum(d.tv_v > d.tv_bound(alpha) * (1 + 1e-12) + 1e-15 for d in diags)
    res.recon_err_max = max(abs(d.L - 0.5 * d.tv_ln_u) for d in diags)
    summary = fn.ledger_summary(traj.log, q)
    res.cases, res.case_failures = summary["counts"], summary["failures"]
    res.refl_bound_failures = _reflection_failures(traj.log)
    rho_inf = params.M / (profiles[-1].b - profiles[-1].a)
    res.rho_inf_est = rho_inf
    audits = [eb.audit_conservation(p, params, 0.0) for p in profiles]
    res.mass_err_max = max(a.mass_err for a in audits)
    res.momentum_err = [a.momentum_err for a in audits]
    metrics = [eb.flocking_metrics(p, rho_inf) for p in profiles]
    res.v_osc = [m.v_osc for m in metrics]
    res.rho_dev = [m.rho_dev for m in metrics]
    res.support = [m.support_len for m in metrics]
    res.interface_residual = traj.interface_residual
    res.consistency_residual = traj.final.consistency_residual()
    # trapped-region audit at every sample whose window fits in the run
    T_bar, C_R = fn.trap_constants(q, alpha, params.M, max(traj.final.u_max, 1e-300))
    res.T_bar, res.C_R = T_bar, C_R
    t_end = res.times[-1]
    starts = [t for t in res.times if t + T_bar <= t_end + 1e-12]
    sat = [fn.trap_audit(traj, traj.log, t, q).satisfied for t in starts]
    res.trap_windows = len(sat)
    res.trap_fraction = (sum(sat) / len(sat)) if sat else 1.0
    times, L = np.array(res.times), np.array(res.L)
    window = fn.decay_window(times, L)
    try:
        fit = fn.fit_decay(times, L, window)
        res.fit = fit.to_json()
    except ValueError as exc:
        res.fit = {"error": str(exc)}
    rep = fn.step_reflection_report(traj.log, q)
    res.step_reflection = asdict(rep)
    stride = max(1, int(round(1.0 / max(times[1] - times[0], 1e-12)))) if len(times) > 1 else 1
    res.profiles = [(p.t, p.edges.tolist(), p.rho.tolist()) for p in profiles[::stride]]


def _reflection_failures(log: ft.EventLog) -> int:
    bad = 0
    for i in np.flatnonzero(log.types == ft.EventType.COLLISION):
        e = log[int(i)]
        ok = fn.same_family_reflection_ok(e)
        if ok is False:
            bad += 1
    return bad


def per_run_audits(res: RunResult, enabled: Sequence[str]) -> dict:
    checks = {
        "ledger": res.max_dL <= 1e-10 and res.closure_err <= 1e-9 and res.L0 <= res.q + 1e-12,
        "cases": not any(res.case_failures.values()) and res.refl_bound_failures == 0,
        "tv": res.tv_violations == 0 and res.recon_err_max <= 1e-12,
        "mass": res.mass_err_max <= 1e-12,
        "trap": res.trap_fraction >= 0.99,
        "interface": res.interface_residual <= 1e-10,
        "consistency": res.consistency_residual <= 1e-10,
    }
    return {k: bool(v) for k, v in checks.items() if k in enabled}


def _thin(traj: ft.Trajectory, stride: int) -> ft.Trajectory:
    return ft.Trajectory(traj.params, traj.snapshots[::stride], traj.log, traj.final,
                         traj.boundary)


def write_run(out_dir: Path, res: RunResult, traj: ft.Trajectory, params: ModelParams,
              q: float, write_events: bool = True) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = f"nu{res.nu}"
    diags = [fn.sample(s, q) for s in traj.snapshots]
    fn.write_diagnostics_csv(out_dir / f"diagnostics_{tag}.csv", diags)
    profiles = [eb.reconstruct(s, params) for s in traj.snapshots]
    eb.write_profiles_csv(out_dir / f"profiles_{tag}.csv", profiles[:: max(1, len(profiles) // 40)])
    eb.write_audit_csv(out_dir / f"audit_{tag}.csv",
                       [eb.audit_conservation(p, params, 0.0) for p in profiles])
    ft.write_trajectory_csv(out_dir / f"trajectory_{tag}.csv",
                            _thin(traj, max(1, len(traj.snapshots) // 40)))
    if write_events:
        traj.log.write_jsonl(out_dir / f"events_{tag}.jsonl")
        # the full ledger is large; keep only the loss-carrying events
        recs = [fn.classify_event(traj.log[int(i)], q)
                for i in np.flatnonzero(np.abs(traj.log.delta_L) > 1e-15)]
        fn.write_ledger_csv(out_dir / f"ledger_{tag}.csv", recs)
    with open(out_dir / f"fit_{tag}.json", "w") as fh:
        json.dump(_finite(res.fit), fh, indent=2, sort_keys=True)
    with open(out_dir / f"run_{tag}.json", "w") as fh:
        json.dump(res.summary(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# suite

def l1_distance(p: tuple, r: tuple) -> float:
    """Exact L1 distance between two piecewise-constant densities (zero outside support)."""
    _, e1, d1 = p
    _, e2, d2 = r
    e1, d1, e2, d2 = map(np.asarray, (e1, d1, e2, d2))
    edges = np.union1d(e1, e2)
    mids = 0.5 * (edges[:-1] + edges[1:])

    def val(e, d, x):
        k = np.searchsorted(e, x, side="right") - 1
        inside = (k >= 0) & (k < len(d))
        return np.where(inside, d[np.clip(k, 0, len(d) - 1)], 0.0)

    return float(np.sum(np.abs(val(e1, d1, mids) - val(e2, d2, mids)) * np.diff(edges)))


def _run_isolated(args):
    cfg, nu, out_dir = args
    try:
        return simulate(cfg, nu, out_dir)
    except Exception as exc:  # isolate failures so the suite keeps going
        log.exception("run nu=%d failed", nu)
        return RunResult(nu, False, error=f"{type(exc).__name__}: {exc}")


@dataclass
class SuiteReport:
    config: dict
    runs: list[RunResult]
    momentum_ratios: list[float]
    l1_distances: list[float]
    audits: dict
    ok: bool
    timing: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return _finite({
            "config": self.config,
            "runs": [r.summary() for r in self.runs],
            "momentum_ratios": self.momentum_ratios,
            "l1_distances": self.l1_distances,
            "audits": self.audits,
            "ok": self.ok,
        })


def momentum_ratios(runs: Sequence[RunResult]) -> list[float]:
    errs = [max(r.momentum_err) if r.momentum_err else math.nan for r in runs]
    return [errs[k + 1] / errs[k] if errs[k] > 0 else math.nan for k in range(len(errs) - 1)]


def run_suite(cfg: ExperimentConfig, out_dir: Path | None = None) -> SuiteReport:
    datum, params, _ = problem_of(cfg)
    check_step_bounds(cfg, params.M, params.K, datum.q(cfg.alpha))
    levels = sorted(set(cfg.nu))
    started = time.perf_counter()
    jobs = [(cfg, nu, out_dir) for nu in levels]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            runs = list(pool.map(_run_isolated, jobs))
    else:
        runs = [_run_isolated(j) for j in jobs]
    good = [r for r in runs if r.error is None]
    ratios = momentum_ratios(good)
    dists = []
    for r0, r1 in zip(good[:-1], good[1:]):
        pairs = [(p, r) for p, r in zip(r0.profiles, r1.profiles) if p[0] == r[0]]
        dists.append(float(np.mean([l1_distance(p, r) for p, r in pairs])) if pairs else math.nan)
    audits = {}
    for name in cfg.audits:
        if name == "momentum_order":
            if len(ratios):
                audits[name] = all(0.3 <= x <= 0.7 for x in ratios)
        else:
            audits[name] = all(r.audits.get(name, False) for r in runs) if runs else True
    ok = all(audits.values()) and all(r.error is None for r in runs)
    report = SuiteReport(cfg.to_json(), runs, ratios, dists, audits, ok,
                         {"wall_time": time.perf_counter() - started})
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "summary.json", "w") as fh:
            json.dump(report.summary(), fh, indent=2, sort_keys=True)
        with open(out_dir / "timing.json", "w") as fh:
            json.dump({"suite": report.timing,
                       "runs": {r.nu: r.wall_time for r in runs}}, fh, indent=2)
    return report


def k_scaling(cfg: ExperimentConfig, nu: int, K: float = 4.0) -> dict:
    """Fitted decay rates of a datum at ``K = 1`` and of its matched datum at ``K``.

    The matched datum is ``rho(sqrt(K) x)``: after normalisation both runs
    are the same problem, so the rate ratio should be ``sqrt(K)``.  Both
    runs are simulated directly in original variables (damping ``K M``).
    """
    datum = cfg.build_datum()
    base = cfg.replace(normalize=False, K=1.0)
    r1 = simulate(base, nu, problem=(datum, ModelParams(cfg.alpha, datum.mass, 1.0)))
    lam = math.sqrt(K)
    matched = ScaledDatum(datum, 1.0 / lam, 0.0)
    rK = simulate(base.replace(K=K), nu,
                  problem=(matched, ModelParams(cfg.alpha, matched.mass, K)))
    c1, cK = r1.fit.get("C2", math.nan), rK.fit.get("C2", math.nan)
    return {"K": K, "nu": nu, "C2_K1": c1, "C2_K": cK, "ratio": cK / c1,
            "expected": lam, "runs_ok": r1.ok and rK.ok}


# ---------------------------------------------------------------------------
# Riemann fan

def riemann_fan(left: State, right: State, alpha: float) -> list[dict]:
    """Waves of the Riemann fan with kinds, sizes, speeds and bounding states."""
    e1, e2 = solve_riemann(left, right, alpha)
    mid = apply_wave(left, Family.ONE, e1, alpha)
    rows = []
    for fam, e, lo, hi in ((Family.ONE, e1, left, mid), (Family.TWO, e2, mid, right)):
        rows.append({
            "family": int(fam),
            "kind": Kind.of(e).value if e != 0 else "none",
            "size": e,
            "speed": lagrangian_speed(lo.u, hi.u, fam, alpha) if e != 0 else None,
            "left": list(lo),
            "right": list(hi),
        })
    return rows
