"""Wave-strength functionals, per-event accounting and decay estimation."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .front_tracker import EventLog, EventLogEntry, EventType, Trajectory
from .wave_algebra import DomainError, reflection_coefficient

LOG_FLOOR = 1e-13


@dataclass(frozen=True)
class DiagnosticsSample:
    t: float
    L: float
    R: float
    S: float
    tv_ln_u: float
    tv_v: float
    q: float = math.nan

    def tv_bound(self, alpha: float) -> float:
        return 2.0 * alpha * math.cosh(self.q) * self.L


def sample(s, q: float = math.nan) -> DiagnosticsSample:
    """Functionals of a state or snapshot (right-continuous at event instants)."""
    eps = np.asarray(s.eps, dtype=float)
    R = float(eps[eps > 0].sum())
    S = float(-eps[eps < 0].sum())
    u = np.asarray(s.u, dtype=float)
    v = np.asarray(s.v, dtype=float)
    return DiagnosticsSample(float(s.time), R + S, R, S,
                             float(np.abs(np.diff(np.log(u))).sum()),
                             float(np.abs(np.diff(v)).sum()), q)


def q_of_data(u0: np.ndarray, v0: np.ndarray, alpha: float) -> float:
    """``TV(ln u0)/2 + TV(v0)/(2 alpha)`` of sampled data (samples in order)."""
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if np.any(u0 <= 0):
        raise DomainError("specific volume samples must be positive")
    return 0.5 * float(np.abs(np.diff(np.log(u0))).sum()) + \
        float(np.abs(np.diff(v0)).sum()) / (2.0 * alpha)


class Case(str, Enum):
    BOUNDARY = "boundary"
    SR_TO_R = "SR_to_R"
    SR_TO_S = "SR_to_S"
    NEUTRAL = "neutral"


@dataclass(frozen=True)
class DeltaLRecord:
    tau: float
    case: Case
    dL: float
    dR_plus: float
    dR_minus: float
    participants: tuple[float, ...]
    bound: float = 0.0        # case bound the event was checked against
    ok: bool = True


def _rarefaction_total(waves) -> float:
    return sum(w.size for w in waves if w.size > 0)


def classify_event(e: EventLogEntry, q: float, tol: float = 1e-10) -> DeltaLRecord:
    dL = e.delta_L
    dR = _rarefaction_total(e.outgoing) - _rarefaction_total(e.incoming)
    sizes = tuple(w.size for w in e.incoming) + tuple(w.size for w in e.outgoing)
    rec = dict(tau=e.time, dL=dL, dR_plus=max(dR, 0.0), dR_minus=max(-dR, 0.0),
               participants=sizes)
    if e.type is EventType.BOUNDARY_EXIT:
        size = e.incoming[0].size
        return DeltaLRecord(case=Case.BOUNDARY, bound=-abs(size),
                            ok=abs(dL + abs(size)) <= tol, **rec)
    if e.type is EventType.COLLISION and len(e.incoming) == 2:
        w1, w2 = e.incoming
        if w1.family == w2.family and (w1.size < 0) != (w2.size < 0):
            shock = w1.size if w1.size < 0 else w2.size
            rare = w2.size if w1.size < 0 else w1.size
            outcome = sum(w.size for w in e.outgoing if w.family == w1.family)
            if outcome > 0:
                bound = -2.0 * abs(shock)
                return DeltaLRecord(case=Case.SR_TO_R, bound=bound,
                                    ok=abs(dL - bound) <= tol, **rec)
            if outcome < 0:
                bound = -4.0 * rare / (math.cosh(q) + 1.0)
                return DeltaLRecord(case=Case.SR_TO_S, bound=bound,
                                    ok=dL <= bound * (1.0 - 1e-8), **rec)
    return DeltaLRecord(case=Case.NEUTRAL, bound=0.0, ok=abs(dL) <= tol, **rec)


def same_family_reflection_ok(e: EventLogEntry, tol: float = 1e-12) -> bool | None:
    """Reflected-wave bound for a same-family interaction, or None if not applicable."""
    if e.type is not EventType.COLLISION or len(e.incoming) != 2:
        return None
    w1, w2 = e.incoming
    if w1.family != w2.family:
        return None
    refl = [w.size for w in e.outgoing if w.family != w1.family]
    if not refl:
        return True
    shocks = [abs(w.size) for w in e.incoming if w.size < 0]
    if not shocks:
        return None
    c = reflection_coefficient(max(shocks))
    return abs(sum(refl)) <= c * min(abs(w1.size), abs(w2.size)) + tol


def ledger(log: EventLog, q: float) -> list[DeltaLRecord]:
    return [classify_event(e, q) for e in log]


def ledger_summary(log: EventLog, q: float, tol: float = 1e-10) -> dict:
    """Aggregate case accounting without materialising every record.

    Neutral crossings are checked in bulk from the stored ``dL`` column.
    """
    dL = log.delta_L
    types = log.types
    counts = {c.value: 0 for c in Case}
    failures = {c.value: 0 for c in Case}
    worst_dL = float(dL.max()) if len(dL) else 0.0
    for i in range(len(log)):
        etype = types[i]
        if etype == EventType.COLLISION and abs(dL[i]) <= tol:
            # cheap path: the entry is neutral unless it is an SR interaction
            e = log[i]
            w1, w2 = e.incoming
            if w1.family != w2.family or (w1.size < 0) == (w2.size < 0):
                counts[Case.NEUTRAL.value] += 1
                continue
        elif etype == EventType.TIME_STEP:
            counts[Case.NEUTRAL.value] += 1
            if abs(dL[i]) > tol:
                failures[Case.NEUTRAL.value] += 1
            continue
        rec = classify_event(log[i], q, tol)
        counts[rec.case.value] += 1
        if not rec.ok:
            failures[rec.case.value] += 1
    return {"events": len(log), "max_dL": worst_dL, "counts": counts, "failures": failures}


def closure_error(samples: Sequence[DiagnosticsSample], log: EventLog) -> float:
    """Largest ``|L(t2) - L(t1) - sum dL|`` over consecutive sample pairs.

    Consecutive pairs suffice: any pair's error is bounded by the sum of
    these, and we also report the error against the first sample.
    """
    times = log.times
    cum = np.concatenate(([0.0], np.cumsum(log.delta_L)))
    worst = 0.0
    L0 = samples[0].L
    idx0 = np.searchsorted(times, samples[0].t, side="right")
    for s in samples[1:]:
        idx = np.searchsorted(times, s.t, side="right")
        worst = max(worst, abs(s.L - L0 - (cum[idx] - cum[idx0])))
    return worst


@dataclass(frozen=True)
class StepReflectionReport:
    n_events: int
    fraction_ok: float
    worst_constant: float   # min over events of |refl| / ((1 - g) |eps|)
    c1: float


def step_reflection_report(log: EventLog, q: float) -> StepReflectionReport:
    """Reflected-wave size after damping a shock, against ``(1 - g) c1(q) |eps|``.

    ``g`` is the damping factor actually applied to the jump; it equals
    ``1 - M dt`` when the front is re-resolved at every step.
    """
    c1 = 1.0 / (1.0 + math.cosh(q))
    n = ok = 0
    worst = math.inf
    for i in np.flatnonzero(log.types == EventType.TIME_STEP):
        e = log[int(i)]
        w = e.incoming[0]
        if w.size >= 0:
            continue
        refl = sum(abs(o.size) for o in e.outgoing if o.family != w.family)
        damp = 1.0 - e.factor
        if damp <= 0:
            continue
        n += 1
        ratio = refl / (damp * abs(w.size))
        worst = min(worst, ratio)
        ok += ratio >= c1 * (1.0 - 1e-12)
    return StepReflectionReport(n, ok / n if n else 1.0, worst, c1)


# ---------------------------------------------------------------------------
# trapped-region audit

@dataclass(frozen=True)
class TrapAuditReport:
    t: float
    T_bar: float
    R_at_t: float
    rhs: float
    C_R: float
    satisfied: bool


def trap_constants(q: float, alpha: float, M: float, u_sup: float) -> tuple[float, float]:
    """Window length ``T_bar = M / lambda_bar`` and prefactor ``C_R``."""
    lam_bar = 0.5 * alpha / u_sup
    T_bar = M / lam_bar
    C = min(1.0, (math.cosh(q) + 1.0) / 4.0)
    return T_bar, C * math.exp(M * T_bar)


def trap_audit(traj: Trajectory, log: EventLog, t: float, q: float,
               diagnostics: Sequence[DiagnosticsSample] | None = None) -> TrapAuditReport:
    params = traj.params
    u_sup = max(traj.final.u_max, 1e-300)
    T_bar, C_R = trap_constants(q, params.alpha, params.M, u_sup)
    t_end = traj.snapshots[-1].time
    if t + T_bar > t_end + 1e-12:
        raise DomainError(f"window [{t}, {t + T_bar}] exceeds the run end {t_end}")
    times = traj.times
    k = int(np.searchsorted(times, t, side="left"))
    if k >= len(times) or times[k] != t:
        raise DomainError(f"t={t} is not a sample time")
    snap = traj.snapshots[k]
    R = float(np.asarray(snap.eps)[np.asarray(snap.eps) > 0].sum())
    ev_t = log.times
    lo = np.searchsorted(ev_t, t, side="right")
    hi = np.searchsorted(ev_t, t + T_bar, side="right")
    rhs = C_R * float(np.abs(log.delta_L[lo:hi]).sum())
    return TrapAuditReport(t, T_bar, R, rhs, C_R, R <= rhs)


# ---------------------------------------------------------------------------
# decay fits

@dataclass(frozen=True)
class DecayFit:
    window: tuple[float, float]
    C1: float
    C2: float
    r2: float
    n_points: int
    T_star: float
    T_star_ok: bool
    fully_decayed: bool = False

    def to_json(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in d.items()}


def half_life(times: np.ndarray, L: np.ndarray, t_b: float | None = None,
              grid: np.ndarray | None = None) -> float:
    """Smallest grid shift ``T`` with ``L(tau + T) <= L(tau)/2`` for all sampled ``tau``.

    ``L`` is treated as a right-continuous step function through the samples.
    """
    times = np.asarray(times, dtype=float)
    L = np.asarray(L, dtype=float)
    if t_b is None:
        t_b = times[-1]
    if grid is None:
        steps = np.diff(times)
        h = float(np.min(steps[steps > 0])) if len(steps) else 1.0
        grid = h * np.arange(1, int(round((times[-1] - times[0]) / h)) + 1)
    for T in grid:
        taus = times[times <= t_b - T + 1e-12]
        if len(taus) == 0:
            break
        idx = np.searchsorted(times, taus + T - 1e-12, side="left")
        idx = np.minimum(idx, len(times) - 1)
        later = L[idx]
        if np.all(later <= 0.5 * L[: len(taus)] + 1e-300):
            return float(T)
    return math.inf


def fit_decay(times: Sequence[float], L: Sequence[float], window: tuple[float, float] | None = None,
              T_grid: np.ndarray | None = None) -> DecayFit:
    """Least-squares fit of ``L ~ C1 exp(-C2 t)`` on ``log L`` inside ``window``."""
    times = np.asarray(times, dtype=float)
    L = np.asarray(L, dtype=float)
    if window is None:
        window = (float(times[0]), float(times[-1]))
    t_a, t_b = window
    inside = (times >= t_a) & (times <= t_b)
    use = inside & (L >= LOG_FLOOR)
    T_star = half_life(times, L, None, T_grid)
    if not use.any():
        return DecayFit((t_a, t_b), 0.0, math.inf, math.nan, 0, T_star, math.isfinite(T_star), True)
    if use.sum() < 10:
        raise ValueError(f"need at least 10 samples with L > 0 in the window, got {int(use.sum())}")
    x, y = times[use], np.log(L[use])
    slope, intercept = np.polyfit(x, y, 1)
    pred = intercept + slope * x
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit((t_a, t_b), float(math.exp(intercept)), float(-slope), r2, int(use.sum()),
                    T_star, math.isfinite(T_star))


def decay_window(times: np.ndarray, L: np.ndarray, lo: float = 1e-10, frac: float = 0.1
                 ) -> tuple[float, float]:
    """Time span where ``lo <= L <= frac * L(0)``."""
    times = np.asarray(times)
    L = np.asarray(L)
    sel = (L >= lo) & (L <= frac * L[0])
    if not sel.any():
        return (float(times[0]), float(times[-1]))
    return float(times[sel].min()), float(times[sel].max())


# ---------------------------------------------------------------------------
# output

def write_diagnostics_csv(path, samples: Sequence[DiagnosticsSample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "L", "R", "S", "tv_ln_u", "tv_v"])
        for s in samples:
            w.writerow([repr(s.t), repr(s.L), repr(s.R), repr(s.S), repr(s.tv_ln_u), repr(s.tv_v)])


def write_ledger_csv(path, records: Sequence[DeltaLRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "case", "dL", "dR_plus", "dR_minus"])
        for r in records:
            w.writerow([repr(r.tau), r.case.value, repr(r.dL), repr(r.dR_plus), repr(r.dR_minus)])


def write_fit_json(path, fit: DecayFit, extra: dict | None = None) -> None:
    payload = fit.to_json()
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
