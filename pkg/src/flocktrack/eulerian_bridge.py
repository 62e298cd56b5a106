"""Eulerian view of a Lagrangian front configuration.

The mass interval ``(0, M)`` maps onto the moving support ``[a(t), b(t)]``
through ``x = a + int_0^y u``.  The left interface moves with the velocity
of the first state; the right one follows from mass transport.  Momentum
that piles up at the vacuum interfaces is carried by the weights ``P_a``,
``P_b``, which accumulate boundary pressure under the damping kernel.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .wave_algebra import ModelParams


@dataclass
class ConcentrationState:
    a: float = 0.0
    P_a: float = 0.0
    P_b: float = 0.0
    # change points (t, p) of the boundary pressures, right-continuous
    trace_a: list = field(default_factory=list)
    trace_b: list = field(default_factory=list)

    def record_traces(self, t: float, p_a: float, p_b: float) -> None:
        if not self.trace_a or self.trace_a[-1][1] != p_a:
            self.trace_a.append((t, float(p_a)))
        if not self.trace_b or self.trace_b[-1][1] != p_b:
            self.trace_b.append((t, float(p_b)))


def kernel_update(P: float, p: float, dt: float, rate: float) -> float:
    """Exact ``P' = p - rate P`` over ``dt`` with constant ``p``."""
    decay = math.exp(-rate * dt)
    return decay * P + p * (-math.expm1(-rate * dt)) / rate


def advance_concentrations(c: ConcentrationState, s, dt: float) -> ConcentrationState:
    """Move the left interface and the weights across an event-free interval."""
    if dt <= 0:
        return c
    alpha = s.params.alpha
    rate = s.params.damping
    c.a += float(s.v[0]) * dt
    c.P_a = kernel_update(c.P_a, alpha**2 / float(s.u[0]), dt, rate)
    c.P_b = kernel_update(c.P_b, alpha**2 / float(s.u[-1]), dt, rate)
    return c


def trace_integral(trace: Sequence[tuple[float, float]], t: float, rate: float,
                   n_sub: int = 64) -> float:
    """``int_0^t exp(-rate (t - s)) p(s) ds`` by composite Gauss-Legendre quadrature.

    Independent of the exact update in ``kernel_update``; used to audit it.
    """
    nodes, weights = np.polynomial.legendre.leggauss(n_sub)
    total = 0.0
    for k, (t0, p) in enumerate(trace):
        t1 = trace[k + 1][0] if k + 1 < len(trace) else t
        t1 = min(t1, t)
        if t1 <= t0:
            continue
        mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
        s = mid + half * nodes
        total += half * float(np.sum(weights * p * np.exp(-rate * (t - s))))
    return total


@dataclass(frozen=True)
class EulerianProfile:
    t: float
    a: float
    b: float
    breakpoints: np.ndarray  # interior x-positions, length n
    rho: np.ndarray          # length n + 1
    v: np.ndarray
    widths: np.ndarray       # mass of each cell
    P_a: float = 0.0
    P_b: float = 0.0

    @property
    def m(self) -> np.ndarray:
        return self.rho * self.v

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate(([self.a], self.breakpoints, [self.b]))

    def mass(self) -> float:
        return float(np.sum(self.rho * np.diff(self.edges)))

    def momentum(self) -> float:
        return float(np.sum(self.m * np.diff(self.edges)))

    def rho_at(self, x: np.ndarray) -> np.ndarray:
        """Density at ``x`` (zero outside the support)."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right")
        out = self.rho[np.clip(idx, 0, len(self.rho) - 1)]
        return np.where((x < self.a) | (x > self.b), 0.0, out)


def reconstruct(snap, params: ModelParams, a: float | None = None) -> EulerianProfile:
    """Eulerian profile of a snapshot or state.

    ``a`` defaults to the interface position stored on the snapshot.
    """
    M = params.M
    pos = np.asarray(snap.positions() if callable(snap.positions) else snap.positions)
    widths = np.diff(np.concatenate(([0.0], pos, [M])))
    a = float(snap.a if a is None else a)
    u = np.asarray(snap.u, dtype=float)
    x_cells = np.cumsum(u * widths)
    b = a + float(x_cells[-1])
    breaks = a + x_cells[:-1]
    return EulerianProfile(float(snap.time), a, b, breaks, 1.0 / u, np.asarray(snap.v).copy(),
                           widths, float(getattr(snap, "P_a", 0.0)), float(getattr(snap, "P_b", 0.0)))


class ConservationAudit(NamedTuple):
    t: float
    mass_err: float
    momentum_err: float


def audit_conservation(p: EulerianProfile, params: ModelParams, M1_ref: float = 0.0
                       ) -> ConservationAudit:
    mass = p.mass()
    momentum = p.momentum()
    return ConservationAudit(p.t, abs(mass - params.M), abs(momentum + p.P_b - p.P_a - M1_ref))


class FlockingMetrics(NamedTuple):
    support_len: float
    v_osc: float
    rho_dev: float


def flocking_metrics(p: EulerianProfile, rho_inf_est: float) -> FlockingMetrics:
    v_osc = float(p.v.max() - p.v.min())
    rho_dev = float(np.max(np.abs(p.rho - rho_inf_est)))
    return FlockingMetrics(p.b - p.a, v_osc, rho_dev)


def interface_residuals(profiles: Sequence[EulerianProfile], event_times: np.ndarray
                        ) -> tuple[float, float]:
    """Worst ``|a' - v(a+)|`` and ``|b' - v(b-)|`` over event-free sample intervals."""
    worst_a = worst_b = 0.0
    ev = np.asarray(event_times, dtype=float)
    for p0, p1 in zip(profiles[:-1], profiles[1:]):
        dt = p1.t - p0.t
        if dt <= 0:
            continue
        # skip intervals that contain an event
        lo = np.searchsorted(ev, p0.t, side="right")
        hi = np.searchsorted(ev, p1.t, side="right")
        if hi > lo:
            continue
        worst_a = max(worst_a, abs((p1.a - p0.a) / dt - p0.v[0]))
        worst_b = max(worst_b, abs((p1.b - p0.b) / dt - p0.v[-1]))
    return worst_a, worst_b


def write_profiles_csv(path, profiles: Sequence[EulerianProfile]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "a", "b", "P_a", "P_b", "x_left", "x_right", "rho", "v"])
        for p in profiles:
            edges = p.edges
            for k in range(len(p.rho)):
                w.writerow([repr(p.t), repr(p.a), repr(p.b), repr(p.P_a), repr(p.P_b),
                            repr(float(edges[k])), repr(float(edges[k + 1])),
                            repr(float(p.rho[k])), repr(float(p.v[k]))])


def write_audit_csv(path, audits: Sequence[ConservationAudit]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mass_err", "momentum_err"])
        for a in audits:
            w.writerow([repr(a.t), repr(a.mass_err), repr(a.momentum_err)])
