"""Event-driven front tracking for the damped p-system on the mass interval (0, M).

The configuration is piecewise constant: ``n`` fronts sit at increasing
mass coordinates and ``n + 1`` states fill the gaps.  Fronts move on
straight lines ``y = icpt + spd * t`` so no position needs updating
between events.  Three kinds of event change the configuration:

* two adjacent fronts meet (``handle_collision``),
* the clock reaches a damping time ``t_n = n * dt`` (``handle_time_step``),
* the outermost front reaches ``y = 0`` or ``y = M`` (``handle_boundary``).

Damping is applied as a fractional step.  A front whose damped jump would
shed a reflected wave smaller than ``rho = quantum * L`` keeps its size and
carries the missed damping forward in ``defer``; the deferred factor is
applied in one piece once the reflected wave reaches ``rho``.  Reflections
below ``rho`` at same-family interactions are dropped the same way.  With
``quantum == 0`` every front is re-resolved at every step.  In both cases
``u`` is left unchanged and the total momentum ``int v dy`` is multiplied
by exactly ``1 - K M dt``.
"""
from __future__ import annotations

import array
import csv
import enum
import json
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterator, NamedTuple, Sequence

import numpy as np

from .wave_algebra import (
    DomainError,
    Family,
    Kind,
    ModelParams,
    State,
    apply_wave,
    h_vec,
    lagrangian_speed,
    solve_riemann,
    solve_riemann_vec,
    split_rarefaction,
    wave_residual,
)

if TYPE_CHECKING:
    from .eulerian_bridge import ConcentrationState

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


class ConsistencyError(RuntimeError):
    """Adjacent states drifted off the wave curve of the front between them."""


class EventCapExceeded(RuntimeError):
    pass


class EventType(enum.IntEnum):
    COLLISION = 0
    TIME_STEP = 1
    BOUNDARY_EXIT = 2

    @property
    def label(self) -> str:
        return self.name.lower()


class Wave(NamedTuple):
    family: Family
    size: float

    @property
    def kind(self) -> Kind:
        return Kind.of(self.size)


@dataclass(frozen=True)
class EventLogEntry:
    time: float
    type: EventType
    incoming: tuple[Wave, ...]
    outgoing: tuple[Wave, ...]
    position: float
    # damping factor applied to the jump (time steps only)
    factor: float = 1.0

    @property
    def delta_L(self) -> float:
        return sum(abs(w.size) for w in self.outgoing) - sum(abs(w.size) for w in self.incoming)

    def to_json(self) -> dict:
        def waves(ws):
            return [{"family": int(w.family), "kind": w.kind.value, "size": w.size} for w in ws]
        return {
            "time": self.time,
            "type": self.type.label,
            "incoming": waves(self.incoming),
            "outgoing": waves(self.outgoing),
            "position": self.position,
        }


class EventLog:
    """Append-only columnar store of events.

    Entries are rebuilt on access; the columns keep memory at a few dozen
    bytes per event, which matters for runs with ~10^6 crossings.
    """

    def __init__(self):
        self._time = array.array("d")
        self._type = array.array("b")
        self._pos = array.array("d")
        self._factor = array.array("d")
        self._dL = array.array("d")
        self._start = array.array("q", [0])
        self._n_in = array.array("b")
        self._wfam = array.array("b")
        self._wsize = array.array("d")

    def append(self, time, etype, incoming, outgoing, position, factor=1.0):
        self._time.append(time)
        self._type.append(int(etype))
        self._pos.append(position)
        self._factor.append(factor)
        dL = 0.0
        for fam, size in incoming:
            self._wfam.append(int(fam))
            self._wsize.append(size)
            dL -= abs(size)
        for fam, size in outgoing:
            self._wfam.append(int(fam))
            self._wsize.append(size)
            dL += abs(size)
        self._dL.append(dL)
        self._n_in.append(len(incoming))
        self._start.append(len(self._wsize))

    def __len__(self):
        return len(self._time)

    def __getitem__(self, i: int) -> EventLogEntry:
        if i < 0:
            i += len(self)
        lo, hi = self._start[i], self._start[i + 1]
        k = lo + self._n_in[i]
        waves = [Wave(Family(self._wfam[j]), self._wsize[j]) for j in range(lo, hi)]
        return EventLogEntry(self._time[i], EventType(self._type[i]),
                             tuple(waves[: k - lo]), tuple(waves[k - lo:]),
                             self._pos[i], self._factor[i])

    def __iter__(self) -> Iterator[EventLogEntry]:
        for i in range(len(self)):
            yield self[i]

    @property
    def times(self) -> np.ndarray:
        return np.frombuffer(self._time, dtype=float) if len(self) else np.zeros(0)

    @property
    def types(self) -> np.ndarray:
        return np.frombuffer(self._type, dtype=np.int8) if len(self) else np.zeros(0, np.int8)

    @property
    def delta_L(self) -> np.ndarray:
        return np.frombuffer(self._dL, dtype=float) if len(self) else np.zeros(0)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for entry in self:
                fh.write(json.dumps(entry.to_json()) + "\n")


@dataclass
class SimState:
    params: ModelParams
    eta: float
    dt: float
    quantum: float = 0.0
    time: float = 0.0
    step: int = 0
    fid: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    fam: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int8))
    eps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    icpt: np.ndarray = field(default_factory=lambda: np.zeros(0))
    spd: np.ndarray = field(default_factory=lambda: np.zeros(0))
    birth: np.ndarray = field(default_factory=lambda: np.zeros(0))
    defer: np.ndarray = field(default_factory=lambda: np.zeros(0))
    u: np.ndarray = field(default_factory=lambda: np.ones(1))
    v: np.ndarray = field(default_factory=lambda: np.zeros(1))
    exited: list = field(default_factory=list)
    next_id: int = 0
    u_min: float = math.inf
    u_max: float = 0.0
    # absolute reflection threshold, refreshed as quantum * L at every time step
    rho: float = 0.0

    @property
    def n_fronts(self) -> int:
        return len(self.eps)

    @property
    def M(self) -> float:
        return self.params.M

    def positions(self, t: float | None = None) -> np.ndarray:
        return self.icpt + self.spd * (self.time if t is None else t)

    def widths(self) -> np.ndarray:
        """Mass of each constant state (length ``n + 1``)."""
        edges = np.concatenate(([0.0], self.positions(), [self.M]))
        return np.diff(edges)

    def state(self, k: int) -> State:
        return State(float(self.u[k]), float(self.v[k]))

    def waves(self) -> list[Wave]:
        return [Wave(Family(int(f)), float(e)) for f, e in zip(self.fam, self.eps)]

    def copy(self) -> "SimState":
        out = SimState(self.params, self.eta, self.dt, self.quantum, self.time, self.step)
        for name in ("fid", "fam", "eps", "icpt", "spd", "birth", "defer", "u", "v"):
            setattr(out, name, getattr(self, name).copy())
        out.exited = list(self.exited)
        out.next_id, out.u_min, out.u_max = self.next_id, self.u_min, self.u_max
        out.rho = self.rho
        return out

    def consistency_residual(self) -> float:
        """Largest wave-curve mismatch over all fronts."""
        worst = 0.0
        a = self.params.alpha
        for k in range(self.n_fronts):
            r = wave_residual(self.state(k), self.state(k + 1), Family(int(self.fam[k])),
                              float(self.eps[k]), a)
            worst = max(worst, r)
        return worst

    def _record_band(self):
        if len(self.u):
            self.u_min = min(self.u_min, float(self.u.min()))
            self.u_max = max(self.u_max, float(self.u.max()))


# ---------------------------------------------------------------------------
# speeds

def _speeds(u_left: np.ndarray, u_right: np.ndarray, fam: np.ndarray, eps: np.ndarray,
            alpha: float) -> np.ndarray:
    """Vectorised ``-[v]/[u]``: geometric mean for shocks, log mean for rarefactions."""
    with np.errstate(divide="ignore", invalid="ignore"):
        logmean = (u_right - u_left) / np.log(u_right / u_left)
    logmean = np.where(u_right == u_left, u_left, logmean)
    geo = np.sqrt(u_left * u_right)
    u_tilde = np.where(eps < 0, geo, logmean)
    sign = np.where(fam == 1, -1.0, 1.0)
    return sign * alpha / u_tilde


# ---------------------------------------------------------------------------
# construction

def _fan(left: State, e1: float, e2: float, eta: float, alpha: float
         ) -> tuple[list[Wave], list[State]]:
    """Waves and right-hand states of the Riemann fan with sizes ``e1, e2``."""
    waves, states = [], []
    s = left
    for fam, e in ((Family.ONE, e1), (Family.TWO, e2)):
        if e == 0.0:
            continue
        pieces = split_rarefaction(e, eta) if e > eta else [e]
        for p in pieces:
            s = apply_wave(s, fam, p, alpha)
            waves.append(Wave(fam, p))
            states.append(s)
    return waves, states


def check_step_bound(params: ModelParams, dt: float, q: float) -> None:
    bound = min(1.0, 2.0 / math.cosh(q))
    if not params.damping * dt < bound:
        raise ConfigurationError(
            f"K*M*dt = {params.damping * dt:.6g} violates the bound min(1, 2/cosh q) = {bound:.6g}")


def init_from_cells(u_cells: Sequence[float], v_cells: Sequence[float], params: ModelParams,
                    eta: float, dt: float, quantum: float = 0.0) -> SimState:
    """Front configuration resolving equal-mass cells of constant ``(u, v)``."""
    u_cells = np.asarray(u_cells, dtype=float)
    v_cells = np.asarray(v_cells, dtype=float)
    if np.any(~(u_cells > 0)):
        raise DomainError("initial specific volume must be positive")
    if not (eta > 0 and dt > 0):
        raise ConfigurationError("eta and dt must be positive")
    n_cells = len(u_cells)
    alpha, M = params.alpha, params.M
    s = SimState(params, eta, dt, quantum)
    fams, sizes, pos, us, vs = [], [], [], [float(u_cells[0])], [float(v_cells[0])]
    for i in range(1, n_cells):
        left = State(us[-1], vs[-1])
        right = State(float(u_cells[i]), float(v_cells[i]))
        e1, e2 = solve_riemann(left, right, alpha)
        waves, states = _fan(left, e1, e2, eta, alpha)
        if waves:
            states[-1] = right
        else:
            us[-1], vs[-1] = right.u, right.v
            continue
        y = i * M / n_cells
        for w, st in zip(waves, states):
            fams.append(int(w.family))
            sizes.append(w.size)
            pos.append(y)
            us.append(st.u)
            vs.append(st.v)
    n = len(sizes)
    s.fam = np.array(fams, dtype=np.int8)
    s.eps = np.array(sizes, dtype=float)
    s.u = np.array(us)
    s.v = np.array(vs)
    s.fid = np.arange(n, dtype=np.int64)
    s.next_id = n
    s.birth = np.zeros(n)
    s.defer = np.ones(n)
    s.spd = _speeds(s.u[:-1], s.u[1:], s.fam, s.eps, alpha)
    s.icpt = np.array(pos, dtype=float)
    s._record_band()
    return s


def schedules(nu: int, eta0: float, dt0: float, n0: int, quantum0: float = 0.0):
    """Refinement schedule: ``eta, dt, quantum`` halve and the cell count doubles per level."""
    f = 2.0 ** (-nu)
    return eta0 * f, dt0 * f, n0 * 2 ** nu, quantum0 * f


def init_from_data(u0: Callable[[np.ndarray], np.ndarray], v0: Callable[[np.ndarray], np.ndarray],
                   nu: int, params: ModelParams, eta0: float = 0.05, dt0: float | None = None,
                   n0: int = 64, quantum0: float = 0.0, q: float | None = None) -> SimState:
    """Sample ``u0, v0`` at cell midpoints of the level-``nu`` grid and resolve the jumps.

    ``v0`` samples are shifted to exact zero mean over the cells.
    """
    if dt0 is None:
        dt0 = 0.02 / params.M
    eta, dt, n_cells, quantum = schedules(nu, eta0, dt0, n0, quantum0)
    if q is not None:
        check_step_bound(params, dt, q)
    y = (np.arange(n_cells) + 0.5) * params.M / n_cells
    u_cells = np.asarray(u0(y), dtype=float)
    v_cells = np.asarray(v0(y), dtype=float)
    if np.any(~(u_cells > 0)):
        raise DomainError("initial specific volume must be positive")
    v_cells = v_cells - v_cells.mean()
    return init_from_cells(u_cells, v_cells, params, eta, dt, quantum)


# ---------------------------------------------------------------------------
# events

class Event(NamedTuple):
    time: float
    type: EventType
    index: int  # pair index for collisions, front index for exits, -1 for time steps


def collision_times(s: SimState) -> np.ndarray:
    n = s.n_fronts
    if n < 2:
        return np.zeros(0)
    ds = s.spd[:-1] - s.spd[1:]
    gap = s.icpt[1:] - s.icpt[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        tc = np.where(ds > 0, gap / ds, np.inf)
    return np.maximum(tc, s.time)


def next_event(s: SimState) -> Event:
    """Earliest pending event; damping steps win ties, then the leftmost position."""
    t_step = (s.step + 1) * s.dt
    best = Event(t_step, EventType.TIME_STEP, -1)
    n = s.n_fronts
    if n == 0:
        return best
    best_t = math.inf
    best_ev = None
    if n >= 2:
        tc = collision_times(s)
        i = int(np.argmin(tc))
        if tc[i] < best_t:
            best_t, best_ev = float(tc[i]), Event(float(tc[i]), EventType.COLLISION, i)
    if s.spd[0] < 0:
        te = max(s.time, -s.icpt[0] / s.spd[0])
        if te < best_t or (te == best_t and best_ev is not None
                           and best_ev.type is EventType.COLLISION):
            best_t, best_ev = te, Event(te, EventType.BOUNDARY_EXIT, 0)
    if s.spd[-1] > 0:
        te = max(s.time, (s.M - s.icpt[-1]) / s.spd[-1])
        if te < best_t:
            best_t, best_ev = te, Event(te, EventType.BOUNDARY_EXIT, n - 1)
    if best_ev is None or t_step <= best_t:
        return best
    return best_ev


def _splice(s: SimState, lo: int, hi: int, waves: list[Wave], states: list[State],
            y: float, t: float, defer: Sequence[float] | None = None) -> None:
    """Replace fronts ``lo..hi-1`` and their interior states by a fan emitted at ``y``."""
    k = len(waves)
    alpha = s.params.alpha
    fam = np.array([int(w.family) for w in waves], dtype=np.int8)
    eps = np.array([w.size for w in waves], dtype=float)
    u_new = np.array([st.u for st in states[:-1]], dtype=float)
    v_new = np.array([st.v for st in states[:-1]], dtype=float)
    u_left = np.concatenate(([s.u[lo]], u_new)) if k else np.zeros(0)
    u_right = np.concatenate((u_new, [s.u[hi]])) if k else np.zeros(0)
    spd = _speeds(u_left, u_right, fam, eps, alpha)
    ids = np.arange(s.next_id, s.next_id + k, dtype=np.int64)
    s.next_id += k
    s.fid = np.concatenate((s.fid[:lo], ids, s.fid[hi:]))
    s.fam = np.concatenate((s.fam[:lo], fam, s.fam[hi:]))
    s.eps = np.concatenate((s.eps[:lo], eps, s.eps[hi:]))
    s.spd = np.concatenate((s.spd[:lo], spd, s.spd[hi:]))
    s.icpt = np.concatenate((s.icpt[:lo], y - spd * t, s.icpt[hi:]))
    s.birth = np.concatenate((s.birth[:lo], np.full(k, t), s.birth[hi:]))
    dfr = np.ones(k) if defer is None else np.asarray(defer, dtype=float)
    s.defer = np.concatenate((s.defer[:lo], dfr, s.defer[hi:]))
    # states: keep 0..lo and hi..n, replace the interior ones
    s.u = np.concatenate((s.u[: lo + 1], u_new, s.u[hi:]))
    s.v = np.concatenate((s.v[: lo + 1], v_new, s.v[hi:]))


def _momentum_preserving_shift(s: SimState, k: int, d: float, y: float) -> None:
    """Add ``d`` to the velocity jump at state boundary ``k`` keeping ``int v dy`` fixed."""
    if d == 0.0:
        return
    M = s.M
    s.v[k:] += d
    s.v -= d * (M - y) / M


def handle_collision(s: SimState, i: int, log_: EventLog | None = None,
                     tol: float = 1e-10) -> SimState:
    """Resolve the meeting of fronts ``i`` and ``i + 1`` in place."""
    alpha = s.params.alpha
    t = s.time
    y = float(s.icpt[i] + s.spd[i] * t)
    fam_l, fam_r = Family(int(s.fam[i])), Family(int(s.fam[i + 1]))
    a, b = float(s.eps[i]), float(s.eps[i + 1])
    left, right = s.state(i), s.state(i + 2)
    incoming = (Wave(fam_l, a), Wave(fam_r, b))
    defer = None
    d = 0.0
    if fam_l != fam_r:
        _cross(s, i, y, t, left, fam_r, b, alpha)
        if log_ is not None:
            log_.append(t, EventType.COLLISION, incoming, (Wave(fam_r, b), Wave(fam_l, a)), y)
        for j in (i, i + 1):
            r = wave_residual(s.state(j), s.state(j + 1), Family(int(s.fam[j])),
                              float(s.eps[j]), alpha)
            if r > tol:
                raise ConsistencyError(f"front {j} off its wave curve by {r:.3e} at t={t}")
        return s
    else:
        e1, e2 = solve_riemann(left, right, alpha)
        refl = e2 if fam_l is Family.ONE else e1
        if refl != 0.0 and abs(refl) < s.rho:
            # drop the small reflected wave; the velocity defect it would
            # have carried is spread over the whole interval
            total = a + b
            if fam_l is Family.ONE:
                e1, e2 = total, 0.0
            else:
                e1, e2 = 0.0, total
        waves, states = _fan(left, e1, e2, s.eta, alpha)
        if waves:
            d = states[-1].v - right.v
            states[-1] = State(right.u, right.v)
        else:
            d = left.v - right.v
    if waves:
        _splice(s, i, i + 2, waves, states, y, t, defer)
        _momentum_preserving_shift(s, i + len(waves), d, y)
    else:
        # complete cancellation: the two outer states merge
        for name in ("fid", "fam", "eps", "icpt", "spd", "birth", "defer"):
            arr = getattr(s, name)
            setattr(s, name, np.concatenate((arr[:i], arr[i + 2:])))
        s.u = np.concatenate((s.u[: i + 1], s.u[i + 3:]))
        s.v = np.concatenate((s.v[: i + 1], s.v[i + 3:]))
        _momentum_preserving_shift(s, i + 1, d, y)
    if log_ is not None:
        log_.append(t, EventType.COLLISION, incoming, waves, y)
    _check_local(s, max(i - 1, 0), min(len(waves) + 2, s.n_fronts - max(i - 1, 0)), tol)
    return s


def _cross(s: SimState, i: int, y: float, t: float, left: State, fam_r: Family, b: float,
           alpha: float) -> None:
    """Swap fronts ``i`` and ``i + 1`` of opposite families; sizes are unchanged.

    Wave curves are translation invariant in ``(ln u, v)``, so the crossing
    only replaces the middle state.
    """
    mid = apply_wave(left, fam_r, b, alpha)
    j = i + 1
    for arr in (s.fid, s.fam, s.eps, s.birth, s.defer):
        arr[i], arr[j] = arr[j], arr[i]
    s.u[j] = mid.u
    s.v[j] = mid.v
    u = s.u
    for k in (i, j):
        sp = lagrangian_speed(float(u[k]), float(u[k + 1]), Family(int(s.fam[k])), alpha)
        s.spd[k] = sp
        s.icpt[k] = y - sp * t
    if mid.u < s.u_min:
        s.u_min = mid.u
    if mid.u > s.u_max:
        s.u_max = mid.u


def _check_local(s: SimState, lo: int, k: int, tol: float) -> None:
    alpha = s.params.alpha
    for j in range(lo, lo + k):
        r = wave_residual(s.state(j), s.state(j + 1), Family(int(s.fam[j])),
                          float(s.eps[j]), alpha)
        if r > tol:
            raise ConsistencyError(f"front {j} off its wave curve by {r:.3e} at t={s.time}")
    s._record_band()


def handle_boundary(s: SimState, k: int, log_: EventLog | None = None) -> SimState:
    """Remove front ``k`` (first or last) that reached ``y = 0`` or ``y = M``."""
    n = s.n_fronts
    if n == 0:
        return s
    fam, eps = Family(int(s.fam[k])), float(s.eps[k])
    side = "left" if k == 0 else "right"
    if k == 0:
        keep = slice(1, None)
        s.u, s.v = s.u[1:], s.v[1:]
        y = 0.0
    elif k == n - 1:
        keep = slice(0, n - 1)
        s.u, s.v = s.u[:-1], s.v[:-1]
        y = s.M
    else:
        raise ValueError("only the outermost fronts can exit")
    for name in ("fid", "fam", "eps", "icpt", "spd", "birth", "defer"):
        setattr(s, name, getattr(s, name)[keep])
    s.exited.append((s.time, side, int(fam), eps))
    if log_ is not None:
        log_.append(s.time, EventType.BOUNDARY_EXIT, (Wave(fam, eps),), (), y)
    return s


def handle_time_step(s: SimState, log_: EventLog | None = None) -> SimState:
    """Apply the damping update ``v <- (1 - K M dt) v`` at ``t_n`` and re-resolve jumps."""
    alpha = s.params.alpha
    c = 1.0 - s.params.damping * s.dt
    t = s.time
    s.step += 1
    widths = s.widths()
    momentum = c * float(np.dot(widths, s.v))
    n = s.n_fronts
    if n == 0:
        s.v = s.v * c
        return s
    y = s.positions(t)
    old_fam, old_eps = s.fam, s.eps
    g = s.defer * c
    target_dv = g * alpha * h_vec(s.eps)
    dlog = np.log(s.u[1:] / s.u[:-1])
    e1, e2 = solve_riemann_vec(dlog, target_dv, alpha)
    is_one = s.fam == 1
    refl = np.where(is_one, e2, e1)
    s.rho = s.quantum * float(np.abs(s.eps).sum())
    resolve = (refl != 0.0) & (np.abs(refl) >= s.rho)

    # assemble the new front list: unresolved fronts keep their size
    counts = np.where(resolve, (e1 != 0).astype(int) + (e2 != 0).astype(int), 1)
    src = np.repeat(np.arange(n), counts)
    m = len(src)
    first = np.concatenate(([0], np.cumsum(counts)[:-1]))
    slot = np.arange(m) - np.repeat(first, counts)
    res_src = resolve[src]
    # within a resolved group the 1-wave precedes the 2-wave
    has1 = (e1 != 0)[src]
    pick_one = np.where(res_src, (slot == 0) & has1, is_one[src])
    new_fam = np.where(res_src, np.where(pick_one, 1, 2), s.fam[src]).astype(np.int8)
    new_eps = np.where(res_src, np.where(pick_one, e1[src], e2[src]), s.eps[src])
    new_defer = np.where(res_src, 1.0, g[src])
    new_birth = np.where(res_src, t, s.birth[src])
    new_id = s.fid[src].copy()
    n_new_ids = int(res_src.sum())
    new_id[res_src] = np.arange(s.next_id, s.next_id + n_new_ids)
    s.next_id += n_new_ids
    new_y = y[src]

    # states: u from the left boundary through the exact u-multipliers, pinned at group ends
    last_in_group = np.zeros(m, dtype=bool)
    last_in_group[np.cumsum(counts) - 1] = True
    new_u_right = np.where(last_in_group, s.u[1:][src],
                           s.u[:-1][src] * np.exp(np.where(new_fam == 1, 2.0, -2.0) * new_eps))
    new_u = np.concatenate(([s.u[0]], new_u_right))
    jumps = alpha * h_vec(new_eps)
    v_rel = np.concatenate(([0.0], np.cumsum(jumps)))
    new_widths = np.zeros(m + 1)
    new_widths[0] = widths[0]
    new_widths[1:][last_in_group] = widths[1:]
    shift = (momentum - float(np.dot(new_widths, v_rel))) / s.M
    new_v = v_rel + shift

    # rarefactions above the cap are split (rare: only large reflected rarefactions)
    big = new_eps > s.eta
    s.fid, s.fam, s.eps, s.birth, s.defer = new_id, new_fam, new_eps, new_birth, new_defer
    s.u, s.v = new_u, new_v
    s.spd = _speeds(new_u[:-1], new_u[1:], new_fam, new_eps, alpha)
    s.icpt = new_y - s.spd * t
    if big.any():
        _split_oversized(s, t)

    if log_ is not None and resolve.any():
        for k in np.flatnonzero(resolve):
            out = []
            if e1[k] != 0:
                out.append(Wave(Family.ONE, float(e1[k])))
            if e2[k] != 0:
                out.append(Wave(Family.TWO, float(e2[k])))
            log_.append(t, EventType.TIME_STEP, (Wave(Family(int(old_fam[k])), float(old_eps[k])),),
                        out, float(y[k]), float(g[k]))
    s._record_band()
    return s


def _split_oversized(s: SimState, t: float) -> None:
    alpha = s.params.alpha
    while True:
        big = np.flatnonzero(s.eps > s.eta)
        if len(big) == 0:
            return
        k = int(big[0])
        fam = Family(int(s.fam[k]))
        pieces = split_rarefaction(float(s.eps[k]), s.eta)
        left = s.state(k)
        states = []
        st = left
        for p in pieces:
            st = apply_wave(st, fam, p, alpha)
            states.append(st)
        states[-1] = s.state(k + 1)
        y = float(s.icpt[k] + s.spd[k] * t)
        _splice(s, k, k + 1, [Wave(fam, p) for p in pieces], states, y, t)


# ---------------------------------------------------------------------------
# driver

@dataclass
class Snapshot:
    time: float
    positions: np.ndarray
    fam: np.ndarray
    eps: np.ndarray
    u: np.ndarray
    v: np.ndarray
    a: float
    P_a: float
    P_b: float
    n_events: int
    step: int

    @property
    def n_fronts(self) -> int:
        return len(self.eps)

    def widths(self, M: float) -> np.ndarray:
        return np.diff(np.concatenate(([0.0], self.positions, [M])))


@dataclass
class Trajectory:
    params: ModelParams
    snapshots: list[Snapshot]
    log: EventLog
    final: SimState
    boundary: "ConcentrationState"
    max_fronts: int = 0
    wall_time: float = 0.0
    # worst |b' - v(M-)| over event-free intervals (when tracked)
    interface_residual: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])


def _snapshot(s: SimState, conc, n_events: int) -> Snapshot:
    return Snapshot(s.time, s.positions(), s.fam.copy(), s.eps.copy(), s.u.copy(), s.v.copy(),
                    conc.a, conc.P_a, conc.P_b, n_events, s.step)


def run(s: SimState, t_end: float, sample_times: Sequence[float] | None = None,
        log_events: bool = True, max_events: int = 10_000_000, a0: float = 0.0,
        full_logging: bool = False, check_every: int = 0,
        track_interfaces: bool = False) -> Trajectory:
    """Advance ``s`` in place to ``t_end`` and sample it at ``sample_times``.

    Samples are right-continuous: all events at a sample time are processed
    before the sample is taken.  ``check_every > 0`` verifies wave-curve
    consistency of the whole configuration every that many events.  With
    ``track_interfaces`` the right interface speed, which is linear in time
    between events, is compared with the velocity of the last state.
    """
    import time as _time

    from .eulerian_bridge import ConcentrationState, advance_concentrations

    if not t_end >= s.time:
        raise ConfigurationError("t_end must not precede the current time")
    samples = sorted(float(t) for t in (sample_times if sample_times is not None else [t_end]))
    samples = [t for t in samples if s.time <= t <= t_end]
    alpha = s.params.alpha
    conc = ConcentrationState(a=a0)
    conc.record_traces(s.time, alpha**2 / s.u[0], alpha**2 / s.u[-1])
    elog = EventLog()
    snaps: list[Snapshot] = []
    n_events = 0
    max_fronts = s.n_fronts
    started = _time.perf_counter()
    si = 0
    worst_b = 0.0

    def advance_to(t):
        nonlocal worst_b
        dt = t - s.time
        if dt > 0:
            if track_interfaces:
                b_rate = s.v[0] + float(np.dot(s.u[:-1] - s.u[1:], s.spd))
                worst_b = max(worst_b, abs(b_rate - s.v[-1]))
            advance_concentrations(conc, s, dt)
            s.time = t

    while si < len(samples) and samples[si] <= s.time:
        snaps.append(_snapshot(s, conc, n_events))
        si += 1
    while True:
        ev = next_event(s)
        # take every sample that precedes the next event
        while si < len(samples) and samples[si] < ev.time:
            advance_to(samples[si])
            snaps.append(_snapshot(s, conc, n_events))
            si += 1
        if ev.time > t_end:
            advance_to(t_end)
            break
        advance_to(ev.time)
        if ev.type is EventType.TIME_STEP:
            handle_time_step(s, elog if log_events else None)
        elif ev.type is EventType.COLLISION:
            handle_collision(s, ev.index, elog if log_events else None)
        else:
            handle_boundary(s, ev.index, elog if log_events else None)
        n_events += 1
        if ev.type is not EventType.COLLISION:
            conc.record_traces(s.time, alpha**2 / s.u[0], alpha**2 / s.u[-1])
        if n_events > max_events:
            raise EventCapExceeded(f"more than {max_events} events before t={s.time:.6g}")
        if s.n_fronts > max_fronts:
            max_fronts = s.n_fronts
        if check_every and n_events % check_every == 0:
            r = s.consistency_residual()
            if r > 1e-10:
                raise ConsistencyError(f"wave-curve residual {r:.3e} at t={s.time}")
        if full_logging:
            snaps.append(_snapshot(s, conc, n_events))
        # samples coinciding with this event time are taken after all events there
        while si < len(samples) and samples[si] == s.time:
            nxt = next_event(s)
            if nxt.time == s.time:
                break
            snaps.append(_snapshot(s, conc, n_events))
            si += 1
    while si < len(samples):
        snaps.append(_snapshot(s, conc, n_events))
        si += 1
    return Trajectory(s.params, snaps, elog, s, conc, max_fronts,
                      _time.perf_counter() - started, worst_b)


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """One row per constant state per snapshot: ``t, k, y_left, y_right, u, v``."""


    M = traj.params.M
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "k", "y_left", "y_right", "u", "v"])
        for snap in traj.snapshots:
            edges = np.concatenate(([0.0], snap.positions, [M]))
            for k in range(len(snap.u)):
                w.writerow([repr(snap.time), k, repr(float(edges[k])), repr(float(edges[k + 1])),
                            repr(float(snap.u[k])), repr(float(snap.v[k]))])
