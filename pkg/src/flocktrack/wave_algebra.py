"""Exact wave curves and Riemann solver for the isothermal p-system.

Lagrangian states are pairs ``(u, v)`` with specific volume ``u = 1/rho``
and velocity ``v``; the pressure is ``p = alpha**2 / u``.  In the plane
``(ln u, v)`` every wave curve is a translate of a fixed curve, which is
what makes the calculus below exact:

* family 1:  ``ln u`` increases by ``2 eps``, ``v`` increases by ``alpha h(eps)``
* family 2:  ``ln u`` decreases by ``2 eps``, ``v`` increases by ``alpha h(eps)``

with ``h(eps) = 2 eps`` on the rarefaction branch (``eps > 0``) and
``h(eps) = 2 sinh(eps)`` on the shock branch (``eps < 0``).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SIZE_CLAMP = 1e-14
# relative stopping tolerance on the reduced equation; Newton converges
# quadratically, so this costs at most one extra iteration over 1e-12
RIEMANN_TOL = 1e-14
RIEMANN_MAXITER = 100


class DomainError(ValueError):
    """An argument lies outside the domain of a wave-curve operation."""


class ContractViolation(ValueError):
    """Two states are not connected by the requested single wave."""


class Family(enum.IntEnum):
    ONE = 1
    TWO = 2

    @property
    def sign(self) -> int:
        """Sign of the characteristic speed (-1 for family 1, +1 for family 2)."""
        return -1 if self is Family.ONE else 1


class Kind(str, enum.Enum):
    SHOCK = "shock"
    RAREFACTION = "rarefaction"

    @classmethod
    def of(cls, eps: float) -> "Kind":
        return cls.SHOCK if eps < 0 else cls.RAREFACTION


class State(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    M: float
    K: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "M", "K"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise DomainError(f"{name} must be positive and finite, got {val!r}")

    @property
    def damping(self) -> float:
        """Relaxation rate K*M of the Lagrangian velocity equation."""
        return self.K * self.M


def h(eps: float) -> float:
    return 2.0 * eps if eps >= 0 else 2.0 * math.sinh(eps)


def dh(eps: float) -> float:
    return 2.0 if eps >= 0 else 2.0 * math.cosh(eps)


def h_vec(eps: np.ndarray) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    return np.where(eps >= 0, 2.0 * eps, 2.0 * np.sinh(np.minimum(eps, 0.0)))


def wave_size(u_left: float, u_right: float, family: Family) -> float:
    if not (u_left > 0 and u_right > 0):
        raise DomainError(f"specific volumes must be positive: {u_left}, {u_right}")
    half_log = 0.5 * math.log(u_right / u_left)
    return half_log if family is Family.ONE else -half_log


def v_jump(eps: float, alpha: float) -> float:
    """Velocity jump ``v_r - v_l`` across a single front of size ``eps``."""
    return alpha * h(eps)


def apply_wave(left: State, family: Family, eps: float, alpha: float) -> State:
    if not left.u > 0:
        raise DomainError(f"specific volume must be positive: {left.u}")
    dlog = 2.0 * eps if family is Family.ONE else -2.0 * eps
    return State(left.u * math.exp(dlog), left.v + alpha * h(eps))


def wave_residual(left: State, right: State, family: Family, eps: float,
                  alpha: float) -> float:
    """Max-norm mismatch between ``right`` and the end of the wave curve from ``left``."""
    end = apply_wave(left, family, eps, alpha)
    return max(abs(math.log(end.u / right.u)), abs(end.v - right.v))


def _clamp(eps: float) -> float:
    return 0.0 if abs(eps) < SIZE_CLAMP else eps


def solve_riemann(left: State, right: State, alpha: float) -> tuple[float, float]:
    """Sizes ``(eps1, eps2)`` of the 1- and 2-waves joining ``left`` to ``right``.

    The unknowns satisfy ``eps1 - eps2 = d`` with ``d = ln(u_r/u_l)/2`` and
    ``h(eps1) + h(eps2) = w`` with ``w = (v_r - v_l)/alpha``.  Eliminating
    ``eps2`` leaves a scalar equation whose derivative is at least 4, so the
    root is bracketed by ``x0 -/+ |f(x0)|/4`` and safeguarded Newton always
    converges.
    """
    if not (left.u > 0 and right.u > 0):
        raise DomainError("specific volumes must be positive")
    d = 0.5 * math.log(right.u / left.u)
    w = (right.v - left.v) / alpha
    if d == 0.0 and w == 0.0:
        return 0.0, 0.0

    def f(x):
        return h(x) + h(x - d) - w

    x = 0.25 * w + 0.5 * d  # exact when both waves are rarefactions
    fx = f(x)
    lo, hi = x - abs(fx) / 4.0, x + abs(fx) / 4.0
    scale = max(1.0, abs(w))
    for _ in range(RIEMANN_MAXITER):
        if abs(fx) <= RIEMANN_TOL * scale:
            break
        if fx > 0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        step = fx / (dh(x) + dh(x - d))
        xn = x - step
        if not lo <= xn <= hi:
            xn = 0.5 * (lo + hi)
        if xn == x:
            break
        x, fx = xn, f(xn)
    else:
        raise ArithmeticError(f"Riemann solve did not converge: left={left}, right={right}")
    return _clamp(x), _clamp(x - d)


def solve_riemann_vec(dlog: np.ndarray, dv: np.ndarray, alpha: float
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``solve_riemann`` on jumps ``ln(u_r/u_l)`` and ``v_r - v_l``."""
    d = 0.5 * np.asarray(dlog, dtype=float)
    w = np.asarray(dv, dtype=float) / alpha
    x = 0.25 * w + 0.5 * d
    fx = h_vec(x) + h_vec(x - d) - w
    lo = x - np.abs(fx) / 4.0
    hi = x + np.abs(fx) / 4.0
    tol = RIEMANN_TOL * np.maximum(1.0, np.abs(w))
    for _ in range(RIEMANN_MAXITER):
        active = np.abs(fx) > tol
        if not active.any():
            break
        hi = np.where(active & (fx > 0), np.minimum(hi, x), hi)
        lo = np.where(active & (fx <= 0), np.maximum(lo, x), lo)
        deriv = _dh_vec(x) + _dh_vec(x - d)
        xn = x - fx / deriv
        xn = np.where((xn < lo) | (xn > hi), 0.5 * (lo + hi), xn)
        x = np.where(active, xn, x)
        fx = h_vec(x) + h_vec(x - d) - w
    else:
        raise ArithmeticError("vectorised Riemann solve did not converge")
    e1 = np.where(np.abs(x) < SIZE_CLAMP, 0.0, x)
    e2 = x - d
    e2 = np.where(np.abs(e2) < SIZE_CLAMP, 0.0, e2)
    return e1, e2


def _dh_vec(eps: np.ndarray) -> np.ndarray:
    return np.where(eps >= 0, 2.0, 2.0 * np.cosh(np.minimum(eps, 0.0)))


def lagrangian_speed(u_left: float, u_right: float, family: Family, alpha: float) -> float:
    """Speed ``-[v]/[u]`` of an exact front between two volumes.

    For a shock this is ``alpha/sqrt(u_l u_r)``; for a rarefaction front it is
    ``alpha/u_tilde`` with ``u_tilde`` the logarithmic mean of the two volumes.
    """
    if u_left == u_right:
        u_tilde = u_left
    else:
        ratio = u_right / u_left
        if family is Family.ONE:
            eps = 0.5 * math.log(ratio)
        else:
            eps = -0.5 * math.log(ratio)
        if eps < 0:
            u_tilde = math.sqrt(u_left * u_right)
        else:
            u_tilde = (u_right - u_left) / math.log(ratio)
    return family.sign * alpha / u_tilde


def front_speed(left: State, right: State, family: Family, kind: Kind, alpha: float,
                tol: float = 1e-10) -> float:
    eps = wave_size(left.u, right.u, family)
    if eps != 0.0 and Kind.of(eps) is not kind:
        raise ContractViolation(f"states do not bound a {kind.value} of family {int(family)}")
    if wave_residual(left, right, family, eps, alpha) > tol:
        raise ContractViolation("states are not connected by a single wave")
    return lagrangian_speed(left.u, right.u, family, alpha)


def split_rarefaction(eps: float, eta: float) -> list[float]:
    if not eps > 0:
        raise DomainError(f"rarefaction size must be positive, got {eps}")
    if not eta > 0:
        raise DomainError(f"rarefaction cap must be positive, got {eta}")
    n = max(1, math.ceil(eps / eta - 1e-12))
    return [eps / n] * n


def reflection_coefficient(x: float) -> float:
    """``(cosh x - 1)/(cosh x + 1)``: bound on reflected over incoming size."""
    c = math.cosh(x)
    return (c - 1.0) / (c + 1.0)


class VacuumShockSample(NamedTuple):
    delta: float
    sigma: float
    v_right: float


def vacuum_shock_study(rho_left: float, v_left: float, alpha: float,
                       deltas) -> list[VacuumShockSample]:
    """2-shocks from ``(rho_left, v_left)`` into densities ``delta -> 0``.

    The shock speed approaches ``v_left`` like ``alpha*sqrt(delta)``.
    """
    if not rho_left > 0:
        raise DomainError("left density must be positive")
    out = []
    for delta in deltas:
        if not 0 < delta < rho_left:
            raise DomainError(f"need 0 < delta < rho_left, got delta={delta}")
        p_l, p_d = alpha**2 * rho_left, alpha**2 * delta
        v_r = v_left - math.sqrt((p_d - p_l) * (delta - rho_left) / (delta * rho_left))
        sigma = (rho_left * v_left - delta * v_r) / (rho_left - delta)
        out.append(VacuumShockSample(delta, sigma, v_r))
    return out
