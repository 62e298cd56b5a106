"""Initial data in Eulerian variables and their Lagrangian samplers.

A datum is a density ``rho0 > 0`` and velocity ``v0`` on ``[a0, b0]``.
The mass coordinate ``y = int_a0^x rho0`` runs over ``(0, M)``; samplers
return ``u0(y) = 1/rho0(x(y))`` and ``v0(x(y))``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .wave_algebra import DomainError


class Datum:
    a0: float
    b0: float

    def rho(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def vel(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def mass(self) -> float:
        raise NotImplementedError

    def x_of_y(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def u_lagr(self, y: np.ndarray) -> np.ndarray:
        return 1.0 / self.rho(self.x_of_y(np.asarray(y, dtype=float)))

    def v_lagr(self, y: np.ndarray) -> np.ndarray:
        return self.vel(self.x_of_y(np.asarray(y, dtype=float)))

    def momentum(self) -> float:
        """``int rho0 v0 dx``."""
        raise NotImplementedError

    def q(self, alpha: float) -> float:
        """``TV(ln rho0)/2 + TV(v0)/(2 alpha)`` over the open support."""
        raise NotImplementedError

    def rho_min(self) -> float:
        raise NotImplementedError


@dataclass
class PiecewiseConstantDatum(Datum):
    """Cells ``[edges[k], edges[k+1])`` with constant density and velocity.

    A Riemann datum is the two-cell case.
    """
    edges: Sequence[float]
    rhos: Sequence[float]
    vels: Sequence[float]

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.rhos = np.asarray(self.rhos, dtype=float)
        self.vels = np.asarray(self.vels, dtype=float)
        if len(self.edges) != len(self.rhos) + 1 or len(self.rhos) != len(self.vels):
            raise DomainError("need len(edges) == len(rhos) + 1 == len(vels) + 1")
        if np.any(np.diff(self.edges) <= 0):
            raise DomainError("edges must increase")
        if np.any(self.rhos <= 0):
            raise DomainError("densities must be positive")
        self.a0, self.b0 = float(self.edges[0]), float(self.edges[-1])
        self._ycum = np.concatenate(([0.0], np.cumsum(self.rhos * np.diff(self.edges))))

    def _cell(self, x):
        return np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, len(self.rhos) - 1)

    def rho(self, x):
        return self.rhos[self._cell(np.asarray(x, dtype=float))]

    def vel(self, x):
        return self.vels[self._cell(np.asarray(x, dtype=float))]

    @property
    def mass(self):
        return float(self._ycum[-1])

    def x_of_y(self, y):
        y = np.asarray(y, dtype=float)
        k = np.clip(np.searchsorted(self._ycum, y, side="right") - 1, 0, len(self.rhos) - 1)
        return self.edges[k] + (y - self._ycum[k]) / self.rhos[k]

    def momentum(self):
        return float(np.sum(self.rhos * self.vels * np.diff(self.edges)))

    def q(self, alpha):
        return 0.5 * float(np.abs(np.diff(np.log(self.rhos))).sum()) + \
            float(np.abs(np.diff(self.vels)).sum()) / (2.0 * alpha)

    def rho_min(self):
        return float(self.rhos.min())


def riemann_datum(rho_l: float, v_l: float, rho_r: float, v_r: float,
                  a0: float = 0.0, x_mid: float = 0.5, b0: float = 1.0) -> PiecewiseConstantDatum:
    return PiecewiseConstantDatum([a0, x_mid, b0], [rho_l, rho_r], [v_l, v_r])


class _GridDatum(Datum):
    """Smooth datum with a numerically tabulated mass map."""

    n_grid = 1 << 16

    def _build(self):
        xs = np.linspace(self.a0, self.b0, self.n_grid + 1)
        self._xs = xs
        self._ys = cumulative_trapezoid(self.rho(xs), xs, initial=0.0)

    @property
    def mass(self):
        return float(self._ys[-1])

    def x_of_y(self, y):
        y = np.asarray(y, dtype=float)
        x = np.interp(y, self._ys, self._xs)
        # one Newton polish on the tabulated map
        k = np.clip(np.searchsorted(self._ys, y) - 1, 0, len(self._xs) - 2)
        ym = self._ys[k] + 0.5 * (self.rho(self._xs[k]) + self.rho(x)) * (x - self._xs[k])
        return x - (ym - y) / self.rho(x)

    def momentum(self):
        xs = self._xs
        return float(np.trapezoid(self.rho(xs) * self.vel(xs), xs))


def _bump(s: np.ndarray, width: float) -> np.ndarray:
    inside = np.abs(s) < 0.5 * width
    return np.where(inside, np.cos(np.pi * s / width) ** 2, 0.0)


@dataclass
class TwoBumpDatum(_GridDatum):
    """Background density with two smooth bumps carrying opposite velocities.

    ``rho0 = rho_b (1 + A1 phi(x - c1) + A2 phi(x - c2))`` and
    ``v0 = V1 phi(x - c1) + V2 phi(x - c2)`` with ``phi`` a cos^2 bump of
    width ``width``; ``rho_b`` is set so the total mass equals ``M``.
    """
    M: float = 1.0
    a0: float = 0.0
    b0: float = 1.0
    centers: tuple[float, float] = (0.3, 0.7)
    width: float = 0.3
    amps: tuple[float, float] = (0.35, 0.2)
    vels: tuple[float, float] = (0.3, -0.2)
    rho_b: float = field(init=False, default=1.0)

    def __post_init__(self):
        c1, c2 = self.centers
        w = self.width
        if not (self.a0 <= c1 - w / 2 and c1 + w / 2 <= c2 - w / 2 and c2 + w / 2 <= self.b0):
            raise DomainError("bumps must be disjoint and inside the support")
        if min(self.amps) <= -1:
            raise DomainError("bump amplitudes must keep the density positive")
        if not self.M > 0:
            raise DomainError("mass must be positive")
        # the cos^2 bump integrates to width/2
        unit = (self.b0 - self.a0) + 0.5 * w * sum(self.amps)
        self.rho_b = self.M / unit
        self._build()

    def _phis(self, x):
        x = np.asarray(x, dtype=float)
        return [_bump(x - c, self.width) for c in self.centers]

    def rho(self, x):
        p1, p2 = self._phis(x)
        return self.rho_b * (1.0 + self.amps[0] * p1 + self.amps[1] * p2)

    def vel(self, x):
        p1, p2 = self._phis(x)
        return self.vels[0] * p1 + self.vels[1] * p2

    @property
    def mass(self):
        return self.M

    def q(self, alpha):
        tv_log = sum(2.0 * abs(math.log1p(a)) for a in self.amps)
        tv_v = sum(2.0 * abs(v) for v in self.vels)
        return 0.5 * tv_log + tv_v / (2.0 * alpha)

    def rho_min(self):
        return self.rho_b * min(1.0, 1.0 + min(self.amps))


@dataclass
class TabulatedDatum(_GridDatum):
    """Point samples ``(x, rho, v)`` joined linearly."""
    x: Sequence[float]
    rhos: Sequence[float]
    vels: Sequence[float]

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.rhos = np.asarray(self.rhos, dtype=float)
        self.vels = np.asarray(self.vels, dtype=float)
        if not (len(self.x) == len(self.rhos) == len(self.vels) >= 2):
            raise DomainError("tabulated datum needs at least two aligned samples")
        if np.any(np.diff(self.x) <= 0):
            raise DomainError("sample positions must increase")
        if np.any(self.rhos <= 0):
            raise DomainError("densities must be positive")
        self.a0, self.b0 = float(self.x[0]), float(self.x[-1])
        self._build()

    @classmethod
    def from_csv(cls, path) -> "TabulatedDatum":
        with open(path, newline="") as fh:
            rows = [r for r in csv.DictReader(fh)]
        try:
            return cls([float(r["x"]) for r in rows], [float(r["rho"]) for r in rows],
                       [float(r["v"]) for r in rows])
        except KeyError as exc:
            raise DomainError(f"tabulated datum CSV needs columns x, rho, v (missing {exc})")

    def rho(self, x):
        return np.interp(x, self.x, self.rhos)

    def vel(self, x):
        return np.interp(x, self.x, self.vels)

    def q(self, alpha):
        return 0.5 * float(np.abs(np.diff(np.log(self.rhos))).sum()) + \
            float(np.abs(np.diff(self.vels)).sum()) / (2.0 * alpha)

    def rho_min(self):
        return float(self.rhos.min())


@dataclass
class ScaledDatum(Datum):
    """``rho(x / lam)`` on ``[lam a0, lam b0]`` with velocity shifted by ``-shift``."""
    base: Datum
    lam: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        self.a0 = self.lam * self.base.a0
        self.b0 = self.lam * self.base.b0

    def rho(self, x):
        return self.base.rho(np.asarray(x, dtype=float) / self.lam)

    def vel(self, x):
        return self.base.vel(np.asarray(x, dtype=float) / self.lam) - self.shift

    @property
    def mass(self):
        return self.lam * self.base.mass

    def x_of_y(self, y):
        return self.lam * self.base.x_of_y(np.asarray(y, dtype=float) / self.lam)

    def momentum(self):
        return self.lam * (self.base.momentum() - self.shift * self.base.mass)

    def q(self, alpha):
        # TV is invariant under the dilation; a constant shift leaves TV v unchanged
        return self.base.q(alpha)

    def rho_min(self):
        return self.base.rho_min()


def compressed(datum: Datum, factor: float) -> ScaledDatum:
    """``rho(factor x)`` on ``[a0/factor, b0/factor]``: mass divided by ``factor``."""
    return ScaledDatum(datum, 1.0 / factor, 0.0)
