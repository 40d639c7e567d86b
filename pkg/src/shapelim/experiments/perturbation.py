"""Local perturbations of a density at its mode and their Hellinger distance.

The log-concave family replaces ``phi0`` near the mode by two tangent lines
meeting at ``m0 - eps``: the tangent at ``m0 + eps`` on the right and the
tangent at ``m0 - c eps`` on the left, with ``c`` fixed by continuity.  The
unimodal family replaces ``f0`` on ``[m0 - eps, m0 + eps]`` by a line through
``(m0 - eps, f0(m0))`` carrying the same mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from ..model import DensityModel, ModelError

__all__ = [
    "PerturbationFamily",
    "UnimodalPerturbation",
    "PerturbationError",
    "HellingerReport",
    "logconcave_perturbation",
    "unimodal_perturbation",
    "hellinger2",
    "hellinger_rate",
]


class PerturbationError(ValueError):
    pass


def _quad(fn, a, b, epsrel=1e-12):
    val, _ = integrate.quad(fn, a, b, epsabs=0.0, epsrel=epsrel, limit=500)
    return float(val)


@dataclass(frozen=True, eq=False)
class PerturbationFamily:
    base: DensityModel = field(repr=False)
    eps: float
    c_eps: float
    log_mass: float
    """``log int h_eps``; ``f_eps = h_eps / int h_eps``."""

    @property
    def m0(self) -> float:
        return self.base.mode

    @property
    def knots(self) -> tuple[float, float, float]:
        m0, e = self.m0, self.eps
        return (m0 - e * self.c_eps, m0 - e, m0 + e)

    @property
    def mode(self) -> float:
        return self.m0 - self.eps

    def _lines(self):
        b = self.base
        left, _, right = self.knots
        return (left, b.phi(left), b.phi(left, 1)), (right, b.phi(right), b.phi(right, 1))

    def phi(self, x):
        """``phi_eps = log h_eps`` (unnormalised)."""
        x = np.asarray(x, dtype=float)
        (xl, vl, sl), (xr, vr, sr) = self._lines()
        _, mid, _ = self.knots
        out = np.asarray(self.base.phi(x), dtype=float)
        out = np.where((x >= xl) & (x <= mid), vl + sl * (x - xl), out)
        out = np.where((x > mid) & (x <= xr), vr + sr * (x - xr), out)
        return float(out) if out.ndim == 0 else out

    def log_density(self, x):
        return self.phi(x) - self.log_mass

    def density(self, x):
        return np.exp(self.log_density(x))

    def concavity_gap(self, n: int = 2001) -> float:
        """Largest second difference of ``phi_eps`` on a grid around the window (<= 0 when concave)."""
        left, _, right = self.knots
        w = right - left
        x = np.linspace(left - w, right + w, n)
        v = self.phi(x)
        return float(np.max(v[2:] - 2 * v[1:-1] + v[:-2]))


def _continuity_gap(c: float, m: DensityModel, eps: float) -> float:
    # difference of the two tangent lines at m0 - eps, as a function of c
    m0 = m.mode
    xr, xl = m0 + eps, m0 - c * eps
    right = m.phi(xr) + m.phi(xr, 1) * (-2.0 * eps)
    left = m.phi(xl) + m.phi(xl, 1) * (c - 1.0) * eps
    return float(right - left)


def logconcave_perturbation(m: DensityModel, eps: float) -> PerturbationFamily:
    """Tangent-line perturbation moving the mode of ``m`` to ``m0 - eps``."""
    if eps <= 0:
        raise PerturbationError("eps must be positive")
    m0 = m.mode
    if m.density_derivative(m0, 2) >= 0:
        raise ModelError("the perturbation needs f0''(m0) < 0")
    lo = 1.0 + 1e-9
    g_lo, g_hi = _continuity_gap(lo, m, eps), _continuity_gap(10.0, m, eps)
    if not g_lo * g_hi < 0:
        raise PerturbationError(f"no c_eps in (1, 10] for eps={eps}")
    c = optimize.bisect(_continuity_gap, lo, 10.0, args=(m, eps), xtol=1e-12, rtol=4 * 2.0**-52, maxiter=200)
    fam = PerturbationFamily(m, float(eps), float(c), 0.0)
    left, _, right = fam.knots
    mid = m0 - eps
    # mass added inside the window, relative to f0, computed without cancellation
    delta = sum(
        _quad(lambda x: m.density(x) * math.expm1(fam.phi(x) - m.phi(x)), a, b)
        for a, b in ((left, mid), (mid, right))
    )
    return PerturbationFamily(m, float(eps), float(c), math.log1p(delta))


@dataclass(frozen=True, eq=False)
class UnimodalPerturbation:
    base: DensityModel = field(repr=False)
    eps: float
    b_eps: float

    @property
    def m0(self) -> float:
        return self.base.mode

    @property
    def knots(self) -> tuple[float, float]:
        return (self.m0 - self.eps, self.m0 + self.eps)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.knots
        line = self.base.density(self.m0) + self.b_eps * (x - lo)
        out = np.where((x >= lo) & (x <= hi), line, self.base.density(x))
        return float(out) if out.ndim == 0 else out

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.knots
        inside = (x >= lo) & (x <= hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(inside, np.log(self.density(x)), self.base.phi(x))
        return float(out) if out.ndim == 0 else out

    def right_edge_raised(self) -> bool:
        _, hi = self.knots
        return bool(self.base.density(self.m0) + self.b_eps * 2 * self.eps > self.base.density(hi))


def unimodal_perturbation(m: DensityModel, eps: float) -> UnimodalPerturbation:
    """Linear replacement of ``f0`` on ``[m0 - eps, m0 + eps]`` with equal mass."""
    if eps <= 0:
        raise PerturbationError("eps must be positive")
    m0 = m.mode
    mass = _quad(m.density, m0 - eps, m0 + eps)
    b = (mass - 2.0 * eps * m.density(m0)) / (2.0 * eps**2)
    fam = UnimodalPerturbation(m, float(eps), float(b))
    if not fam.right_edge_raised():
        raise PerturbationError(f"no feasible b_eps for eps={eps}")
    if m.density(m0) + 2 * eps * b <= 0:
        raise PerturbationError(f"eps={eps} too large: the line turns negative")
    return fam


def hellinger2(
    log_f: Callable,
    log_g: Callable,
    breakpoints: Sequence[float] = (),
    support: tuple[float, float] = (-np.inf, np.inf),
    epsrel: float = 1e-12,
) -> float:
    """``H^2 = (1/2) int (sqrt f - sqrt g)^2`` for densities given by their logs.

    The integrand is written ``min(f, g) expm1(|log f - log g|/2)^2 / 2``,
    evaluated in logs, so nearby densities keep full relative accuracy and
    distant tails cannot overflow; quadrature is split at every
    breakpoint so kinks and jumps fall on interval ends.
    """
    lo, hi = support
    pts = sorted({float(p) for p in breakpoints if lo < p < hi})
    edges = [lo, *pts, hi]

    def integrand(x):
        lg = float(log_g(x))
        lf = float(log_f(x))
        if lg == -np.inf and lf == -np.inf:
            return 0.0
        lo, hi = min(lf, lg), max(lf, lg)
        if lo == -np.inf:
            return 0.5 * math.exp(hi)
        y = 0.5 * (hi - lo)
        # log expm1(y) without overflow for large y
        log_em1 = y + math.log1p(-math.exp(-y)) if y > 1.0 else math.log(math.expm1(y)) if y > 0 else -np.inf
        return 0.5 * math.exp(lo + 2.0 * log_em1)

    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if a < b:
            val, _ = integrate.quad(integrand, a, b, epsabs=1e-300, epsrel=epsrel, limit=500)
            total += val
    return float(total)


@dataclass(frozen=True)
class HellingerReport:
    eps: np.ndarray
    h2: np.ndarray
    exponent: float
    coefficient: float
    rho: float

    @property
    def ratio(self) -> np.ndarray:
        """``H^2 / (rho eps^5)``."""
        return self.h2 / (self.rho * self.eps**5)


def _family_h2(fam, base: DensityModel) -> float:
    return hellinger2(fam.log_density, base.log_density, fam.knots, base.support)


def hellinger_rate(m: DensityModel, eps_grid, family: str = "logconcave", rho: float | None = None) -> HellingerReport:
    """``H^2(f_eps, f0)`` over ``eps_grid`` with a log-log fit ``H^2 ~ C eps^p``."""
    eps = np.asarray(eps_grid, dtype=float)
    make = logconcave_perturbation if family == "logconcave" else unimodal_perturbation
    h2 = np.array([_family_h2(make(m, e), m) for e in eps])
    # a single eps gives no slope; report nan for the fit
    p, logc = np.polyfit(np.log(eps), np.log(h2), 1) if len(eps) > 1 else (math.nan, math.nan)
    if rho is None:
        f2 = m.density_derivative(m.mode, 2)
        rho = 2.0 * f2**2 / (5.0 * m.density(m.mode))
    return HellingerReport(eps, h2, float(p), float(math.exp(logc)), float(rho))
