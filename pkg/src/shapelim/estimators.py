"""Plug-in estimators read off a log-concave fit, and local diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mle import LogConcaveFit, fitted_processes
from .model import DensityModel, empirical_processes

__all__ = [
    "FitEvaluation",
    "LocalDiagnostics",
    "evaluate_fit",
    "mode_of_fit",
    "local_diagnostics",
    "local_scalings",
]


@dataclass(frozen=True)
class FitEvaluation:
    """Estimates at query points.

    ``phi_prime`` is the left derivative (right derivative at ``X(1)``).
    ``hazard`` is ``f / (1 - F)`` strictly inside the support and 0 elsewhere;
    ``hazard_defined`` marks the points where the ratio is meaningful.
    """

    x: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray
    f: np.ndarray
    f_prime: np.ndarray
    F: np.ndarray
    hazard: np.ndarray
    hazard_defined: np.ndarray

    def row(self, i: int = 0) -> dict:
        return {name: float(np.atleast_1d(getattr(self, name))[i]) for name in
                ("x", "phi", "phi_prime", "f", "f_prime", "F", "hazard")}


def evaluate_fit(fit: LogConcaveFit, x) -> FitEvaluation:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = fit.knots
    slopes = fit.phi_hat.slopes
    inside = (x >= t[0]) & (x <= t[-1])
    phi = fit.phi_hat(x)
    seg = np.clip(np.searchsorted(t, x, side="left") - 1, 0, len(t) - 2)
    phi_prime = np.where(inside, slopes[seg], np.nan)
    f = np.where(inside, np.exp(phi), 0.0)
    f_prime = np.where(inside, phi_prime * f, 0.0)
    F, _, S = fit.processes(x)
    # survival as a tail integral keeps the hazard accurate near X(n)
    defined = (x >= t[0]) & (x < t[-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        hazard = np.where(defined, f / np.where(defined, S, 1.0), 0.0)
    return FitEvaluation(x, phi, phi_prime, f, f_prime, F, hazard, defined)


def mode_of_fit(fit: LogConcaveFit) -> float:
    """Smallest maximiser of ``phi_hat``; always a knot."""
    return float(fit.knots[int(np.argmax(fit.values))])


def local_scalings(n: int, k: int) -> tuple[float, float]:
    """``(r_n, s_n) = (n^{(k+2)/(2k+1)}, n^{-1/(2k+1)})``."""
    return n ** ((k + 2) / (2 * k + 1)), n ** (-1.0 / (2 * k + 1))


@dataclass(frozen=True)
class LocalDiagnostics:
    r_n: float
    s_n: float
    A_hat: float
    B_hat: float
    t_grid: np.ndarray
    x_grid: np.ndarray
    Y_loc: np.ndarray
    H_loc: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        """``Y_loc - H_loc``; nonnegative for an optimal fit."""
        return self.Y_loc - self.H_loc


def _taylor_double_integral(m: DensityModel, d: np.ndarray) -> np.ndarray:
    # int_{x0}^{x0+d} int_{x0}^{v} sum_{j<k} f0^{(j)}(x0)/j! (u-x0)^j du dv
    out = np.zeros_like(d)
    for j in range(m.k):
        fj = m.density_derivative(m.x0, j) if j else m.f0
        out += fj / math.factorial(j) * d ** (j + 2) / ((j + 1) * (j + 2))
    return out


def local_diagnostics(fit: LogConcaveFit, m: DensityModel, t_grid, s=None) -> LocalDiagnostics:
    """Localised empirical and fitted integrated processes around ``m.x0``.

    Both processes are recentred by the Taylor polynomial of ``f0`` at
    ``x0`` of degree ``k - 1``; ``A_hat`` and ``B_hat`` are the rescaled
    discrepancies of ``Fhat`` and ``Hhat`` at ``x0``.
    """
    s = fit.sample if s is None else s
    if m.k is None:
        raise ValueError(f"{m.family}: local scaling needs a finite even k at x0")
    lo, hi = s.span
    x0 = m.x0
    if not lo <= x0 <= hi:
        raise ValueError(f"x0={x0} lies outside the sample span [{lo}, {hi}]")
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    r_n, s_n = local_scalings(s.n, m.k)
    x = x0 + s_n * t
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError("local grid escapes the sample span")
    Fn0, Hn0 = empirical_processes(s, x0)
    Fh0, Hh0 = fitted_processes(fit, x0)
    A_hat = r_n * s_n * (Fh0 - Fn0)
    B_hat = r_n * (Hh0 - Hn0)
    _, Hn = empirical_processes(s, x)
    _, Hh = fitted_processes(fit, x)
    d = x - x0
    poly = _taylor_double_integral(m, d)
    Y_loc = r_n * (Hn - Hn0 - Fn0 * d - poly)
    H_loc = r_n * (Hh - Hn0 - Fn0 * d - poly)
    return LocalDiagnostics(r_n, s_n, float(A_hat), float(B_hat), t, x, Y_loc, H_loc)
