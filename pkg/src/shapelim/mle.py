"""Log-concave maximum likelihood with an exact optimality certificate.

The estimator maximises ``L(phi) = sum_i w_i phi(X_i) - int exp(phi)`` over
concave ``phi``.  The maximiser is piecewise linear with knots at the
observations, so ``L`` is parameterised by values at the distinct points and
the integral is evaluated segment by segment in closed form.  Optimisation
runs the active-set scheme of :mod:`shapelim.activeset` with damped Newton
steps on the reduced (fixed-knot) problem.

Optimality is certified by comparing ``Hhat(x) = int_{X(1)}^x Fhat`` with
the integrated empirical CDF ``H_n``: the fit is the MLE iff ``Hhat <= H_n``
everywhere with equality at the knots.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solveh_banded

from .activeset import maximize_concave_pl
from .model import PiecewiseLinearConcave, Sample, empirical_processes
from .segments import exp_double_integral, exp_integral, segment_moments

__all__ = [
    "LogConcaveFit",
    "CharacterizationReport",
    "KnotGapReport",
    "fit_log_concave",
    "fitted_processes",
    "verify_characterization",
    "knot_gaps",
    "log_likelihood",
]


class _LikelihoodObjective:
    def __init__(self, s: Sample):
        self.x = s.points
        self.w = s.weights
        self.dx = np.diff(s.points)

    def initial(self, idx):
        return np.full(len(idx), -math.log(self.x[-1] - self.x[0]))

    def _hat_weights(self, idx):
        x, K = self.x, len(idx)
        t = x[idx]
        seg = np.clip(np.searchsorted(idx, np.arange(len(x)), side="right") - 1, 0, K - 2)
        lam = (x - t[seg]) / (t[seg + 1] - t[seg])
        return (np.bincount(seg, self.w * (1.0 - lam), minlength=K)
                + np.bincount(seg + 1, self.w * lam, minlength=K))

    def reduced_argmax(self, idx, theta, max_newton: int = 100):
        W = self._hat_weights(idx)
        L = np.diff(self.x[idx])
        theta = np.array(theta, dtype=float)

        def evaluate(th):
            # trial steps may overflow; the line search rejects non-finite values
            with np.errstate(over="ignore", invalid="ignore"):
                i0, i1, i2 = segment_moments(th[:-1], th[1:])
                return W @ th - L @ i0, (i0, i1, i2)

        val, (i0, i1, i2) = evaluate(theta)
        for _ in range(max_newton):
            grad = W.copy()
            grad[:-1] -= L * (i0 - i1)
            grad[1:] -= L * i1
            diag = np.zeros_like(theta)
            diag[:-1] += L * (i0 - 2.0 * i1 + i2)
            diag[1:] += L * i2
            ab = np.zeros((2, len(theta)))
            ab[0, 1:] = L * (i1 - i2)
            ab[1] = diag
            delta = solveh_banded(ab, grad, check_finite=False)
            dec = float(grad @ delta)
            if dec <= 1e-28:
                break
            step = 1.0
            slack = 1e-15 * (1.0 + abs(val))
            while True:
                cand = theta + step * delta
                cval, cmom = evaluate(cand)
                if cval >= val + 1e-4 * step * dec - slack or step < 1e-12:
                    break
                step *= 0.5
            if step < 1e-12:
                break
            theta, val, (i0, i1, i2) = cand, cval, cmom
            if dec <= 1e-24 and step == 1.0:
                # one more full step at quadratic convergence reaches rounding level
                continue
        return theta

    def point_gradient(self, values):
        i0, i1, _ = segment_moments(values[:-1], values[1:])
        g = self.w.copy()
        g[:-1] -= self.dx * (i0 - i1)
        g[1:] -= self.dx * i1
        return g


@dataclass(frozen=True, eq=False)
class LogConcaveFit:
    """Fitted log-density plus the data it certifies against."""

    phi_hat: PiecewiseLinearConcave
    knot_set: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    sample: Sample = field(repr=False)
    max_ramp_violation: float = 0.0

    @property
    def knots(self) -> np.ndarray:
        return self.phi_hat.knots

    @property
    def values(self) -> np.ndarray:
        return self.phi_hat.values

    @cached_property
    def _segment_mass(self) -> np.ndarray:
        v, t = self.values, self.knots
        return exp_integral(v[:-1], v[1:], np.diff(t))

    @cached_property
    def _F_knots(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self._segment_mass)))

    @cached_property
    def _S_knots(self) -> np.ndarray:
        # tail mass to the right of each knot, summed from the right
        return np.concatenate((np.cumsum(self._segment_mass[::-1])[::-1], [0.0]))

    @cached_property
    def _H_knots(self) -> np.ndarray:
        v, t = self.values, self.knots
        L = np.diff(t)
        inc = self._F_knots[:-1] * L + exp_double_integral(v[:-1], v[1:], L)
        return np.concatenate(([0.0], np.cumsum(inc)))

    @property
    def mass(self) -> float:
        return float(self._F_knots[-1])

    def _locate(self, x):
        t = self.knots
        seg = np.clip(np.searchsorted(t, x, side="right") - 1, 0, len(t) - 2)
        return seg

    def processes(self, x):
        """``(Fhat, Hhat, survival)`` at ``x``; survival is ``int_x^{X(n)} fhat``."""
        x = np.asarray(x, dtype=float)
        t, v = self.knots, self.values
        xc = np.clip(x, t[0], t[-1])
        seg = self._locate(xc)
        d = xc - t[seg]
        vx = v[seg] + (v[seg + 1] - v[seg]) / (t[seg + 1] - t[seg]) * d
        F = self._F_knots[seg] + exp_integral(v[seg], vx, d)
        H = self._H_knots[seg] + self._F_knots[seg] * d + exp_double_integral(v[seg], vx, d)
        S = self._S_knots[seg + 1] + exp_integral(vx, v[seg + 1], t[seg + 1] - xc)
        beyond = np.maximum(x - t[-1], 0.0)
        H = H + F * beyond
        below = x < t[0]
        F = np.where(below, 0.0, F)
        H = np.where(below, 0.0, H)
        S = np.where(below, self.mass, S)
        return F, H, S

    def to_dict(self, residuals: dict | None = None) -> dict:
        return {
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
            "knot_set": self.knot_set.tolist(),
            "loglik": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "n": self.sample.n,
            "residuals": residuals if residuals is not None else {"max_ramp_violation": self.max_ramp_violation},
        }

    def to_json(self, residuals: dict | None = None) -> str:
        return json.dumps(self.to_dict(residuals), indent=2)


def log_likelihood(phi: PiecewiseLinearConcave, s: Sample) -> float:
    """Adjusted criterion ``sum_i w_i phi(X_i) - int exp(phi)``."""
    vals = phi(s.points)
    if np.any(~np.isfinite(vals)):
        return -np.inf
    t, v = phi.knots, phi.values
    return float(s.weights @ vals - np.sum(exp_integral(v[:-1], v[1:], np.diff(t))))


def fit_log_concave(s: Sample, tol: float = 1e-8, max_iter: int = 500) -> LogConcaveFit:
    """Compute the log-concave MLE for ``s``.

    ``tol`` is relative: the fit is accepted once no ramp direction improves
    the criterion by more than ``tol * range / n``.  If ``max_iter`` outer
    iterations do not suffice the best iterate is returned with
    ``converged=False``.
    """
    obj = _LikelihoodObjective(s)
    abs_tol = tol * s.range / s.n
    res = maximize_concave_pl(obj, abs_tol, max_iter=max_iter)
    knots = s.points[res.knots]
    phi = PiecewiseLinearConcave(knots, res.theta)
    ll = log_likelihood(phi, s)
    return LogConcaveFit(phi, knots.copy(), ll, res.iterations, res.converged, s, res.max_violation)


def fitted_processes(fit: LogConcaveFit, x):
    """``(Fhat(x), Hhat(x))``, both anchored at ``X(1)``."""
    F, H, _ = fit.processes(x)
    if np.ndim(x) == 0:
        return float(F), float(H)
    return F, H


@dataclass(frozen=True)
class CharacterizationReport:
    max_violation: float
    knot_equality_gaps: np.ndarray
    bracket_ok: np.ndarray
    tol: float
    grid_size: int

    @property
    def passed(self) -> bool:
        return bool(
            self.max_violation <= self.tol
            and np.all(self.knot_equality_gaps <= self.tol)
            and np.all(self.bracket_ok)
        )

    def summary(self) -> dict:
        return {
            "max_violation": float(self.max_violation),
            "max_knot_gap": float(np.max(self.knot_equality_gaps)),
            "bracket_failures": int(np.sum(~self.bracket_ok)),
            "tol": self.tol,
            "grid_size": self.grid_size,
            "pass": self.passed,
        }


def verify_characterization(
    fit: LogConcaveFit,
    s: Sample | None = None,
    tol: float | None = None,
    *,
    per_gap: int = 10,
    bracket_tol: float = 1e-9,
    resolution: float = 1e-12,
) -> CharacterizationReport:
    """Check ``Hhat <= H_n`` with equality and the CDF bracket at knots.

    The inequality is checked at the sample points and ``per_gap`` interior
    points of every gap (``Hhat - H_n`` is convex between observations, so
    this is exhaustive).  The bracket is ``F_n(tau-) <= Fhat(tau) <= F_n(tau)``,
    which reduces to ``[F_n(tau) - 1/n, F_n(tau)]`` without ties.  Points
    within ``resolution * range`` of a knot count as tied with it: at that
    distance the criterion cannot tell which of them carries the knot.
    ``tol`` defaults to ``1e-7 * range / n``.
    """
    s = fit.sample if s is None else s
    if tol is None:
        tol = 1e-7 * s.range / s.n
    x = s.points
    frac = np.arange(1, per_gap + 1) / (per_gap + 1)
    inner = (x[:-1, None] + np.diff(x)[:, None] * frac[None, :]).ravel()
    grid = np.concatenate((x, inner))
    Fh, Hh = fitted_processes(fit, grid)
    _, Hn = empirical_processes(s, grid)
    max_violation = float(np.max(Hh - Hn))

    tau = fit.knot_set
    Fk, Hk = fitted_processes(fit, tau)
    _, Hn_k = empirical_processes(s, tau)
    gaps = np.abs(Hk - Hn_k)
    delta = resolution * s.range
    cw = np.concatenate(([0.0], np.cumsum(s.weights)))
    Fn_left = cw[np.searchsorted(s.points, tau - delta, side="left")]
    Fn_right = cw[np.searchsorted(s.points, tau + delta, side="right")]
    bracket = (Fk >= Fn_left - bracket_tol) & (Fk <= Fn_right + bracket_tol)
    return CharacterizationReport(max_violation, gaps, bracket, float(tol), len(grid))


@dataclass(frozen=True)
class KnotGapReport:
    tau_minus: float
    tau_plus: float
    max_gap: float
    window: tuple[float, float]
    n: int

    @property
    def gap(self) -> float:
        return self.tau_plus - self.tau_minus

    @property
    def max_gap_normalized(self) -> float:
        """``max_gap / (log(n)/n)**(1/5)``; bounded in probability when phi0'' < 0."""
        return self.max_gap / (math.log(self.n) / self.n) ** 0.2


def knot_gaps(fit: LogConcaveFit, x0: float, model=None) -> KnotGapReport:
    """Knots enclosing ``x0`` and the largest knot spacing on a window.

    The window is ``[F0^{-1}(0.1), F0^{-1}(0.9)]`` when ``model`` is given and
    the whole span otherwise.
    """
    tau = fit.knot_set
    if not tau[0] <= x0 <= tau[-1]:
        raise ValueError(f"x0={x0} lies outside the fit's support [{tau[0]}, {tau[-1]}]")
    j = np.searchsorted(tau, x0, side="left")
    if tau[j] == x0:
        lo = hi = float(x0)
    else:
        lo, hi = float(tau[j - 1]), float(tau[j])
    if model is not None:
        window = (model.quantile(0.1), model.quantile(0.9))
    else:
        window = (float(tau[0]), float(tau[-1]))
    inside = tau[(tau >= window[0]) & (tau <= window[1])]
    max_gap = float(np.max(np.diff(inside))) if inside.size >= 2 else float("nan")
    return KnotGapReport(lo, hi, max_gap, window, fit.sample.n)
