"""Active-set maximisation over concave piecewise-linear functions.

Both the log-concave MLE and the discrete envelope problem maximise a
concave objective over functions that are concave and piecewise linear on a
fixed increasing point set ``x``.  Such a function is determined by its knot
indices and its values there.  The working set is the set of knots:

* with the knots fixed the problem is unconstrained and is handed to the
  objective (``reduced_argmax``);
* if the reduced optimum is not concave we move towards it only until the
  first slope constraint becomes tight and drop that knot;
* if it is concave we look at the directional derivative of every ramp
  ``-(x - x_j)_+`` (the extreme rays of the concave cone) and add a knot in
  each gap where it is positive.

The directional derivatives double as the optimality certificate: at the
optimum they are ``<= 0`` everywhere and ``0`` at knots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np


class ReducedObjective(Protocol):
    x: np.ndarray

    def initial(self, idx: np.ndarray) -> np.ndarray: ...

    def reduced_argmax(self, idx: np.ndarray, theta: np.ndarray) -> np.ndarray: ...

    def point_gradient(self, values: np.ndarray) -> np.ndarray: ...


@dataclass
class ActiveSetResult:
    knots: np.ndarray
    theta: np.ndarray
    values: np.ndarray
    ramp_derivatives: np.ndarray
    iterations: int
    converged: bool
    max_violation: float


def slope_drops(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``s_{j-1} - s_j`` at interior knots; concavity means all are >= 0."""
    s = np.diff(v) / np.diff(t)
    return s[:-1] - s[1:]


def ramp_derivatives(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Directional derivatives along ``-(x - x_j)_+`` for every ``j``.

    ``grad`` is the gradient of the objective with respect to the values at
    all points.  Uses the recursion ``R_j = R_{j+1} + (x_{j+1} - x_j) S_{j+1}``
    with ``S`` the tail sums of ``grad``, which avoids forming ``x_i - x_j``.
    """
    tail = np.cumsum(grad[::-1])[::-1]
    inc = np.diff(x) * tail[1:]
    r = np.zeros_like(grad)
    r[:-1] = np.cumsum(inc[::-1])[::-1]
    return -r


def local_ramp_derivatives(x: np.ndarray, grad: np.ndarray, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ramp derivatives re-anchored at the nearest knot, with error bounds.

    At an optimum for the knots ``idx`` the ramp derivatives vanish at the
    knots, so between two knots they are short sums of the increments of
    ``ramp_derivatives`` taken from either end.  These keep the accuracy of
    the local scale where the global sums only resolve ``eps * max|R|``.
    Returns the values and a bound on their rounding error.
    """
    tail = np.cumsum(grad[::-1])[::-1]
    inc = np.diff(x) * tail[1:]
    c = 4.0 * np.finfo(float).eps * len(x) * float(np.sum(np.abs(grad)))
    out = np.zeros_like(grad)
    err = np.zeros_like(grad)
    for a, b in zip(idx[:-1], idx[1:]):
        if b - a < 2:
            continue
        seg = inc[a:b]
        left = np.cumsum(seg)[:-1]
        right = -np.cumsum(seg[::-1])[::-1][1:]
        dl = x[a + 1:b] - x[a]
        dr = x[b] - x[a + 1:b]
        use_left = dl <= dr
        out[a + 1:b] = np.where(use_left, left, right)
        err[a + 1:b] = c * np.where(use_left, dl, dr)
    return out, err


def _feasible_step(obj, x, idx, theta, star, feas_tol):
    """Walk from feasible ``theta`` towards ``star``; drop the blocking knots."""
    t = x[idx]
    c_old = slope_drops(t, theta)
    c_new = slope_drops(t, star)
    blocking = c_new < -feas_tol
    denom = c_old - c_new
    # a blocking knot that is not improving (rounding on tiny segments) is dropped at step 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(blocking, np.where(denom > 0, np.maximum(c_old, 0.0) / denom, 0.0), np.inf)
    j = int(np.argmin(ratio))
    step = float(np.clip(ratio[j], 0.0, 1.0))
    theta = theta + step * (star - theta)
    c_mid = c_old + step * (c_new - c_old)
    # knots that were just inserted sit at c_old == 0; only blocking ones leave
    drop = blocking & (c_mid <= feas_tol)
    drop[j] = True
    keep = np.ones(len(idx), dtype=bool)
    keep[1:-1] = ~drop
    return idx[keep], theta[keep]


def maximize_concave_pl(
    obj: ReducedObjective,
    tol: float,
    *,
    max_iter: int = 500,
    feas_rtol: float = 1e-13,
    polish_rtol: float = 0.0,
    max_polish: int = 10,
    resolution: float = 1e-12,
) -> ActiveSetResult:
    """Maximise ``obj`` over concave piecewise-linear functions on ``obj.x``.

    ``tol`` bounds the positive part of the ramp derivatives at convergence.
    Once that holds, points whose locally anchored ramp derivative (see
    ``local_ramp_derivatives``) is still positive beyond its rounding error
    and beyond ``polish_rtol * tol`` are inserted too, for at most
    ``max_polish`` rounds: with near-tied points a knot a few positions off
    the optimum costs less than ``tol`` in the criterion yet breaks the
    first-order conditions at that knot.  Points within
    ``resolution * range`` of a knot count as tied with it and are not
    inserted.
    """
    x = obj.x
    m = len(x)
    idx = np.array([0, m - 1])
    theta = obj.initial(idx)
    values = np.interp(x, x[idx], theta)
    dd = np.zeros(m)
    viol = np.inf
    it = 0
    polish = 0
    for it in range(1, max_iter + 1):
        # equality-constrained solves until the reduced optimum is concave
        for _ in range(m + 2):
            star = obj.reduced_argmax(idx, theta)
            if len(idx) <= 2:
                theta = star
                break
            sl = np.abs(np.diff(star) / np.diff(x[idx]))
            feas_tol = feas_rtol * max(1.0, float(sl.max()))
            if slope_drops(x[idx], star).min() >= -feas_tol:
                theta = star
                break
            idx, theta = _feasible_step(obj, x, idx, theta, star, feas_tol)
        values = np.interp(x, x[idx], theta)
        dd = ramp_derivatives(x, obj.point_gradient(values))
        cand = dd.copy()
        cand[idx] = -np.inf
        cand[0] = cand[-1] = -np.inf
        viol = float(cand.max())
        ok = cand > tol
        if viol <= tol:
            loc, err = local_ramp_derivatives(x, obj.point_gradient(values), idx)
            cand = loc.copy()
            j = np.searchsorted(x[idx], x)
            near = np.minimum(np.abs(x - x[idx][np.maximum(j - 1, 0)]), np.abs(x[idx][np.minimum(j, len(idx) - 1)] - x))
            cand[near <= resolution * (x[-1] - x[0])] = -np.inf
            ok = cand > np.maximum(polish_rtol * tol, err)
            if not ok.any() or polish >= max_polish:
                return ActiveSetResult(idx, theta, values, dd, it, True, max(viol, 0.0))
            polish += 1
        # one new knot per gap, at the largest violation inside it
        gap = np.searchsorted(idx, np.arange(m), side="right") - 1
        order = np.lexsort((-cand[ok], gap[ok]))
        pts = np.flatnonzero(ok)[order]
        gaps = gap[pts]
        first = np.ones(len(pts), dtype=bool)
        first[1:] = gaps[1:] != gaps[:-1]
        new = pts[first]
        all_idx = np.concatenate((idx, new))
        all_theta = np.concatenate((theta, values[new]))
        o = np.argsort(all_idx)
        idx, theta = all_idx[o], all_theta[o]
    return ActiveSetResult(idx, theta, values, dd, it, False, max(viol, 0.0))
