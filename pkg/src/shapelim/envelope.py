"""Driving process ``Y_k`` and its lower envelope ``H_k`` on a uniform grid.

``Y_k(t) = int_0^t W - t^{k+2}`` (with ``int_t^0 W`` on the negative axis).
``H_k`` is the process below ``Y_k`` whose second derivative is concave and
which touches ``Y_k`` wherever that second derivative bends.

On the grid ``t_i = (i - M) h`` we write ``z_i`` for the second divided
difference of ``Y`` at interior node ``i`` and look for the concave
sequence ``g`` minimising ``sum_i h (g_i - z_i)^2 / 2``.  Anchoring ``H``
at the left end (``H_0 = Y_0``, same first cell slope) and summing ``g``
twice gives ``H``.  The optimality conditions of this concave regression
are exactly the discrete envelope conditions: ``Y - H >= 0``, ``Y = H``
where ``g`` bends, and ``H = Y`` with equal last-cell slopes at the right
end.  The regression is solved by the same active-set engine as the MLE.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded

from .activeset import maximize_concave_pl
from .parallel import pmap

__all__ = [
    "DrivingRealization",
    "EnvelopeCertificate",
    "EnvelopeRealization",
    "EnvelopeFunctionalTable",
    "EnvelopeError",
    "default_halfwidth",
    "simulate_driving",
    "lower_envelope",
    "envelope_functionals",
    "envelope_table",
]

DEFAULT_H = 0.005


class EnvelopeError(RuntimeError):
    pass


def default_halfwidth(k: int) -> float:
    return 3.0 if k == 2 else 2.2


def _grid_size(K: float, h: float) -> int:
    if not (h > 0 and K > 0 and h <= K):
        raise ValueError(f"need 0 < h <= K, got h={h}, K={K}")
    M = round(K / h)
    if abs(M * h - K) > 1e-9 * K:
        raise ValueError(f"K/h must be an integer, got K={K}, h={h}")
    return int(M)


@dataclass(frozen=True, eq=False)
class DrivingRealization:
    """``Y = a int W - sigma t^{k+2}`` on ``t_i = (i - M) h``, ``i = 0..2M``.

    ``X`` is the pathwise derivative ``a W - sigma (k+2) t^{k+1}`` on the
    right and ``-a W - sigma (k+2) t^{k+1}`` on the left.
    """

    k: int
    K: float
    h: float
    t: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    a: float = 1.0
    sigma: float = 1.0

    @property
    def M(self) -> int:
        return (len(self.t) - 1) // 2


def simulate_driving(
    k: int,
    K: float,
    h: float,
    seed=None,
    *,
    a: float = 1.0,
    sigma: float = 1.0,
    noise: bool = True,
    rng: np.random.Generator | None = None,
) -> DrivingRealization:
    """Draw one path of the driving process.

    ``seed`` may be anything accepted by :func:`numpy.random.default_rng`.
    ``noise=False`` sets ``W = 0`` (the pure drift).  Integrals of ``W`` are
    left-rectangle sums taken from 0 outwards; the drift is exact at nodes.
    """
    if k < 2 or k % 2:
        raise ValueError(f"k must be an even integer >= 2, got {k}")
    M = _grid_size(K, h)
    t = (np.arange(2 * M + 1) - M) * h
    W = np.zeros(2 * M + 1)
    if noise:
        rng = np.random.default_rng(seed) if rng is None else rng
        # row j holds the j-th increment on each side, so a path on [-K', K']
        # with K' < K is exactly the inner part of the wider path (same seed)
        inc = rng.normal(0.0, math.sqrt(h), (M, 2))
        W[M + 1:] = np.cumsum(inc[:, 0])
        W[:M][::-1] = np.cumsum(inc[:, 1])
    IW = np.zeros_like(W)
    IW[M + 1:] = np.cumsum(W[M:-1]) * h
    IW[:M][::-1] = np.cumsum(W[1:M + 1][::-1]) * h
    drift = sigma * t ** (k + 2)
    Y = a * IW - drift
    X = np.where(t >= 0, a * W, -a * W) - sigma * (k + 2) * t ** (k + 1)
    return DrivingRealization(k, float(K), float(h), t, W, X, Y, float(a), float(sigma))


class _ConcaveRegression:
    """``max -sum h (g - z)^2 / 2`` over concave ``g`` on equispaced nodes."""

    def __init__(self, x: np.ndarray, z: np.ndarray, h: float):
        self.x = x
        self.z = z
        self.h = h

    def initial(self, idx):
        return np.zeros(len(idx))

    def reduced_argmax(self, idx, theta):
        x, K = self.x, len(idx)
        t = x[idx]
        seg = np.clip(np.searchsorted(idx, np.arange(len(x)), side="right") - 1, 0, K - 2)
        lam = (x - t[seg]) / (t[seg + 1] - t[seg])
        mu = 1.0 - lam
        diag = np.bincount(seg, mu * mu, minlength=K) + np.bincount(seg + 1, lam * lam, minlength=K)
        off = np.bincount(seg, mu * lam, minlength=K)[:-1]
        rhs = np.bincount(seg, mu * self.z, minlength=K) + np.bincount(seg + 1, lam * self.z, minlength=K)
        ab = np.zeros((2, K))
        ab[0, 1:] = off
        ab[1] = diag
        return solveh_banded(ab, rhs, check_finite=False)

    def point_gradient(self, values):
        return self.h * (self.z - values)


@dataclass(frozen=True)
class EnvelopeCertificate:
    max_excess: float
    max_concavity: float
    complementarity: float
    boundary_value: float
    boundary_slope: float
    tol: float = 1e-8
    concavity_tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return bool(
            self.max_excess <= self.tol
            and self.max_concavity <= self.concavity_tol
            and self.complementarity <= self.tol
            and self.boundary_value <= self.tol
            and self.boundary_slope <= self.tol
        )

    def as_dict(self) -> dict:
        return {
            "max_excess": self.max_excess,
            "max_concavity": self.max_concavity,
            "complementarity": self.complementarity,
            "boundary_value": self.boundary_value,
            "boundary_slope": self.boundary_slope,
            "pass": self.passed,
        }


@dataclass(frozen=True, eq=False)
class EnvelopeRealization:
    """Envelope on the full grid; ``g`` is ``H''`` at interior nodes ``1..2M-1``."""

    driving: DrivingRealization = field(repr=False)
    g: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    kinks: np.ndarray
    certificate: EnvelopeCertificate
    iterations: int
    converged: bool

    @property
    def touch_residuals(self) -> np.ndarray:
        return self.driving.Y - self.H


def lower_envelope(
    d: DrivingRealization,
    *,
    tol: float = 1e-8,
    kink_tol: float = 1e-8,
    max_iter: int = 2000,
) -> EnvelopeRealization:
    """Lower envelope of ``d.Y`` with its certificate.

    ``kinks`` are interior nodes where the slope of ``g`` drops by more than
    ``kink_tol``; complementarity is ``sum drop_i (Y_i - H_i)`` over all nodes,
    a discrete version of ``int (Y - H) dH'''``.
    """
    h, Y = d.h, d.Y
    N = len(Y) - 1
    if N < 4:
        raise ValueError("grid too coarse: need at least 5 nodes")
    D = np.diff(Y) / h
    z = np.diff(D) / h
    x = d.t[1:N]
    obj = _ConcaveRegression(x, z, h)
    # ramp derivatives are touch gaps times h; ask for a tenth of the touch tolerance
    res = maximize_concave_pl(obj, 0.1 * tol * h, max_iter=max_iter)
    g = res.values
    # the double cumulative sum loses about N * eps * max|Y| in double
    # precision, enough to spoil complementarity at steep boundary kinks
    ld = np.longdouble
    Pl = ld(D[0]) + ld(h) * np.concatenate(([ld(0)], np.cumsum(g.astype(ld))))
    Hl = ld(Y[0]) + ld(h) * np.concatenate(([ld(0)], np.cumsum(Pl)))
    El = Y.astype(ld) - Hl
    P, H, E = Pl.astype(float), Hl.astype(float), El.astype(float)
    drops = np.zeros(N + 1)
    drops[2:N - 1] = -(g[2:] - 2.0 * g[1:-1] + g[:-2]) / h
    cert = EnvelopeCertificate(
        max_excess=float(np.max(-E)),
        max_concavity=float(np.max(g[2:] - 2.0 * g[1:-1] + g[:-2])) if len(g) > 2 else 0.0,
        complementarity=float(np.sum(np.maximum(drops, 0.0) * np.abs(E))),
        boundary_value=float(abs(E[-1])),
        boundary_slope=float(abs(P[-1] - D[-1])),
        tol=tol,
    )
    kinks = np.flatnonzero(drops > kink_tol)
    return EnvelopeRealization(d, g, H, kinks, cert, res.iterations, res.converged)


def envelope_functionals(e: EnvelopeRealization) -> dict:
    """``H''(0)``, left and right difference ``H'''(0)``, and the smallest argmax of ``H''``."""
    d = e.driving
    M, h = d.M, d.h
    g = e.g
    j = M - 1  # interior index of t = 0
    gmax = g.max()
    am = int(np.flatnonzero(g == gmax)[0])
    return {
        "H2_0": float(g[j]),
        "H3_0": float((g[j] - g[j - 1]) / h),
        "H3_0_right": float((g[j + 1] - g[j]) / h),
        "argmax": float(d.t[am + 1]),
    }


@dataclass(frozen=True, eq=False)
class EnvelopeFunctionalTable:
    k: int
    K: float
    h: float
    R: int
    seed: int
    H2_0: np.ndarray = field(repr=False)
    H3_0: np.ndarray = field(repr=False)
    argmax: np.ndarray = field(repr=False)
    rejections: int = 0
    a: float = 1.0
    sigma: float = 1.0
    certificate_max: dict = field(default_factory=dict)
    """Worst value of each certificate component over the accepted paths."""

    def column(self, name: str) -> np.ndarray:
        return {"H2_0": self.H2_0, "H3_0": self.H3_0, "argmax": self.argmax}[name]

    def sidecar(self) -> dict:
        return {"k": self.k, "K": self.K, "h": self.h, "R": self.R, "seed": self.seed,
                "rejections": self.rejections, "a": self.a, "sigma": self.sigma,
                "certificate_max": self.certificate_max}

    def write(self, csv_path, json_path=None) -> None:
        arr = np.column_stack((np.arange(self.R), self.H2_0, self.H3_0, self.argmax))
        np.savetxt(csv_path, arr, delimiter=",", header="rep,H2_0,H3_0,argmax", comments="",
                   fmt=["%d", "%.17g", "%.17g", "%.17g"])
        if json_path is not None:
            with open(json_path, "w", encoding="utf-8") as fh:
                json.dump(self.sidecar(), fh, indent=2)
                fh.write("\n")

    @classmethod
    def read(cls, csv_path, json_path=None) -> "EnvelopeFunctionalTable":
        arr = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        meta = {"k": 2, "K": float("nan"), "h": float("nan"), "seed": -1, "rejections": 0}
        if json_path is not None:
            with open(json_path, encoding="utf-8") as fh:
                meta.update(json.load(fh))
        return cls(int(meta["k"]), float(meta["K"]), float(meta["h"]), len(arr), int(meta["seed"]),
                   arr[:, 1].copy(), arr[:, 2].copy(), arr[:, 3].copy(), int(meta["rejections"]),
                   float(meta.get("a", 1.0)), float(meta.get("sigma", 1.0)),
                   dict(meta.get("certificate_max", {})))


_MAX_ATTEMPTS = 5


def _one_realization(args) -> tuple[dict, int, dict]:
    k, K, h, seed, rep, a, sigma = args
    for attempt in range(_MAX_ATTEMPTS):
        d = simulate_driving(k, K, h, [seed, rep, attempt], a=a, sigma=sigma)
        e = lower_envelope(d)
        if e.converged and e.certificate.passed:
            return envelope_functionals(e), attempt, e.certificate.as_dict()
    raise EnvelopeError(f"realization {rep}: certificate failed {_MAX_ATTEMPTS} times")


def envelope_table(
    k: int,
    K: float | None = None,
    h: float = DEFAULT_H,
    R: int = 1000,
    seed: int = 0,
    *,
    workers: int | None = None,
    a: float = 1.0,
    sigma: float = 1.0,
) -> EnvelopeFunctionalTable:
    """Tabulate the envelope functionals over ``R`` independent paths.

    Replication ``rep`` draws from the substream ``[seed, rep, attempt]``; a
    path whose certificate fails is redrawn with the next ``attempt``.  More
    than 1% redraws aborts with :class:`EnvelopeError`.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    K = default_halfwidth(k) if K is None else K
    _grid_size(K, h)
    jobs = [(k, K, h, seed, rep, a, sigma) for rep in range(R)]
    out = pmap(_one_realization, jobs, workers)
    rejections = sum(att for _, att, _ in out)
    if rejections > 0.01 * R:
        raise EnvelopeError(f"{rejections} of {R} realizations rejected; solver settings need attention")
    col = lambda key: np.array([f[key] for f, _, _ in out])  # noqa: E731
    worst = {key: max(float(c[key]) for _, _, c in out)
             for key in ("max_excess", "max_concavity", "complementarity", "boundary_value", "boundary_slope")}
    return EnvelopeFunctionalTable(k, float(K), float(h), R, int(seed), col("H2_0"), col("H3_0"),
                                   col("argmax"), rejections, float(a), float(sigma), worst)
