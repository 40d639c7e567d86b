"""Samples, piecewise-linear concave functions and analytic density models."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable

import numpy as np
import sympy as sp
from scipy import integrate, optimize, special

from .segments import exp_integral

__all__ = [
    "ModelError",
    "SampleError",
    "Sample",
    "load_sample",
    "empirical_processes",
    "PiecewiseLinearConcave",
    "plc_exp_integral",
    "DensityModel",
    "make_density_model",
    "FAMILIES",
]

CONCAVITY_TOL = 1e-10
MAX_DERIVATIVE_ORDER = 8


class SampleError(ValueError):
    """Raised for unusable raw data."""


class ModelError(ValueError):
    """Raised when a density model or its parameters are invalid."""


# ---------------------------------------------------------------------------
# samples


@dataclass(frozen=True)
class Sample:
    """Distinct sorted observations with tie weights.

    ``weights[i]`` is the multiplicity of ``points[i]`` divided by ``n``.
    """

    points: np.ndarray
    weights: np.ndarray
    n: int

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim != 1 or pts.shape != w.shape:
            raise SampleError("points and weights must be 1-d arrays of equal length")
        if self.n < 2:
            raise SampleError("need n >= 2 observations")
        if not np.all(np.isfinite(pts)):
            raise SampleError("points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise SampleError("points must be strictly increasing")
        if np.any(w <= 0):
            raise SampleError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise SampleError("weights must sum to 1")
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        """Number of distinct points."""
        return len(self.points)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.points[0]), float(self.points[-1])

    @property
    def range(self) -> float:
        return float(self.points[-1] - self.points[0])

    def affine(self, scale: float, shift: float) -> "Sample":
        """Sample of ``scale * X + shift`` (``scale > 0``)."""
        if scale <= 0:
            raise SampleError("scale must be positive")
        return Sample(scale * self.points + shift, self.weights.copy(), self.n)

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "Sample":
        x = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float).ravel()
        if x.size < 2:
            raise SampleError("need n >= 2 observations")
        bad = np.flatnonzero(~np.isfinite(x))
        if bad.size:
            raise SampleError(f"non-finite value at position {bad[0] + 1}: {x[bad[0]]!r}")
        pts, counts = np.unique(x, return_counts=True)
        if pts.size < 2:
            raise SampleError("need at least 2 distinct observations")
        return cls(pts, counts / x.size, int(x.size))


def _parse_lines(text: str, source: str) -> list[float]:
    values = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            v = float(line)
        except ValueError:
            raise SampleError(f"{source}:{lineno}: cannot parse {line!r} as a number") from None
        if not math.isfinite(v):
            raise SampleError(f"{source}:{lineno}: non-finite value {line!r}")
        values.append(v)
    return values


def load_sample(raw) -> Sample:
    """Build a :class:`Sample` from a sequence of reals or a text file.

    Text files hold one decimal literal per line; ``#`` starts a comment.
    """
    if isinstance(raw, (str, os.PathLike)):
        with open(raw, encoding="utf-8") as fh:
            values = _parse_lines(fh.read(), str(raw))
        if len(values) < 2:
            raise SampleError(f"{raw}: need n >= 2 observations, found {len(values)}")
        return Sample.from_values(values)
    return Sample.from_values(raw)


def empirical_processes(s: Sample, x):
    """Empirical CDF and its integral ``H_n(x) = sum_i w_i (x - X_i)_+``."""
    x = np.asarray(x, dtype=float)
    idx = np.searchsorted(s.points, x, side="right")
    cw = np.concatenate(([0.0], np.cumsum(s.weights)))
    cwx = np.concatenate(([0.0], np.cumsum(s.weights * (s.points - s.points[0]))))
    Fn = np.minimum(cw[idx], 1.0)
    # shift by X_(1) so that the sum has no cancellation for offset data
    Hn = Fn * (x - s.points[0]) - cwx[idx]
    Hn = np.where(idx == 0, 0.0, np.maximum(Hn, 0.0))
    if Fn.ndim == 0:
        return float(Fn), float(Hn)
    return Fn, Hn


# ---------------------------------------------------------------------------
# piecewise-linear concave functions


@dataclass(frozen=True)
class PiecewiseLinearConcave:
    """Continuous piecewise-linear concave function, ``-inf`` off its span."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        t = np.array(self.knots, dtype=float)
        v = np.array(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("need at least 2 knots with matching values")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knots must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        sl = np.diff(v) / np.diff(t)
        scale = max(1.0, float(np.max(np.abs(sl))))
        if np.any(np.diff(sl) > CONCAVITY_TOL * scale):
            raise ValueError("slopes must be nonincreasing (concavity)")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "knots", t)
        object.__setattr__(self, "values", v)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.knots, self.values)
        out = np.where((x < self.knots[0]) | (x > self.knots[-1]), -np.inf, out)
        return float(out) if out.ndim == 0 else out

    def with_knots(self, new_knots) -> "PiecewiseLinearConcave":
        """Same function with extra knots inserted (values interpolated)."""
        t = np.union1d(self.knots, np.asarray(new_knots, dtype=float))
        t = t[(t >= self.knots[0]) & (t <= self.knots[-1])]
        return PiecewiseLinearConcave(t, np.interp(t, self.knots, self.values))


def plc_exp_integral(g: PiecewiseLinearConcave, a: float, b: float) -> float:
    """Exact ``int_a^b exp(g(t)) dt`` summed over linear pieces."""
    if a > b:
        raise ValueError(f"need a <= b, got a={a}, b={b}")
    lo, hi = g.span
    a, b = max(a, lo), min(b, hi)
    if a >= b:
        return 0.0
    inner = g.knots[(g.knots > a) & (g.knots < b)]
    t = np.concatenate(([a], inner, [b]))
    v = np.interp(t, g.knots, g.values)
    return float(np.sum(exp_integral(v[:-1], v[1:], np.diff(t))))


# ---------------------------------------------------------------------------
# analytic density models

_X = sp.Symbol("x", real=True)

FAMILIES = ("gaussian", "laplace", "gamma", "uniform", "quartic", "tilted-quartic")


def _lambdify(expr) -> Callable:
    f = sp.lambdify(_X, expr, modules=["numpy", "scipy"])

    def call(x):
        x_arr = np.asarray(x, dtype=float)
        out = np.broadcast_to(np.asarray(f(x_arr), dtype=float), x_arr.shape).copy()
        return float(out) if out.ndim == 0 else out

    return call


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Analytic log-concave truth ``f0 = exp(phi0)`` with derivative oracles.

    ``log_kernel`` is the unnormalised log-density as a sympy expression in
    ``x``; ``log_norm`` is added to it to obtain ``phi0``.  ``k`` is the order
    of the first nonvanishing derivative of ``phi0`` at ``x0`` beyond the
    first, or ``None`` when no such order exists (flat or kinked log-density,
    so the pointwise limit theory does not apply).
    """

    family: str
    params: dict
    log_kernel: sp.Expr = field(repr=False)
    log_norm: float
    support: tuple[float, float]
    mode: float
    x0: float
    k: int | None
    cdf_fn: Callable | None = field(default=None, repr=False)

    # -- derivative oracles -------------------------------------------------

    @cached_property
    def _cache(self) -> dict:
        return {}

    def _oracle(self, kind: str, order: int) -> Callable:
        key = (kind, order)
        if key not in self._cache:
            base = self.log_kernel if kind == "phi" else sp.exp(self.log_kernel)
            expr = sp.diff(base, _X, order)
            # kinks contribute point masses that vanish away from the kink itself
            expr = expr.replace(sp.DiracDelta, lambda *args: sp.S.Zero)
            self._cache[key] = _lambdify(expr)
        return self._cache[key]

    def _inside(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        return (x >= lo) & (x <= hi)

    def log_h(self, x):
        """Unnormalised log-density (``phi0 - log_norm``)."""
        return self.phi(x) - self.log_norm

    def phi(self, x, order: int = 0):
        """``phi0`` or its ``order``-th derivative; ``-inf`` off the support."""
        x = np.asarray(x, dtype=float)
        inside = self._inside(x)
        xs = np.where(inside, x, self.mode)
        with np.errstate(all="ignore"):
            val = np.asarray(self._oracle("phi", order)(xs), dtype=float)
        if order == 0:
            val = val + self.log_norm
            val = np.where(inside, val, -np.inf)
        else:
            val = np.where(inside, val, np.nan)
        return float(val) if val.ndim == 0 else val

    def density(self, x):
        return np.exp(self.phi(x))

    def log_density(self, x):
        return self.phi(x)

    def density_derivative(self, x, order: int):
        """``f0^{(order)}`` from symbolic differentiation of ``exp(phi0)``."""
        x = np.asarray(x, dtype=float)
        inside = self._inside(x)
        xs = np.where(inside, x, self.mode)
        with np.errstate(all="ignore"):
            val = np.asarray(self._oracle("f", order)(xs), dtype=float) * math.exp(self.log_norm)
        val = np.where(inside, val, 0.0)
        return float(val) if val.ndim == 0 else val

    def cdf(self, x):
        if self.cdf_fn is not None:
            return self.cdf_fn(x)
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([self._cdf_quad(v) for v in x_arr])
        return float(out[0]) if np.ndim(x) == 0 else out

    def _cdf_quad(self, v: float) -> float:
        lo, hi = self.support
        if v <= lo:
            return 0.0
        if v >= hi:
            return 1.0
        m = self.mode
        if v <= m:
            val, _ = integrate.quad(self.density, lo, v, epsabs=1e-14, epsrel=1e-12, limit=200)
            return float(val)
        val, _ = integrate.quad(self.density, v, hi, epsabs=1e-14, epsrel=1e-12, limit=200)
        return float(1.0 - val)

    def quantile(self, p: float) -> float:
        if not 0.0 < p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        lo, hi = self.support
        a = lo if math.isfinite(lo) else self.mode - 1.0
        b = hi if math.isfinite(hi) else self.mode + 1.0
        while self.cdf(a) > p:
            a = self.mode - 2.0 * (self.mode - a) - 1.0
        while self.cdf(b) < p:
            b = self.mode + 2.0 * (b - self.mode) + 1.0
        return float(optimize.brentq(lambda t: self.cdf(t) - p, a, b, xtol=1e-14, rtol=1e-14))

    # -- derived ------------------------------------------------------------

    @property
    def f0(self) -> float:
        return float(self.density(self.x0))

    @property
    def phi_k(self) -> float:
        """``phi0^{(k)}(x0)``."""
        if self.k is None:
            raise ModelError(f"{self.family}: no nonvanishing derivative of order >= 2 at x0={self.x0}")
        return float(self.phi(self.x0, self.k))

    @property
    def at_mode(self) -> bool:
        return abs(self.x0 - self.mode) <= 1e-12 * max(1.0, abs(self.mode))

    def spec(self) -> dict:
        """Plain-data recipe accepted by :func:`make_density_model`."""
        return {"family": self.family, "params": dict(self.params), "x0": self.x0}

    def with_x0(self, x0: float) -> "DensityModel":
        return _finish(self.family, self.params, self.log_kernel, self.support, self.mode,
                       x0, log_norm=self.log_norm, cdf_fn=self.cdf_fn)

    def rescaled(self, c: float) -> "DensityModel":
        """``f_c(x) = f0(m0 + (x - m0)/c)/c``; the mode stays put."""
        if c <= 0:
            raise ModelError("scale factor must be positive")
        m = self.mode
        kernel = self.log_kernel.subs(_X, m + (_X - m) / c)
        lo, hi = self.support
        support = (m + c * (lo - m), m + c * (hi - m))
        base_cdf = self.cdf_fn
        cdf_fn = None if base_cdf is None else (lambda x: base_cdf(m + (np.asarray(x, dtype=float) - m) / c))
        return _finish(self.family, {**self.params, "rescale": c}, kernel, support, m,
                       m + c * (self.x0 - m), log_norm=self.log_norm - math.log(c), cdf_fn=cdf_fn)


def _find_k(log_kernel, x0: float) -> int | None:
    for j in range(2, MAX_DERIVATIVE_ORDER + 1):
        expr = sp.diff(log_kernel, _X, j)
        try:
            val = float(expr.subs(_X, x0))
        except (TypeError, ValueError):
            return None
        if not math.isfinite(val):
            return None
        if abs(val) > 1e-10:
            if j % 2 or val > 0:
                raise ModelError(
                    f"first nonvanishing derivative of phi0 at x0={x0} has order {j} and value {val}; "
                    "a concave log-density needs an even order with a negative value"
                )
            return j
    return None


def _finish(family, params, kernel, support, mode, x0, *, log_norm=None, cdf_fn=None) -> DensityModel:
    lo, hi = support
    if not (lo <= x0 <= hi):
        raise ModelError(f"x0={x0} lies outside the support {support}")
    if log_norm is None:
        h = _lambdify(sp.exp(kernel))
        pieces = [p for p in (lo, mode, hi)]
        total = 0.0
        for a, b in zip(pieces[:-1], pieces[1:]):
            if a < b:
                val, _ = integrate.quad(h, a, b, epsabs=0.0, epsrel=1e-13, limit=400)
                total += val
        log_norm = -math.log(total)
    k = _find_k(kernel, x0) if lo < x0 < hi else None
    return DensityModel(family, dict(params), kernel, float(log_norm), (float(lo), float(hi)),
                        float(mode), float(x0), k, cdf_fn)


def make_density_model(family: str, params: dict | None = None, x0: float | None = None) -> DensityModel:
    """Build one of the built-in families.

    ``gaussian(mu, sigma)``, ``laplace(mu, scale)``, ``gamma(shape, rate)``
    with ``shape >= 1``, ``uniform(a, b)``, ``quartic`` (``exp(-x**4)``) and
    ``tilted-quartic(b)`` (``exp(b*x - x**4)``).  ``x0`` defaults to the mode.
    """
    p = dict(params or {})
    if "rescale" in p:
        c = float(p.pop("rescale"))
        scaled = make_density_model(family, p).rescaled(c)
        return scaled if x0 is None else scaled.with_x0(x0)
    x = _X
    fam = family.lower().replace("_", "-")
    if fam == "gaussian":
        mu, sig = float(p.get("mu", 0.0)), float(p.get("sigma", 1.0))
        if sig <= 0:
            raise ModelError("gaussian sigma must be positive")
        kernel = -((x - mu) ** 2) / (2 * sig**2)
        cdf = lambda t: special.ndtr((np.asarray(t, dtype=float) - mu) / sig)  # noqa: E731
        model = _finish("gaussian", {"mu": mu, "sigma": sig}, kernel, (-np.inf, np.inf), mu,
                        mu if x0 is None else x0, log_norm=-math.log(sig * math.sqrt(2 * math.pi)), cdf_fn=cdf)
    elif fam == "laplace":
        mu, b = float(p.get("mu", 0.0)), float(p.get("scale", 1.0))
        if b <= 0:
            raise ModelError("laplace scale must be positive")
        kernel = -sp.Abs(x - mu) / b

        def cdf(t, mu=mu, b=b):
            z = (np.asarray(t, dtype=float) - mu) / b
            return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0)), 1 - 0.5 * np.exp(-np.maximum(z, 0)))

        model = _finish("laplace", {"mu": mu, "scale": b}, kernel, (-np.inf, np.inf), mu,
                        mu if x0 is None else x0, log_norm=-math.log(2 * b), cdf_fn=cdf)
    elif fam == "gamma":
        r, lam = float(p.get("shape", 2.0)), float(p.get("rate", 1.0))
        if r < 1 or lam <= 0:
            raise ModelError(f"gamma(shape={r}, rate={lam}) is not log-concave; need shape >= 1, rate > 0")
        kernel = (r - 1) * sp.log(x) - lam * x if r > 1 else -lam * x
        cdf = lambda t: special.gammainc(r, lam * np.maximum(np.asarray(t, dtype=float), 0.0))  # noqa: E731
        mode = (r - 1) / lam
        model = _finish("gamma", {"shape": r, "rate": lam}, kernel, (0.0, np.inf), mode,
                        mode if x0 is None else x0, log_norm=r * math.log(lam) - math.lgamma(r), cdf_fn=cdf)
    elif fam == "uniform":
        a, b = float(p.get("a", 0.0)), float(p.get("b", 1.0))
        if not a < b:
            raise ModelError("uniform needs a < b")
        cdf = lambda t: np.clip((np.asarray(t, dtype=float) - a) / (b - a), 0.0, 1.0)  # noqa: E731
        model = _finish("uniform", {"a": a, "b": b}, sp.Integer(0) * x, (a, b), a,
                        a if x0 is None else x0, log_norm=-math.log(b - a), cdf_fn=cdf)
    elif fam == "quartic":
        model = _finish("quartic", {}, -(x**4), (-np.inf, np.inf), 0.0, 0.0 if x0 is None else x0)
    elif fam == "tilted-quartic":
        b = float(p.get("b", 4.0))
        mode = math.copysign(abs(b / 4.0) ** (1.0 / 3.0), b)
        model = _finish("tilted-quartic", {"b": b}, b * x - x**4, (-np.inf, np.inf), mode,
                        mode if x0 is None else x0)
    else:
        raise ModelError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    return model
