"""Closed-form identities checked against independent numerics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from ..model import DensityModel, make_density_model

__all__ = [
    "delta1",
    "delta1_moment",
    "delta1_moment_quad",
    "derivative_identities",
    "IdentityReport",
    "identity_suite",
    "BUILTIN_CHECKPOINTS",
]


def delta1(x, lo: float, hi: float):
    """Tent on ``[lo, hi]`` peaking at the midpoint, lowered by ``(hi - lo)/4``."""
    x = np.asarray(x, dtype=float)
    mid = 0.5 * (lo + hi)
    tent = np.where(x <= mid, x - lo, hi - x)
    return np.where((x >= lo) & (x <= hi), tent - 0.25 * (hi - lo), 0.0)


def delta1_moment(j: int, lo: float, hi: float) -> float:
    """``int delta1(t) (t - mid)^j dt`` in closed form."""
    if j == 0 or j % 2:
        return 0.0
    L = hi - lo
    return L ** (j + 2) * (-j) / (2 ** (j + 2) * (j + 1) * (j + 2))


def delta1_moment_quad(j: int, lo: float, hi: float) -> float:
    mid = 0.5 * (lo + hi)
    total = 0.0
    for a, b in ((lo, mid), (mid, hi)):
        val, _ = integrate.quad(lambda t: float(delta1(t, lo, hi)) * (t - mid) ** j, a, b,
                                epsabs=1e-14, epsrel=1e-12, limit=200)
        total += val
    return total


def derivative_identities(m: DensityModel, j_max: int | None = None) -> list[dict]:
    """Compare ``f0^{(j)}(x0)`` with its expression through ``phi0`` derivatives.

    For ``j < k`` the target is ``phi0'(x0)^j f0(x0)``; for ``j = k`` it is
    ``(phi0^{(k)}(x0) + phi0'(x0)^k) f0(x0)``.  Models without a finite ``k``
    (linear or flat log-density at ``x0``) are checked for ``j <= j_max`` with
    all higher ``phi0`` derivatives zero.
    """
    x0, f0 = m.x0, m.f0
    d1 = m.phi(x0, 1)
    top = m.k if m.k is not None else (j_max or 4)
    rows = []
    for j in range(1, top + 1):
        lhs = m.density_derivative(x0, j)
        rhs = d1**j * f0
        if m.k is not None and j == m.k:
            rhs = (m.phi(x0, m.k) + d1**m.k) * f0
        scale = max(abs(rhs), abs(lhs), 1e-300)
        rows.append({"j": j, "lhs": float(lhs), "rhs": float(rhs),
                     "rel_err": float(abs(lhs - rhs) / scale) if scale > 1e-300 else 0.0})
    return rows


# (family, params, x0) evaluation points; where k exists phi0^{(k)}(x0) < 0
BUILTIN_CHECKPOINTS = (
    ("gaussian", {"mu": 0.0, "sigma": 1.0}, 0.0),
    ("gaussian", {"mu": 0.5, "sigma": 2.0}, -0.7),
    ("laplace", {"mu": 0.0, "scale": 1.0}, 0.8),
    ("gamma", {"shape": 3.0, "rate": 2.0}, 1.0),
    ("gamma", {"shape": 2.5, "rate": 1.0}, 2.3),
    ("gamma", {"shape": 1.0, "rate": 1.5}, 0.4),
    ("uniform", {"a": 0.0, "b": 1.0}, 0.3),
    ("quartic", {}, 0.0),
    ("quartic", {}, 0.6),
    ("tilted-quartic", {"b": 4.0}, 1.0),
    ("tilted-quartic", {"b": 4.0}, 0.0),
    ("tilted-quartic", {"b": -1.5}, 0.25),
)


@dataclass
class IdentityReport:
    moment_rows: list = field(default_factory=list)
    derivative_rows: list = field(default_factory=list)

    @property
    def max_moment_err(self) -> float:
        return max((r["abs_err"] for r in self.moment_rows), default=0.0)

    @property
    def max_derivative_rel_err(self) -> float:
        return max((r["rel_err"] for r in self.derivative_rows), default=0.0)

    def passed(self, moment_tol: float = 1e-10, derivative_tol: float = 1e-6) -> bool:
        return self.max_moment_err <= moment_tol and self.max_derivative_rel_err <= derivative_tol

    def as_dict(self) -> dict:
        return {
            "moments": self.moment_rows,
            "derivatives": self.derivative_rows,
            "max_moment_err": self.max_moment_err,
            "max_derivative_rel_err": self.max_derivative_rel_err,
            "pass": self.passed(),
        }


def identity_suite(models=None, *, seed: int = 0, n_intervals: int = 20, j_max: int = 6) -> IdentityReport:
    """Moment identities on random intervals and derivative identities per model.

    ``models`` defaults to every built-in family at the checkpoints above.
    """
    rep = IdentityReport()
    rng = np.random.default_rng(seed)
    intervals = [(0.0, 1.0), (-1.0, 1.0)]
    for _ in range(n_intervals):
        lo = rng.uniform(-3.0, 3.0)
        intervals.append((lo, lo + rng.uniform(0.01, 2.0)))
    for lo, hi in intervals:
        for j in range(j_max + 1):
            closed = delta1_moment(j, lo, hi)
            quad = delta1_moment_quad(j, lo, hi)
            rep.moment_rows.append({"j": j, "lo": lo, "hi": hi, "closed": closed, "quad": quad,
                                    "abs_err": abs(closed - quad)})
    if models is None:
        models = [make_density_model(f, p, x0) for f, p, x0 in BUILTIN_CHECKPOINTS]
    elif isinstance(models, DensityModel):
        models = [models]
    for m in models:
        for row in derivative_identities(m):
            rep.derivative_rows.append({"family": m.family, "params": dict(m.params), "x0": m.x0,
                                        "k": m.k, **row})
    return rep
