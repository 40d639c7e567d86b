"""Asymptotic constants, canonical scalings and minimax quantities.

Everything here is closed-form arithmetic on ``f0(x0)``, ``F0(x0)`` and
``phi0^{(k)}(x0)``.  Each quantity that can be reached by two routes
exposes both so the test-suite can check them against one another.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from .model import DensityModel, ModelError

__all__ = [
    "LimitConstants",
    "CanonicalScalings",
    "MinimaxReport",
    "ABSOLUTE_MINIMAX_CONSTANT",
    "UNIMODAL_MINIMAX_CONSTANT",
    "absolute_minimax_constant",
    "pointwise_constants",
    "canonical_scalings",
    "printed_gammas",
    "mode_limit_scale",
    "minimax_mode_bound",
    "peakedness_poly",
    "peakedness_poly_root",
    "constants_table",
]

ABSOLUTE_MINIMAX_CONSTANT = 0.15512
# quoted for reference only; its derivation is not reproduced here
UNIMODAL_MINIMAX_CONSTANT = 0.19784


def _require_k(m: DensityModel) -> tuple[int, float, float]:
    if m.k is None:
        raise ModelError(f"{m.family} at x0={m.x0}: no nonvanishing even-order derivative of phi0")
    phik = m.phi_k
    if phik == 0.0:
        raise ModelError("phi0^{(k)}(x0) vanishes")
    return m.k, abs(phik), m.f0


@dataclass(frozen=True)
class LimitConstants:
    k: int
    x0: float
    c_k: float
    d_k: float
    C_k: float
    D_k: float
    g_k: float
    h_k: float

    def as_dict(self) -> dict:
        return asdict(self)


def pointwise_constants(m: DensityModel) -> LimitConstants:
    """Scale constants for ``fhat``, ``fhat'``, ``phihat``, ``phihat'`` and the hazard."""
    k, phik, f0 = _require_k(m)
    fact = math.factorial(k + 2)
    e = 1.0 / (2 * k + 1)
    c = (f0 ** (k + 1) * phik / fact) ** e
    d = (f0 ** (k + 2) * phik**3 / fact**3) ** e
    C = (phik / (f0**k * fact)) ** e
    D = (phik**3 / (f0 ** (k - 1) * fact**3)) ** e
    surv = 1.0 - float(m.cdf(m.x0))
    return LimitConstants(k, m.x0, c, d, C, D, c / surv, d / surv)


@dataclass(frozen=True)
class CanonicalScalings:
    k: int
    a: float
    sigma: float
    gamma1: float
    gamma2: float

    def as_dict(self) -> dict:
        return asdict(self)


def canonical_scalings(m: DensityModel) -> CanonicalScalings:
    """``a``, ``sigma`` of the driving process and the ``gamma``'s mapping it to ``Y_k``.

    ``gamma1``, ``gamma2`` solve ``gamma1 gamma2^{3/2} = 1/a`` and
    ``gamma1 gamma2^{k+2} = 1/sigma``.
    """
    k, phik, f0 = _require_k(m)
    fact = math.factorial(k + 2)
    e = 1.0 / (2 * k + 1)
    a = f0**-0.5
    sigma = phik / fact
    g2 = (fact**2 / (f0 * phik**2)) ** e
    g1 = (f0 ** (k + 2) * phik**3 / fact**3) ** e
    return CanonicalScalings(k, a, sigma, g1, g2)


def printed_gammas(m: DensityModel) -> tuple[float, float]:
    """The alternative ``(gamma1, gamma2)`` expressions, kept for comparison only.

    They do not satisfy the scaling identities; see :func:`canonical_scalings`.
    """
    k, phik, f0 = _require_k(m)
    fact = math.factorial(k + 2)
    e = 1.0 / (2 * k + 1)
    g1 = (f0 ** (k - 1) * phik**3 / fact**3) ** e
    g2 = (f0 * phik**2 / fact**2) ** e
    return g1, g2


def mode_limit_scale(m: DensityModel) -> float:
    """Scale in ``n^{1/(2k+1)}(Mhat - m0) -> scale * M(H_k^{(2)})``.

    Uses density derivatives, ``((k+2)!^2 f0(m0) / f0^{(k)}(m0)^2)^{1/(2k+1)}``,
    which at the mode coincides with ``gamma2``.
    """
    if not m.at_mode:
        raise ModelError(f"x0={m.x0} is not the mode {m.mode} of {m.family}")
    if m.k is None:
        raise ModelError(f"{m.family}: no nonvanishing even-order derivative at the mode")
    k = m.k
    fk = m.density_derivative(m.x0, k)
    return (math.factorial(k + 2) ** 2 * m.f0 / fk**2) ** (1.0 / (2 * k + 1))


def absolute_minimax_constant() -> float:
    """``((5/2) / (4^5 e 10))^{1/5}``."""
    return ((5.0 / 2.0) / (4.0**5 * math.e * 10.0)) ** 0.2


@dataclass(frozen=True)
class MinimaxReport:
    rho: float
    c_star: float
    bound: float
    b_constant: float
    absolute_constant: float
    unimodal_constant: float
    k: int
    poly_root: float

    def as_dict(self) -> dict:
        return asdict(self)


def minimax_mode_bound(m: DensityModel) -> MinimaxReport:
    """Local asymptotic minimax lower bound for the mode at ``n^{1/5}`` scale.

    ``rho`` is the leading Hellinger coefficient of the optimal perturbation,
    ``c_star = (10 rho)^{-1/5}`` its optimal scale, and
    ``bound = c_star exp(-2 rho c_star^5) / 4``.
    """
    if not m.at_mode:
        raise ModelError(f"x0={m.x0} is not the mode {m.mode} of {m.family}")
    f0 = m.f0
    f2 = m.density_derivative(m.x0, 2)
    if not f2 < 0:
        raise ModelError(f"need f0''(m0) < 0, got {f2}")
    rho = 2.0 * f2**2 / (5.0 * f0)
    c_star = (10.0 * rho) ** -0.2
    bound = 0.25 * c_star * math.exp(-2.0 * rho * c_star**5)
    b = (f0 / f2**2) ** 0.2
    k = m.k if m.k is not None else 2
    return MinimaxReport(rho, c_star, bound, b, absolute_minimax_constant(),
                         UNIMODAL_MINIMAX_CONSTANT, k, peakedness_poly_root(k))


def peakedness_poly(x: float, k: int) -> float:
    return x**k - (k / (k - 1)) * x ** (k - 1) - (2 * k - 1) / (k - 1)


def peakedness_poly_root(k: int) -> float:
    """Largest real root of ``x^k - k/(k-1) x^{k-1} - (2k-1)/(k-1)``.

    The polynomial is negative at 1 and positive at ``k + 2`` and has a
    single sign change on ``x > 0``, so bisection on ``[1, k+2]`` finds it.
    """
    if k < 2 or k % 2:
        raise ValueError(f"k must be an even integer >= 2, got {k}")
    root = optimize.bisect(peakedness_poly, 1.0, k + 2.0, args=(k,), xtol=1e-15, rtol=4 * 2.0**-52, maxiter=200)
    # settle on the float with the smallest residual among the neighbours
    cands = [root]
    for direction in (-np.inf, np.inf):
        x = root
        for _ in range(8):
            x = np.nextafter(x, direction)
            cands.append(float(x))
    return float(min(cands, key=lambda x: abs(peakedness_poly(x, k))))


def constants_table(m: DensityModel, *, printed: bool = False) -> dict:
    """Every constant available for ``m`` at its ``x0``, keyed by name."""
    out: dict = {"family": m.family, "params": dict(m.params), "x0": m.x0, "k": m.k,
                 "f0": m.f0, "F0": float(m.cdf(m.x0))}
    if m.k is not None:
        out["phi_k"] = m.phi_k
        out.update(pointwise_constants(m).as_dict())
        out.update(canonical_scalings(m).as_dict())
        if printed:
            g1, g2 = printed_gammas(m)
            out["gamma1_printed"], out["gamma2_printed"] = g1, g2
        if m.at_mode:
            out["mode_limit_scale"] = mode_limit_scale(m)
    if m.at_mode and m.k == 2:
        out.update({f"minimax_{key}": v for key, v in minimax_mode_bound(m).as_dict().items()})
    return out
