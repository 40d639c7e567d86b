"""Draw i.i.d. samples from the built-in density models."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from ..model import DensityModel, Sample

__all__ = ["SamplingError", "draw", "sample_model"]


class SamplingError(RuntimeError):
    pass


_INVERSE_CDF_FAMILIES = ("gaussian", "laplace", "uniform", "gamma")


def _inverse_cdf(m: DensityModel, u: np.ndarray) -> np.ndarray:
    p = m.params
    fam = m.family
    if fam == "gaussian":
        return p["mu"] + p["sigma"] * special.ndtri(u)
    if fam == "laplace":
        v = u - 0.5
        return p["mu"] - p["scale"] * np.sign(v) * np.log1p(-2.0 * np.abs(v))
    if fam == "uniform":
        return p["a"] + (p["b"] - p["a"]) * u
    return special.gammaincinv(p["shape"], u) / p["rate"]


@lru_cache(maxsize=32)
def _gaussian_proposal(m: DensityModel) -> tuple[float, float, float]:
    """Centre, scale and log envelope constant for rejection sampling."""
    lo, hi = m.support
    mean, _ = integrate.quad(lambda x: x * m.density(x), lo, hi, epsrel=1e-10)
    var, _ = integrate.quad(lambda x: (x - mean) ** 2 * m.density(x), lo, hi, epsrel=1e-10)
    sd = math.sqrt(var)

    def log_ratio(x, s):
        return m.phi(x) + 0.5 * ((x - mean) / s) ** 2 + math.log(s * math.sqrt(2 * math.pi))

    # pick the proposal width with the smallest envelope constant
    u = np.linspace(-12.0, 12.0, 4801)
    s = float(min(sd * np.linspace(1.0, 4.0, 61), key=lambda s: float(np.max(log_ratio(mean + sd * u * 3.0, s)))))
    grid = mean + sd * u * 3.0
    vals = log_ratio(grid, s)
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda x: -log_ratio(x, s), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    log_c = max(-float(res.fun), float(vals[i])) + 1e-9
    return mean, s, log_c


def draw(m: DensityModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` raw draws from ``m`` using ``rng``."""
    c = float(m.params.get("rescale", 1.0))
    mode = m.mode
    if m.family in _INVERSE_CDF_FAMILIES:
        x = _inverse_cdf(m, rng.random(n))
        # the analytic inverses are for the unscaled family
        return mode + c * (x - mode) if c != 1.0 else x
    centre, s, log_c = _gaussian_proposal(m)
    out = np.empty(0)
    proposed = accepted = 0
    while out.size < n:
        batch = max(1024, int(1.3 * (n - out.size) * math.exp(log_c)))
        x = centre + s * rng.standard_normal(batch)
        log_q = -0.5 * ((x - centre) / s) ** 2 - math.log(s * math.sqrt(2 * math.pi))
        keep = np.log(rng.random(batch)) < m.phi(x) - log_q - log_c
        proposed += batch
        accepted += int(keep.sum())
        if proposed > 10_000 and accepted < 0.01 * proposed:
            raise SamplingError(f"rejection acceptance {accepted / proposed:.4f} below 1%")
        out = np.concatenate((out, x[keep]))
    return out[:n]


def sample_model(m: DensityModel, n: int, seed) -> Sample:
    """Deterministic i.i.d. sample of size ``n`` from ``m`` for a given ``seed``."""
    if n < 2:
        raise ValueError("need n >= 2")
    return Sample.from_values(draw(m, n, np.random.default_rng(seed)))
