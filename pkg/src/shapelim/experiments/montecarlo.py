"""Seeded Monte Carlo harness linking finite-sample fits to the limit laws.

Replication ``rep`` at sample size ``n`` always draws from the substream
``default_rng([seed, n, rep])``, so results do not depend on how the work is
split across processes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from ..envelope import EnvelopeFunctionalTable
from ..estimators import evaluate_fit, mode_of_fit
from ..limits import mode_limit_scale, pointwise_constants
from ..mle import fit_log_concave, knot_gaps, verify_characterization
from ..model import DensityModel, make_density_model
from ..parallel import pmap
from .sampling import sample_model

__all__ = [
    "ESTIMANDS",
    "LIMIT_COLUMN",
    "MCError",
    "MCRun",
    "mc_pointwise",
    "mc_mode",
    "compare_to_limit",
    "loglog_slope",
]

ESTIMANDS = ("phi", "phi_prime", "f", "f_prime", "hazard", "mode", "knot_gap", "sup_f")

# which envelope functional each standardized row converges to
LIMIT_COLUMN = {
    "phi": "H2_0",
    "f": "H2_0",
    "hazard": "H2_0",
    "phi_prime": "H3_0",
    "f_prime": "H3_0",
    "mode": "argmax",
}

MAX_FAILURE_RATE = 0.01


class MCError(RuntimeError):
    pass


@lru_cache(maxsize=16)
def _model(family: str, params: tuple, x0: float) -> DensityModel:
    return make_density_model(family, dict(params), x0)


def _spec_key(m: DensityModel) -> tuple:
    return (m.family, tuple(sorted(m.params.items())), m.x0)


def _replicate(job) -> dict:
    key, n, rep, seed, window = job
    m = _model(*key)
    x0 = m.x0
    s = sample_model(m, n, [seed, n, rep])
    out = dict.fromkeys(ESTIMANDS, math.nan)
    out["ok"] = False
    out["reason"] = ""
    lo, hi = s.span
    if not lo < x0 < hi:
        out["reason"] = "x0 outside sample span"
        return out
    fit = fit_log_concave(s)
    if not fit.converged:
        out["reason"] = "not converged"
        return out
    if not verify_characterization(fit).passed:
        out["reason"] = "certificate failed"
        return out
    ev = evaluate_fit(fit, x0)
    f0 = m.f0
    d1 = m.phi(x0, 1)
    surv = 1.0 - float(m.cdf(x0))
    out["phi"] = float(ev.phi[0]) - m.phi(x0)
    out["phi_prime"] = float(ev.phi_prime[0]) - d1
    out["f"] = float(ev.f[0]) - f0
    out["f_prime"] = float(ev.f_prime[0]) - d1 * f0
    out["hazard"] = float(ev.hazard[0]) - f0 / surv
    out["mode"] = mode_of_fit(fit) - m.mode
    kg = knot_gaps(fit, x0)
    out["knot_gap"] = kg.gap
    if m.k is not None:
        s_n = n ** (-1.0 / (2 * m.k + 1))
        xs = np.clip(x0 + s_n * np.linspace(-window, window, 41), lo, hi)
        out["sup_f"] = float(np.max(np.abs(evaluate_fit(fit, xs).f - m.density(xs))))
    out["ok"] = True
    return out


@dataclass(frozen=True, eq=False)
class MCRun:
    """Raw and standardized errors, indexed ``[estimand][n_index, rep]``."""

    model: dict
    x0: float
    k: int | None
    n_grid: tuple
    R: int
    seed: int
    raw: dict = field(repr=False)
    standardized: dict = field(repr=False)
    failed: np.ndarray = field(repr=False)
    reasons: list = field(repr=False)
    constants: dict = field(repr=False)

    @property
    def failure_count(self) -> int:
        return int(self.failed.sum())

    def rmse(self, estimand: str) -> np.ndarray:
        v = self.raw[estimand]
        return np.sqrt(np.nanmean(v**2, axis=1))

    def slope(self, estimand: str) -> float:
        """Least-squares slope of log RMSE against log n."""
        return loglog_slope(self.n_grid, self.rmse(estimand))

    def slopes(self) -> dict:
        return {e: self.slope(e) for e in ESTIMANDS if len(self.n_grid) > 1}

    def knot_gap_ratios(self) -> np.ndarray:
        """Median of ``gap * n^{1/(2k+1)}`` at each n divided by its value at the previous n."""
        med = np.nanmedian(self.standardized["knot_gap"], axis=1)
        return med[1:] / med[:-1]

    def sample(self, estimand: str, n: int | None = None, standardized: bool = True) -> np.ndarray:
        i = len(self.n_grid) - 1 if n is None else self.n_grid.index(n)
        v = (self.standardized if standardized else self.raw)[estimand][i]
        return v[~np.isnan(v)]

    def summary(self) -> dict:
        return {
            "model": self.model,
            "x0": self.x0,
            "k": self.k,
            "n_grid": list(self.n_grid),
            "R": self.R,
            "seed": self.seed,
            "failures": self.failure_count,
            "failure_reasons": self.reasons,
            "rmse": {e: self.rmse(e).tolist() for e in ESTIMANDS},
            "slopes": self.slopes(),
            "knot_gap_ratios": self.knot_gap_ratios().tolist(),
            "constants": self.constants,
        }

    def write_csv(self, path) -> None:
        """Long format: one row per (estimand, n, rep), floats with 17 significant digits."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "estimand", "n", "rep", "raw", "standardized"])
            for e in ESTIMANDS:
                for i, n in enumerate(self.n_grid):
                    for rep in range(self.R):
                        w.writerow([self.model["family"], e, n, rep,
                                    "%.17g" % self.raw[e][i, rep],
                                    "%.17g" % self.standardized[e][i, rep]])

    def write(self, csv_path, json_path) -> None:
        self.write_csv(csv_path)
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, allow_nan=True)
            fh.write("\n")

    @classmethod
    def read(cls, csv_path, json_path) -> "MCRun":
        """Inverse of :meth:`write`; the arrays round-trip exactly."""
        with open(json_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        n_grid = tuple(int(n) for n in meta["n_grid"])
        R = int(meta["R"])
        raw = {e: np.full((len(n_grid), R), np.nan) for e in ESTIMANDS}
        std = {e: np.full((len(n_grid), R), np.nan) for e in ESTIMANDS}
        pos = {n: i for i, n in enumerate(n_grid)}
        with open(csv_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                i, rep = pos[int(row["n"])], int(row["rep"])
                raw[row["estimand"]][i, rep] = float(row["raw"])
                std[row["estimand"]][i, rep] = float(row["standardized"])
        failed = np.zeros((len(n_grid), R), dtype=bool)
        for r in meta["failure_reasons"]:
            failed[pos[int(r["n"])], int(r["rep"])] = True
        return cls(meta["model"], float(meta["x0"]), meta["k"], n_grid, R, int(meta["seed"]),
                   raw, std, failed, list(meta["failure_reasons"]), dict(meta["constants"]))


def loglog_slope(n_grid, values) -> float:
    x = np.log(np.asarray(n_grid, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def _standardize(m: DensityModel, n_grid, raw: dict) -> tuple[dict, dict]:
    n = np.asarray(n_grid, dtype=float)[:, None]
    std = {e: np.full_like(raw[e], np.nan) for e in ESTIMANDS}
    consts: dict = {}
    if m.k is not None:
        k = m.k
        c = pointwise_constants(m)
        consts.update(c.as_dict())
        p0 = n ** (k / (2 * k + 1))
        p1 = n ** ((k - 1) / (2 * k + 1))
        std["f"] = p0 * raw["f"] / c.c_k
        std["phi"] = p0 * raw["phi"] / c.C_k
        std["hazard"] = p0 * raw["hazard"] / c.g_k
        std["f_prime"] = p1 * raw["f_prime"] / c.d_k
        std["phi_prime"] = p1 * raw["phi_prime"] / c.D_k
        std["sup_f"] = p0 * raw["sup_f"] / c.c_k
        std["knot_gap"] = n ** (1.0 / (2 * k + 1)) * raw["knot_gap"]
    at_mode = m.with_x0(m.mode) if not m.at_mode else m
    if at_mode.k is not None:
        km = at_mode.k
        scale = mode_limit_scale(at_mode)
        consts["mode_scale"] = scale
        consts["k_mode"] = km
        std["mode"] = n ** (1.0 / (2 * km + 1)) * raw["mode"] / scale
    return std, consts


def mc_pointwise(
    m: DensityModel,
    n_grid,
    R: int,
    seed: int,
    *,
    x0: float | None = None,
    workers: int | None = None,
    window: float = 1.0,
    max_failure_rate: float = MAX_FAILURE_RATE,
) -> MCRun:
    """Fit ``R`` samples at every ``n`` and record estimation errors at ``x0``.

    Replications whose fit does not certify are excluded (NaN) and listed;
    more than ``max_failure_rate`` of them aborts the run.
    """
    if x0 is not None:
        m = m.with_x0(x0)
    n_grid = tuple(int(n) for n in n_grid)
    if R < 1 or not n_grid or min(n_grid) < 2:
        raise ValueError("need R >= 1 and every n >= 2")
    key = _spec_key(m)
    jobs = [(key, n, rep, int(seed), float(window)) for n in n_grid for rep in range(R)]
    results = pmap(_replicate, jobs, workers)
    raw = {e: np.array([r[e] for r in results], dtype=float).reshape(len(n_grid), R) for e in ESTIMANDS}
    failed = ~np.array([r["ok"] for r in results]).reshape(len(n_grid), R)
    reasons = [{"n": j[1], "rep": j[2], "reason": r["reason"]} for j, r in zip(jobs, results) if not r["ok"]]
    if failed.sum() > max_failure_rate * failed.size:
        raise MCError(f"{int(failed.sum())} of {failed.size} replications failed certification: {reasons[:5]}")
    std, consts = _standardize(m, n_grid, raw)
    return MCRun(m.spec(), m.x0, m.k, n_grid, R, int(seed), raw, std, failed, reasons, consts)


def mc_mode(m: DensityModel, n_grid, R: int, seed: int, *, workers: int | None = None) -> MCRun:
    """Monte Carlo for the mode estimator; all rows are evaluated at the true mode."""
    return mc_pointwise(m, n_grid, R, seed, x0=m.mode, workers=workers)


def compare_to_limit(mc: MCRun, table: EnvelopeFunctionalTable, n: int | None = None,
                     estimands=None) -> dict:
    """KS distance and decile differences between standardized errors and the limit table.

    Rows are compared when their order ``k`` (the mode row uses ``k`` at the
    mode) matches the table; a run with no matching row raises ``ValueError``.
    """
    n = mc.n_grid[-1] if n is None else int(n)
    if n not in mc.n_grid:
        raise ValueError(f"n={n} is not in the run's grid {mc.n_grid}")
    q = np.linspace(0.1, 0.9, 9)
    rows = {}
    for e in estimands or LIMIT_COLUMN:
        k_row = mc.constants.get("k_mode") if e == "mode" else mc.k
        if k_row != table.k:
            continue
        x = mc.sample(e, n)
        y = table.column(LIMIT_COLUMN[e])
        if x.size == 0:
            continue
        ks = stats.ks_2samp(x, y)
        qx, qy = np.quantile(x, q), np.quantile(y, q)
        rows[e] = {
            "limit_column": LIMIT_COLUMN[e],
            "n": n,
            "size": int(x.size),
            "ks": float(ks.statistic),
            "p_value": float(ks.pvalue),
            "quantiles_mc": qx.tolist(),
            "quantiles_limit": qy.tolist(),
            "quantile_deltas": (qx - qy).tolist(),
        }
    if not rows:
        raise ValueError(f"no row of the run (k={mc.k}) matches the table's k={table.k}")
    return {"k": table.k, "table": table.sidecar(), "rows": rows}
