"""Pilot runs used to calibrate the Monte Carlo acceptance bands.

Reproduces the rate and limit-law runs with the frozen seeds from
tests/acceptance_config.json and prints slopes, knot-gap ratios, KS
distances and skewness, then writes the summaries to results/pilot.json.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np
from scipy import stats

from shapelim.envelope import envelope_table
from shapelim.experiments.montecarlo import compare_to_limit, mc_pointwise
from shapelim.model import make_density_model

ROOT = Path(__file__).resolve().parents[1]
CFG = json.loads((ROOT / "tests" / "acceptance_config.json").read_text())


def main(workers: int) -> None:
    m = make_density_model("gaussian")
    out = {}

    c = CFG["rates"]
    t = time.perf_counter()
    rates = mc_pointwise(m, c["n_grid"], c["R"], c["seed"], x0=c["x0"], workers=workers)
    out["rates"] = {"slopes": rates.slopes(), "knot_gap_ratios": rates.knot_gap_ratios().tolist(),
                    "failures": rates.failure_count, "seconds": time.perf_counter() - t}
    print(json.dumps(out["rates"], indent=2))

    c = CFG["envelope"]
    table = envelope_table(2, c["K"], c["h"], c["R"], c["seed"], workers=workers)
    out["envelope"] = {"skew_H2_0": float(stats.skew(table.H2_0)), "skew_H3_0": float(stats.skew(table.H3_0)),
                       "mean_H2_0": float(np.mean(table.H2_0)), "rejections": table.rejections}
    print(json.dumps(out["envelope"], indent=2))

    c = CFG["limit_law"]
    t = time.perf_counter()
    law = mc_pointwise(m, [c["n"]], c["R"], c["seed"], x0=c["x0"], workers=workers)
    rep = compare_to_limit(law, table)
    out["limit_law"] = {e: {"ks": r["ks"], "p_value": r["p_value"]} for e, r in rep["rows"].items()}
    out["limit_law"]["failures"] = law.failure_count
    out["limit_law"]["mode_skew"] = float(stats.skew(law.sample("mode")))
    out["limit_law"]["seconds"] = time.perf_counter() - t
    print(json.dumps(out["limit_law"], indent=2))

    (ROOT / "results").mkdir(exist_ok=True)
    (ROOT / "results" / "pilot.json").write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1)
