"""Tabulate the k=2 and k=4 lower-envelope functionals used as limit tables.

Usage: python3 scripts/envelope_table.py [R] [workers]
"""

import sys
from pathlib import Path

from shapelim.cli import run

ROOT = Path(__file__).resolve().parents[1] / "results"

if __name__ == "__main__":
    R = sys.argv[1] if len(sys.argv) > 1 else "2000"
    workers = sys.argv[2] if len(sys.argv) > 2 else "1"
    for k, K, seed in ((2, "3", "7"), (4, "2.2", "8")):
        out = ROOT / f"envelope_k{k}"
        code = run(["envelope", "--k", str(k), "--K", K, "--h", "0.005", "--reps", R,
                    "--seed", seed, "--workers", workers, str(out)])
        print(f"k={k}: exit {code}, table in {out}")
        if code:
            sys.exit(code)
