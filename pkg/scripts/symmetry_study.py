"""Skewness of the envelope functionals across grid settings.

Usage: python3 scripts/symmetry_study.py [workers]
Prints skewness, its standard error and the mean of H''(0) and H'''(0) for
several (K, h, R) settings.
"""

import sys

import numpy as np
from scipy import stats

from shapelim.envelope import envelope_table

SETTINGS = [  # (K, h, R, seed)
    (3.0, 0.005, 10000, 101),
    (4.0, 0.005, 5000, 102),
    (3.0, 0.0025, 5000, 103),
    (3.0, 0.01, 10000, 104),
    (2.5, 0.005, 10000, 105),
]

if __name__ == "__main__":
    workers = int(sys.argv[1]) if len(sys.argv) > 1 else 1
    print("K      h       R      skew H2   mean H2   skew H3   se(skew)")
    for K, h, R, seed in SETTINGS:
        tab = envelope_table(2, K, h, R, seed, workers=workers)
        se = np.sqrt(6.0 * (R - 2) / ((R + 1) * (R + 3)))
        print(f"{K:<6} {h:<7} {R:<6} {stats.skew(tab.H2_0):+.3f}    {np.mean(tab.H2_0):+.4f}   "
              f"{stats.skew(tab.H3_0):+.3f}    {se:.3f}")
