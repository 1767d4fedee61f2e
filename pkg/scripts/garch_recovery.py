"""Monte Carlo recovery study for the GARCH(1,1) estimator.

Simulates each parameter triple over several seeds, refits, and prints the
median estimate with the interquartile range.
"""

import argparse
import time

import numpy as np

from stresslab.diagnostics import garch_fit, garch_simulate
from stresslab.market_data import GarchParams

TRIPLES = [
    (0.2291, 0.0824, 0.8340),
    (0.05, 0.05, 0.90),
    (0.10, 0.10, 0.85),
    (0.50, 0.15, 0.70),
    (2e-6, 0.08, 0.90),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--T", type=int, default=5000)
    args = ap.parse_args()

    print(f"{'true (omega, alpha, beta)':>32}  {'median fit':>32}  {'alpha IQR':>18}  sec")
    for triple in TRIPLES:
        t0 = time.perf_counter()
        fits = [garch_fit(garch_simulate(GarchParams(*triple), args.T, s)) for s in range(args.seeds)]
        est = np.array([[f.omega, f.alpha, f.beta] for f in fits])
        med = np.median(est, axis=0)
        q1, q3 = np.percentile(est[:, 1], [25, 75])
        fmt = lambda v: "(" + ", ".join(f"{x:.4g}" for x in v) + ")"
        print(f"{fmt(triple):>32}  {fmt(med):>32}  {f'[{q1:.3f}, {q3:.3f}]':>18}  {time.perf_counter() - t0:.1f}")


if __name__ == "__main__":
    main()
