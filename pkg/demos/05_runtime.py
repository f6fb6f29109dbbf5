"""Synthesis time against a centralized LQ solve of the same size.

Both are backward matrix recursions over the same stacked system; the
decentralized one additionally runs a small per-plant recursion, so its
cost is a modest constant factor above the centralized one.  Absolute times
depend on the machine.  ``netlqr benchmark`` runs the full-size version.
"""

import time

import numpy as np

from netlqr.baselines import centralized_benchmark_pass
from netlqr.model import Dims, random_model
from netlqr.synthesis import benchmark_pass

T = 300
for N in (1, 10, 30):
    dims = Dims(N, (3,) * N, (3,) * (N + 1), T)
    dec, cen = [], []
    for seed in range(3):
        m = random_model(dims, (0.0, 20.0), seed, cost_method="gram", per_step_costs=False)
        t0 = time.perf_counter()
        benchmark_pass(m)
        dec.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        centralized_benchmark_pass(m)
        cen.append(time.perf_counter() - t0)
    print(f"N={N:3d}  decentralized {np.mean(dec):.3f}s  centralized {np.mean(cen):.3f}s  "
          f"ratio {np.mean(dec) / np.mean(cen):.2f}")
