"""The gains ignore the noise, and the noise need not be Gaussian."""

import numpy as np

from netlqr import initial_value, monte_carlo, synthesize
from netlqr.model import NoiseSpec, scale_noise, scalar_instance, with_noise

model = scalar_instance(horizon=10)
loud = scale_noise(model, 5.0)
g, g_loud = synthesize(model), synthesize(loud)
print("same K after scaling noise by 5:", all(np.array_equal(a, b) for a, b in zip(g.K, g_loud.K)))
print("noise constant e_0:", g.e[0], "vs", g_loud.e[0])

V = initial_value(model, g)
print(f"\nexpected cost {V:.4f}")
for family in ("gaussian", "uniform"):
    nz = model.noise
    m = with_noise(model, NoiseSpec(nz.mu0, nz.sigma0, nz.sigma_w, family))
    rep = monte_carlo(m, g, 50000, seed=7)
    print(f"{family:>8} noise: {rep.mean:.4f} +/- {rep.stderr:.4f}")
