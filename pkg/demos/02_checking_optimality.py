"""How do we know the gains are optimal?

Three independent angles on a random two-plant model:
the exact expected cost (no sampling), a Monte Carlo estimate, and a probe
of the cost surface around the synthesized gains.
"""

from netlqr import exact_cost, initial_value, monte_carlo, stationarity_check, synthesize
from netlqr.controller import LinearPolicy
from netlqr.model import Dims, random_model

model = random_model(Dims(2, (2, 2), (2, 2, 2), 15), (-1.0, 1.0), seed=3, p=[0.3, 0.7], cost_method="gram")
gains = synthesize(model)

J = exact_cost(model, gains)
print(f"value function      {initial_value(model, gains):.6f}")
print(f"exact cost          {J:.6f}")
mc = monte_carlo(model, gains, 20000, seed=1)
print(f"Monte Carlo         {mc.mean:.6f} +/- {mc.stderr:.6f}")

# Any other linear policy of the same shape should cost more.
for factor in (0.9, 1.1):
    print(f"gains x {factor}: exact cost {exact_cost(model, LinearPolicy.from_schedule(gains).scaled(factor)):.6f}")

rep = stationarity_check(model, gains, epsilon=1e-4, trials=50, seed=0)
print(f"\n{len(rep.probes)} perturbation probes: smallest cost change {rep.min_delta:.3e}, "
      f"largest |directional derivative| {rep.max_derivative:.3e}  -> {'stationary' if rep.passed else 'NOT stationary'}")
