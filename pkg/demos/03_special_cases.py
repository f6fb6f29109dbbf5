"""Limiting cases where the answer is known in advance."""

import numpy as np

from netlqr import synthesize
from netlqr.baselines import always_failed_gains, centralized_lqr, deviation_gain_matrix, no_action_embedding
from netlqr.model import Dims, random_model, with_channel
from netlqr.simulator import simulate_batch

model = random_model(Dims(3, (2, 2, 2), (2, 2, 2, 2), 10), (-1.0, 1.0), seed=8, cost_method="gram")

# Perfect uplinks: everybody knows everything, so the common gain is the
# textbook LQ gain (computed here by separate code).
diff = max(np.abs(a - b).max() for a, b in zip(synthesize(model).K, centralized_lqr(model).K))
print(f"perfect links: largest gap to centralized LQ gain {diff:.2e}")

# Links that never deliver: the deviation part of the control law only ever
# uses a controller's own plant, and the remote controller has no deviation term.
G = deviation_gain_matrix(always_failed_gains(model), 0)
print("\nalways-failed links, deviation gain pattern at t=0 (rows u0,u1,u2,u3; cols x1,x2,x3):")
print((np.abs(G) > 0).astype(int))

# Controllers that cannot act end up with zero optimal action.
idle = no_action_embedding(model, {0, 2})
b = simulate_batch(idle, synthesize(idle), range(100), seed=0)
print("\nremote and second local controller silenced:")
print("  max |u0|", np.abs(b.u0).max(), "  max |u2|", np.abs(b.u[..., 2:4]).max())
