"""A single scalar plant, end to end.

x' = x + u0 + u1 + w, with unit stage cost on (x, u0, u1) and a 50% lossy
uplink.  We synthesize the gains, look at the value of the problem, and
watch the common estimate snap to the state whenever a packet gets through.
"""

import numpy as np

from netlqr import exact_cost, initial_value, simulate_episode, synthesize
from netlqr.model import scalar_instance

model = scalar_instance(p=0.5, horizon=6)
gains = synthesize(model)

print("t   K (u0, ubar)          Ktilde    P        Ptilde")
for t in range(model.T + 1):
    K = gains.K[t].ravel()
    print(f"{t}   ({K[0]:+.4f}, {K[1]:+.4f})   {gains.Ktilde[0][t][0, 0]:+.4f}   "
          f"{gains.P[t][0, 0]:.4f}   {gains.Ptilde[0][t][0, 0]:.4f}")

# The deviation gain is larger in magnitude than the common one: the local
# controller leans harder on what only it knows.
print("\nexpected cost, from the value function:", initial_value(model, gains))
print("expected cost, from moment propagation:", exact_cost(model, gains))

tr = simulate_episode(model, gains, seed=2024)
print("\n t  gamma      x        xhat      u0       u1")
for t in range(model.T + 1):
    print(f"{t:2d}  {tr.gamma[t, 0]}    {tr.x[t, 0]:+8.4f}  {tr.xhat[t, 0]:+8.4f}  "
          f"{tr.u0[t, 0]:+8.4f} {tr.u[t, 0]:+8.4f}")
assert np.array_equal(tr.x[:-1][tr.gamma[:, 0] == 1], tr.xhat[tr.gamma[:, 0] == 1])
print("episode cost:", tr.J)
