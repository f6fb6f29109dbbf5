"""Simulation-free expected cost of any linear policy of the optimal form.

The closed loop under a :class:`~netlqr.controller.LinearPolicy` is linear in
the stacked vector ``z = (xhat^-, e^-)``, where ``xhat^-`` is the estimate
*before* the current uplink outcome and ``e^- = x - xhat^-``.  A delivered
packet for subsystem ``i`` maps ``(xhat_i, e_i) -> (xhat_i + e_i, 0)``; a drop
leaves both unchanged.  Since link outcomes are independent of ``z``, the
first and second moments of ``z`` after the outcome are the
probability-weighted mixtures of the two linear maps, and the expected
stage cost is a trace against the second moment.  Everything is exact up
to floating point.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .controller import LinearPolicy, as_policy
from .errors import DimensionError
from .model import ModelSpec, assemble_global, require_valid
from .synthesis import GainSchedule


@dataclass(frozen=True, eq=False)
class JointMoment:
    """Mean ``m1`` and (non-central) second moment ``M2`` of ``(xhat, e)``."""

    m1: np.ndarray
    M2: np.ndarray

    @property
    def cov(self) -> np.ndarray:
        return self.M2 - np.outer(self.m1, self.m1)


def _reset(m1, M2, xs, es, weight):
    """Mix in the 'delivered' map for one subsystem with probability ``weight``."""
    if weight == 0.0:
        return m1, M2
    g1 = m1.copy()
    g1[xs] += g1[es]
    g1[es] = 0.0
    G2 = M2.copy()
    G2[xs, :] += G2[es, :]
    G2[es, :] = 0.0
    G2[:, xs] += G2[:, es]
    G2[:, es] = 0.0
    if weight == 1.0:
        return g1, G2
    return weight * g1 + (1.0 - weight) * m1, weight * G2 + (1.0 - weight) * M2


def _slices(model):
    dims = model.dims
    Dx = dims.dx_total
    xs = [dims.x_slice(i) for i in range(dims.n_subsystems)]
    es = [slice(s.start + Dx, s.stop + Dx) for s in xs]
    return xs, es


def _apply_channel(model, m1, M2, mixture):
    xs, es = _slices(model)
    p = model.channel.p
    N = model.N
    if mixture == "sequential":
        for i in range(N):
            m1, M2 = _reset(m1, M2, xs[i], es[i], 1.0 - p[i])
        return m1, M2
    if mixture == "enumerate":
        acc1 = np.zeros_like(m1)
        acc2 = np.zeros_like(M2)
        for gam in itertools.product((0, 1), repeat=N):
            w = 1.0
            g1, G2 = m1, M2
            for i, g in enumerate(gam):
                w *= (1.0 - p[i]) if g else p[i]
                if g:
                    g1, G2 = _reset(g1, G2, xs[i], es[i], 1.0)
            acc1 += w * g1
            acc2 += w * G2
        return acc1, acc2
    raise ValueError(f"unknown mixture mode {mixture!r}")


def _output_map(model, pol: LinearPolicy, t):
    """``L`` with ``S_t = L z`` for the post-outcome ``z``."""
    dims = model.dims
    Dx = dims.dx_total
    du0 = dims.d_u[0]
    L = np.zeros((dims.cost_dim, 2 * Dx))
    L[:Dx, :Dx] = np.eye(Dx)
    L[:Dx, Dx:] = np.eye(Dx)
    L[Dx:, :Dx] = pol.Kc[t]
    for i in range(dims.n_subsystems):
        rows = dims.cost_u_slice(i + 1)
        s = dims.x_slice(i)
        L[rows, Dx + s.start : Dx + s.stop] = pol.Kd[i][t]
    return L


def _transition(model, pol: LinearPolicy, t, A, B):
    dims = model.dims
    Dx = dims.dx_total
    F = np.zeros((2 * Dx, 2 * Dx))
    F[:Dx, :Dx] = A + B @ pol.Kc[t]
    for i, pl in enumerate(model.plants):
        s = dims.x_slice(i)
        F[Dx + s.start : Dx + s.stop, Dx + s.start : Dx + s.stop] = pl.A + pl.B_local @ pol.Kd[i][t]
    return F


def propagate_moments(model: ModelSpec, gains, *, mixture: str = "sequential") -> list[JointMoment]:
    """Post-outcome moments of ``(xhat_t, e_t)`` for ``t = 0..T``."""
    require_valid(model)
    pol = as_policy(gains)
    pol.check()
    dims = model.dims
    if pol.dims != dims:
        raise DimensionError("policy dimensions do not match the model")
    Dx = dims.dx_total
    A, B = assemble_global(model)
    mu0 = model.noise.mu0_stacked
    m1 = np.concatenate([mu0, np.zeros(Dx)])
    M2 = np.zeros((2 * Dx, 2 * Dx))
    M2[:Dx, :Dx] = np.outer(mu0, mu0)
    M2[Dx:, Dx:] = model.noise.sigma0_stacked
    out = []
    for t in range(dims.horizon + 1):
        m1, M2 = _apply_channel(model, m1, M2, mixture)
        out.append(JointMoment(m1, M2))
        F = _transition(model, pol, t, A, B)
        m1 = F @ m1
        M2 = F @ M2 @ F.T
        M2[Dx:, Dx:] += model.noise.sigma_w_stacked(t)
    return out


def cost_profile(model: ModelSpec, gains, *, mixture: str = "sequential") -> np.ndarray:
    """``E[c_t]`` for ``t = 0..T``."""
    pol = as_policy(gains)
    moments = propagate_moments(model, pol, mixture=mixture)
    prof = np.empty(len(moments))
    for t, jm in enumerate(moments):
        L = _output_map(model, pol, t)
        prof[t] = np.sum((L.T @ model.R(t) @ L) * jm.M2)
    return prof


def exact_cost(model: ModelSpec, gains: GainSchedule | LinearPolicy, *, mixture: str = "sequential") -> float:
    """Expected total cost ``E[sum_t c_t]`` of a linear policy, without sampling."""
    return float(cost_profile(model, gains, mixture=mixture).sum())


# -- optimality probes ---------------------------------------------------------


def perturb(policy: LinearPolicy, t: int, target, direction: np.ndarray, eps: float) -> LinearPolicy:
    """Copy of ``policy`` with ``eps * direction`` added to one gain.

    ``target`` is ``"c"`` for the common gain ``Kc[t]`` or a subsystem index
    for ``Kd[target][t]``.
    """
    if target == "c":
        Kc = list(policy.Kc)
        Kc[t] = Kc[t] + eps * direction
        return LinearPolicy(policy.dims, tuple(Kc), policy.Kd)
    Kd = [list(seq) for seq in policy.Kd]
    Kd[target][t] = Kd[target][t] + eps * direction
    return LinearPolicy(policy.dims, policy.Kc, tuple(tuple(s) for s in Kd))


@dataclass
class StationarityReport:
    J_opt: float
    epsilon: float
    deltas: list[float] = field(default_factory=list)
    derivatives: list[float] = field(default_factory=list)
    probes: list[tuple] = field(default_factory=list)
    delta_tol: float = -1e-10
    derivative_rtol: float = 1e-6

    @property
    def min_delta(self) -> float:
        return min(self.deltas) if self.deltas else 0.0

    @property
    def max_derivative(self) -> float:
        return max(map(abs, self.derivatives)) if self.derivatives else 0.0

    @property
    def passed(self) -> bool:
        return self.min_delta >= self.delta_tol and self.max_derivative <= self.derivative_rtol * max(
            1.0, abs(self.J_opt)
        )


def stationarity_check(
    model: ModelSpec,
    schedule: GainSchedule | LinearPolicy,
    epsilon: float = 1e-4,
    trials: int = 40,
    seed: int = 0,
) -> StationarityReport:
    """Probe the cost around ``schedule`` along random single entries and directions.

    Every probe records ``J(+eps) - J0`` and ``J(-eps) - J0`` (both must be
    ``>= -1e-10`` at a minimum) and the central difference
    ``(J(+eps) - J(-eps)) / (2 eps)`` (must vanish relative to ``|J0|``).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    pol = as_policy(schedule)
    dims = pol.dims
    rng = np.random.default_rng(seed)
    J0 = exact_cost(model, pol)
    rep = StationarityReport(J0, epsilon)
    for k in range(trials):
        t = int(rng.integers(dims.horizon + 1))
        target = "c" if rng.random() < 0.5 else int(rng.integers(dims.n_subsystems))
        shape = pol.Kc[t].shape if target == "c" else pol.Kd[target][t].shape
        D = np.zeros(shape)
        if k % 2 == 0:
            D[tuple(int(rng.integers(n)) for n in shape)] = 1.0
            kind = "entry"
        else:
            D = rng.standard_normal(shape)
            D /= np.linalg.norm(D)
            kind = "direction"
        Jp = exact_cost(model, perturb(pol, t, target, D, epsilon))
        Jm = exact_cost(model, perturb(pol, t, target, D, -epsilon))
        rep.deltas += [Jp - J0, Jm - J0]
        rep.derivatives.append((Jp - Jm) / (2 * epsilon))
        rep.probes.append((kind, t, target))
    return rep
