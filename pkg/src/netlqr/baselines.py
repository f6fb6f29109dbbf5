"""Special-case reductions used to cross-check the synthesized controller.

* :func:`centralized_lqr` - textbook finite-horizon LQ on the stacked system,
  written independently of :mod:`netlqr.synthesis`; with perfect uplinks the
  decentralized common gain must coincide with it.
* :func:`always_failed_gains` - the schedule when every uplink always fails,
  plus :func:`deviation_gain_matrix` exposing its block-diagonal structure.
* :func:`decoupled_check` - a model whose plants and costs only interact
  through disjoint slices of the remote action splits into single-plant
  problems.
* :func:`no_action_embedding` - silencing a controller by zeroing its input
  matrices and isolating its cost block.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .controller import compute_actions
from .errors import StructureError
from .estimator import CommonEstimate
from .model import (
    ChannelSpec,
    CostStage,
    Dims,
    ModelSpec,
    NoiseSpec,
    PlantBlock,
    assemble_global,
    require_valid,
    with_channel,
)
from .oracle import exact_cost
from .simulator import simulate_batch
from .synthesis import GainSchedule, synthesize


def _lq_sweep(model: ModelSpec):
    """Yield ``(t, P_t, K_t)`` for ``t = T..0`` of the centralized LQ recursion."""
    dims = model.dims
    A, B = assemble_global(model)
    Dx = dims.dx_total
    AB = np.hstack([A, B])
    P = np.zeros((Dx, Dx))
    for t in range(dims.horizon, -1, -1):
        # Hessian of the one-step Q-function in (x, u)
        H = model.R(t) + AB.T @ P @ AB
        K = -np.linalg.solve(H[Dx:, Dx:], H[Dx:, :Dx])
        IK = np.vstack([np.eye(Dx), K])
        P = IK.T @ H @ IK
        P = (P + P.T) / 2.0
        yield t, P, K


def centralized_lqr(model: ModelSpec) -> GainSchedule:
    """Full-state-feedback LQ schedule ``U_t = K[t] X_t`` (``Ptilde``/``Ktilde`` empty)."""
    require_valid(model)
    dims = model.dims
    T = dims.horizon
    P = [None] * (T + 2)
    K = [None] * (T + 1)
    P[T + 1] = np.zeros((dims.dx_total, dims.dx_total))
    for t, P_t, K_t in _lq_sweep(model):
        P[t], K[t] = P_t, K_t
    e = np.zeros(T + 2)
    for t in range(T, -1, -1):
        e[t] = e[t + 1] + np.trace(P[t + 1] @ model.noise.sigma_w_stacked(t))
    return GainSchedule(dims, tuple(P), tuple(K), (), (), e, (0.0,) * dims.n_subsystems, None)


def centralized_benchmark_pass(model: ModelSpec) -> int:
    """The centralized recursion without storing its output (runtime measurements)."""
    require_valid(model)
    steps = 0
    for _ in _lq_sweep(model):
        steps += 1
    return steps


def always_failed_gains(model: ModelSpec) -> GainSchedule:
    """Synthesis with every uplink failure probability set to 1."""
    return synthesize(with_channel(model, 1.0))


def deviation_gain_matrix(schedule: GainSchedule, t: int) -> np.ndarray:
    """Stacked deviation gain mapping ``x - xhat`` to ``(u0, u_1, ..., u_N)``.

    The remote rows are zero and the local rows are block diagonal in
    ``Ktilde[i][t]``; the full action is ``K[t] xhat + this @ (x - xhat)``.
    """
    d = schedule.dims
    out = np.zeros((d.du_total, d.dx_total))
    for i in range(d.n_subsystems):
        out[d.local_u_slice(i), d.x_slice(i)] = schedule.Ktilde[i][t]
    return out


# -- decoupled systems ----------------------------------------------------------


@dataclass
class DecoupledReport:
    passed: bool
    max_gain_diff: float
    max_action_diff: float
    tolerance: float
    episodes: int
    sub_schedules: list = field(default_factory=list, repr=False)


def _remote_split(model: ModelSpec, remote_split: Sequence[int] | None) -> list[slice]:
    N, du0 = model.N, model.dims.d_u[0]
    if remote_split is None:
        if du0 % N:
            raise StructureError(f"remote action size {du0} cannot be split evenly over {N} subsystems")
        remote_split = [du0 // N] * N
    if len(remote_split) != N or sum(remote_split) != du0:
        raise StructureError(f"remote_split {list(remote_split)} does not partition d_u[0]={du0}")
    off = np.concatenate([[0], np.cumsum(remote_split)]).astype(int)
    return [slice(off[i], off[i + 1]) for i in range(N)]


def decompose(model: ModelSpec, remote_split: Sequence[int] | None = None) -> list[ModelSpec]:
    """Split a decoupled model into ``N`` single-plant models.

    Raises :class:`StructureError` if a plant is driven by another
    subsystem's slice of ``u0`` or the cost couples different subsystems.
    """
    require_valid(model)
    dims = model.dims
    r_sl = _remote_split(model, remote_split)
    Dx = dims.dx_total
    groups = []
    for i in range(dims.n_subsystems):
        xs = dims.x_slice(i)
        us = dims.cost_u_slice(i + 1)
        idx = np.r_[xs.start : xs.stop, Dx + r_sl[i].start : Dx + r_sl[i].stop, us.start : us.stop]
        groups.append(idx)
        Br = model.plants[i].B_remote
        mask = np.ones(dims.d_u[0], dtype=bool)
        mask[r_sl[i]] = False
        if np.any(Br[:, mask] != 0):
            raise StructureError(f"plant {i} is driven by remote inputs outside its slice")
    for t, cs in enumerate(model.costs):
        for i, gi in enumerate(groups):
            for j, gj in enumerate(groups):
                if i != j and np.any(cs.R[np.ix_(gi, gj)] != 0):
                    raise StructureError(f"R_{t} couples subsystems {i} and {j}")
    subs = []
    for i, gi in enumerate(groups):
        pl = model.plants[i]
        sub_dims = Dims(1, (dims.d_x[i],), (r_sl[i].stop - r_sl[i].start, dims.d_u[i + 1]), dims.horizon)
        cache: dict[int, CostStage] = {}
        costs = []
        for cs in model.costs:
            if id(cs) not in cache:
                cache[id(cs)] = CostStage(cs.R[np.ix_(gi, gi)])
            costs.append(cache[id(cs)])
        nz = model.noise
        subs.append(
            ModelSpec(
                sub_dims,
                (PlantBlock(pl.A, pl.B_local, pl.B_remote[:, r_sl[i]]),),
                tuple(costs),
                NoiseSpec((nz.mu0[i],), (nz.sigma0[i],), (nz.sigma_w[i],), nz.family),
                ChannelSpec((model.channel.p[i],)),
            )
        )
    return subs


def decoupled_check(
    model: ModelSpec,
    remote_split: Sequence[int] | None = None,
    *,
    episodes: int = 5,
    seed: int = 0,
    tol: float = 1e-9,
) -> DecoupledReport:
    """Joint synthesis vs. independent per-subsystem syntheses.

    Gains are compared blockwise, and the per-subsystem controllers are fed
    the states and common estimates of jointly simulated episodes; their
    actions must reproduce the joint actions to ``tol`` (relative to the
    action magnitude, floor 1).
    """
    subs = decompose(model, remote_split)
    r_sl = _remote_split(model, remote_split)
    joint = synthesize(model)
    sub_sched = [synthesize(s) for s in subs]
    dims = model.dims

    gain_diff = 0.0
    for i, ss in enumerate(sub_sched):
        for t in range(dims.horizon + 1):
            gain_diff = max(gain_diff, float(np.max(np.abs(ss.Ktilde[0][t] - joint.Ktilde[i][t]))))

    batch = simulate_batch(model, joint, range(episodes), seed)
    act_diff, scale = 0.0, 1.0
    for k in range(episodes):
        tr = batch.trace(k)
        for t in range(dims.horizon + 1):
            for i, ss in enumerate(sub_sched):
                est = CommonEstimate((tr.estimate(i)[t],), t)
                a = compute_actions(ss, t, est, (tr.state(i)[t],))
                ref_u0 = tr.u0[t][r_sl[i]]
                ref_u = tr.local_action(i)[t]
                scale = max(scale, float(np.max(np.abs(ref_u0))), float(np.max(np.abs(ref_u))))
                act_diff = max(
                    act_diff,
                    float(np.max(np.abs(a.u0 - ref_u0))),
                    float(np.max(np.abs(a.u[0] - ref_u))),
                )
    passed = act_diff <= tol * scale and gain_diff <= tol * max(1.0, _max_abs(joint.Ktilde))
    return DecoupledReport(passed, gain_diff, act_diff, tol * scale, episodes, sub_sched)


def _max_abs(seqs) -> float:
    return max(float(np.max(np.abs(m))) for seq in seqs for m in seq)


# -- idle controllers ----------------------------------------------------------


def no_action_embedding(model: ModelSpec, idle_set: Iterable[int]) -> ModelSpec:
    """Model in which the controllers in ``idle_set`` (0 = remote, ``n`` = local
    controller of plant ``n``, 1-based) cannot act and are cost-isolated.

    Input matrices of an idle controller are zeroed, its action block of
    ``R_t`` becomes the identity and every cross term with its action is
    removed.  The optimal action of an idle controller is then zero.
    """
    idle = sorted(set(int(k) for k in idle_set))
    dims = model.dims
    if any(k < 0 or k > dims.n_subsystems for k in idle):
        raise ValueError(f"idle_set entries must lie in 0..{dims.n_subsystems}")
    if not idle:
        return model
    plants = list(model.plants)
    for k in idle:
        if k == 0:
            plants = [replace(pl, B_remote=np.zeros_like(pl.B_remote)) for pl in plants]
        else:
            plants[k - 1] = replace(plants[k - 1], B_local=np.zeros_like(plants[k - 1].B_local))
    cache: dict[int, CostStage] = {}
    costs = []
    for cs in model.costs:
        if id(cs) not in cache:
            R = np.array(cs.R)
            for k in idle:
                s = dims.cost_u_slice(k)
                R[s, :] = 0.0
                R[:, s] = 0.0
                R[s, s] = np.eye(s.stop - s.start)
            cache[id(cs)] = CostStage(R)
        costs.append(cache[id(cs)])
    return replace(model, plants=tuple(plants), costs=tuple(costs))


def failure_cost_comparison(model: ModelSpec) -> tuple[float, float]:
    """Optimal expected cost with perfect uplinks and with always-failed uplinks.

    Reported for inspection only; no ordering between the two is enforced.
    """
    m0 = with_channel(model, 0.0)
    m1 = with_channel(model, 1.0)
    return exact_cost(m0, synthesize(m0)), exact_cost(m1, synthesize(m1))
