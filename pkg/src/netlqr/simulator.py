"""Closed-loop rollouts and Monte Carlo cost estimates.

Randomness: episode ``k`` of a run seeded with ``seed`` draws from its own
Philox stream keyed by ``SeedSequence(seed, spawn_key=(k,))``.  Each stream
is consumed in a fixed order (channel uniforms for all steps, initial-state
innovations, noise innovations), so an episode is reproduced bit-for-bit
whether it is simulated alone or as part of a batch of any size.

Within a batch the episodes are advanced together as numpy arrays with a
leading episode axis.  Step order per ``t``: draw ``Gamma_t``, form the
uplink observation, initialize/update the common estimate, compute actions,
accrue the stage cost, then step every plant with fresh noise.  The state
``x_{T+1}`` is computed but not costed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .controller import LinearPolicy, as_policy, compute_actions
from .errors import DimensionError
from .estimator import UplinkObservation, init_estimate, update_estimate
from .model import ChannelSpec, Dims, ModelSpec, rowmul
from .synthesis import GainSchedule

NoiseSampler = Callable[[np.random.Generator, tuple], np.ndarray]
"""``sampler(rng, shape)`` -> i.i.d. zero-mean, unit-variance draws."""

_SQRT3 = math.sqrt(3.0)


def gaussian_sampler(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape)


def uniform_sampler(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.uniform(-_SQRT3, _SQRT3, shape)


SAMPLERS: dict[str, NoiseSampler] = {"gaussian": gaussian_sampler, "uniform": uniform_sampler}


def resolve_sampler(model: ModelSpec, sampler: NoiseSampler | str | None) -> NoiseSampler:
    if callable(sampler):
        return sampler
    name = sampler or model.noise.family
    try:
        return SAMPLERS[name]
    except KeyError:
        raise ValueError(
            f"noise family {name!r} needs an explicit sampler callable"
        ) from None


def psd_sqrt(S: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (tiny negative eigenvalues clipped)."""
    w, V = np.linalg.eigh((S + S.T) / 2.0)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(episode,))))


def sample_channel(channel: ChannelSpec, rng: np.random.Generator, steps: int | None = None) -> np.ndarray:
    """Bernoulli link outcomes, 1 (delivered) w.p. ``1 - p``: shape ``(N,)``,
    or ``(steps, N)`` when ``steps`` is given."""
    p = np.asarray(channel.p)
    shape = p.shape if steps is None else (steps,) + p.shape
    return (rng.random(shape) >= p).astype(np.int8)


def step_plant(model: ModelSpec, i: int, x, u, u0, w) -> np.ndarray:
    """``A x + B_local u + B_remote u0 + w`` for plant ``i`` (batched on leading axes)."""
    pl = model.plants[i]
    x, u, u0, w = (np.asarray(a, dtype=float) for a in (x, u, u0, w))
    d = model.dims
    if (
        x.shape[-1:] != (d.d_x[i],)
        or w.shape[-1:] != (d.d_x[i],)
        or u.shape[-1:] != (d.d_u[i + 1],)
        or u0.shape[-1:] != (d.d_u[0],)
    ):
        raise DimensionError(f"plant {i}: argument shapes do not match the model")
    return rowmul(pl.A, x) + rowmul(pl.B_local, u) + rowmul(pl.B_remote, u0) + w


def stage_cost(R: np.ndarray, S: np.ndarray) -> np.ndarray:
    return (S * rowmul(R, S)).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class EpisodeTrace:
    """One rollout.  Stacked layouts: ``x`` is ``(T+2, sum d_x)`` (the last
    row is the uncosted ``x_{T+1}``), ``xhat`` ``(T+1, sum d_x)``, ``gamma``
    ``(T+1, N)``, ``u0`` ``(T+1, d_u0)``, ``ubar``/``u`` ``(T+1, sum local d_u)``."""

    dims: Dims
    x: np.ndarray
    xhat: np.ndarray
    gamma: np.ndarray
    u0: np.ndarray
    ubar: np.ndarray
    u: np.ndarray
    cost: np.ndarray

    @property
    def J(self) -> float:
        return float(self.cost.sum())

    def state(self, i: int) -> np.ndarray:
        return self.x[:, self.dims.x_slice(i)]

    def estimate(self, i: int) -> np.ndarray:
        return self.xhat[:, self.dims.x_slice(i)]

    def local_action(self, i: int) -> np.ndarray:
        return self.u[:, _local_slice(self.dims, i)]

    def common_action(self, i: int) -> np.ndarray:
        return self.ubar[:, _local_slice(self.dims, i)]

    def invariant_violations(self, model: ModelSpec, rtol: float = 1e-9) -> list[str]:
        out = []
        T = self.dims.horizon
        for i in range(self.dims.n_subsystems):
            s = self.dims.x_slice(i)
            hit = self.gamma[:, i] == 1
            if not np.array_equal(self.x[: T + 1][hit][:, s], self.xhat[hit][:, s]):
                out.append(f"subsystem {i}: estimate differs from state on a delivered step")
        if np.any(self.cost < 0):
            out.append("negative stage cost")
        Jsum = float(np.sum(self.cost))
        if not math.isclose(self.J, Jsum, rel_tol=rtol, abs_tol=0.0):
            out.append("J != sum of stage costs")
        for t in range(T + 1):
            S = np.concatenate([self.x[t], self.u0[t], self.u[t]])
            c = float(stage_cost(model.R(t), S))
            if not math.isclose(c, self.cost[t], rel_tol=rtol, abs_tol=1e-12):
                out.append(f"stage cost mismatch at t={t}")
        return out


def _local_slice(dims: Dims, i: int) -> slice:
    s = dims.local_u_slice(i)
    return slice(s.start - dims.d_u[0], s.stop - dims.d_u[0])


@dataclass(frozen=True, eq=False)
class Draws:
    gamma: np.ndarray  # (M, T+1, N) int8
    z0: np.ndarray  # (M, Dx) standardized innovations
    zw: np.ndarray  # (M, T+1, Dx)


def draw_episodes(
    model: ModelSpec,
    seed: int,
    episodes: Sequence[int],
    sampler: NoiseSampler,
) -> Draws:
    dims = model.dims
    T, Dx = dims.horizon, dims.dx_total
    M = len(episodes)
    gamma = np.empty((M, T + 1, dims.n_subsystems), dtype=np.int8)
    z0 = np.empty((M, Dx))
    zw = np.empty((M, T + 1, Dx))
    for row, k in enumerate(episodes):
        rng = episode_rng(seed, int(k))
        gamma[row] = sample_channel(model.channel, rng, T + 1)
        z0[row] = sampler(rng, (Dx,))
        zw[row] = sampler(rng, (T + 1, Dx))
    return Draws(gamma, z0, zw)


@dataclass(frozen=True, eq=False)
class BatchTrace:
    """Episode-major arrays for a batch; ``trace(k)`` extracts one episode."""

    dims: Dims
    episodes: np.ndarray
    cost: np.ndarray  # (M, T+1)
    x: np.ndarray | None = None
    xhat: np.ndarray | None = None
    gamma: np.ndarray | None = None
    u0: np.ndarray | None = None
    ubar: np.ndarray | None = None
    u: np.ndarray | None = None

    @property
    def J(self) -> np.ndarray:
        return self.cost.sum(axis=1)

    def trace(self, row: int) -> EpisodeTrace:
        if self.x is None:
            raise ValueError("batch was simulated with record=False")
        return EpisodeTrace(
            self.dims,
            self.x[row],
            self.xhat[row],
            self.gamma[row],
            self.u0[row],
            self.ubar[row],
            self.u[row],
            self.cost[row],
        )


def _noise_factors(model: ModelSpec):
    nz = model.noise
    L0 = [psd_sqrt(s) for s in nz.sigma0]
    cache: dict[int, np.ndarray] = {}
    Lw = []
    for per_t in nz.sigma_w:
        row = []
        for s in per_t:
            if id(s) not in cache:
                cache[id(s)] = psd_sqrt(s)
            row.append(cache[id(s)])
        Lw.append(row)
    return L0, Lw


def rollout(
    model: ModelSpec,
    gains: GainSchedule | LinearPolicy,
    draws: Draws,
    *,
    episodes: Sequence[int] | None = None,
    gamma: np.ndarray | None = None,
    record: bool = True,
) -> BatchTrace:
    """Advance a batch of episodes defined by ``draws``.

    ``gamma`` (shape ``(T+1, N)`` or ``(M, T+1, N)``) overrides the drawn link
    outcomes, e.g. to condition on a fixed channel sequence.
    """
    pol = as_policy(gains)
    pol.check()
    dims = model.dims
    if pol.dims != dims:
        raise DimensionError("policy dimensions do not match the model")
    N, T = dims.n_subsystems, dims.horizon
    M = draws.z0.shape[0]
    G = draws.gamma if gamma is None else np.broadcast_to(np.asarray(gamma, dtype=np.int8), draws.gamma.shape)
    L0, Lw = _noise_factors(model)
    xs = [model.noise.mu0[i] + rowmul(L0[i], draws.z0[:, dims.x_slice(i)]) for i in range(N)]

    cost = np.empty((M, T + 1))
    if record:
        X = np.empty((M, T + 2, dims.dx_total))
        XH = np.empty((M, T + 1, dims.dx_total))
        U0 = np.empty((M, T + 1, dims.d_u[0]))
        du_loc = dims.du_total - dims.d_u[0]
        UB = np.empty((M, T + 1, du_loc))
        U = np.empty((M, T + 1, du_loc))

    est = None
    acts = None
    for t in range(T + 1):
        obs = UplinkObservation(tuple(G[:, t, i].astype(bool) for i in range(N)), tuple(xs))
        if t == 0:
            est = init_estimate(model.noise, obs)
        else:
            est = update_estimate(est, acts.ubar, acts.u0, obs, model)
        acts = compute_actions(pol, t, est, xs)
        S = np.concatenate(xs + [acts.u0] + list(acts.u), axis=-1)
        cost[:, t] = stage_cost(model.R(t), S)
        if record:
            X[:, t] = np.concatenate(xs, axis=-1)
            XH[:, t] = np.concatenate([np.broadcast_to(a, (M, a.shape[-1])) for a in est.xhat], axis=-1)
            U0[:, t] = acts.u0
            UB[:, t] = np.concatenate(acts.ubar, axis=-1)
            U[:, t] = np.concatenate(acts.u, axis=-1)
        xs = [
            step_plant(
                model, i, xs[i], acts.u[i], acts.u0, rowmul(Lw[i][t], draws.zw[:, t, dims.x_slice(i)])
            )
            for i in range(N)
        ]
    eps = np.arange(M) if episodes is None else np.asarray(episodes)
    if not record:
        return BatchTrace(dims, eps, cost)
    X[:, T + 1] = np.concatenate(xs, axis=-1)
    return BatchTrace(dims, eps, cost, X, XH, np.array(G), U0, UB, U)


def simulate_batch(
    model: ModelSpec,
    gains: GainSchedule | LinearPolicy,
    episodes: Sequence[int],
    seed: int,
    *,
    sampler: NoiseSampler | str | None = None,
    gamma: np.ndarray | None = None,
    record: bool = True,
) -> BatchTrace:
    smp = resolve_sampler(model, sampler)
    draws = draw_episodes(model, seed, episodes, smp)
    return rollout(model, gains, draws, episodes=episodes, gamma=gamma, record=record)


def simulate_episode(
    model: ModelSpec,
    gains: GainSchedule | LinearPolicy,
    seed: int,
    *,
    episode: int = 0,
    sampler: NoiseSampler | str | None = None,
    gamma: np.ndarray | None = None,
) -> EpisodeTrace:
    """Single rollout; identical to episode ``episode`` of ``monte_carlo(..., seed)``."""
    return simulate_batch(model, gains, [episode], seed, sampler=sampler, gamma=gamma).trace(0)


def simulate_centralized_episode(
    model: ModelSpec,
    K: Sequence[np.ndarray],
    seed: int,
    *,
    episode: int = 0,
    sampler: NoiseSampler | str | None = None,
) -> EpisodeTrace:
    """Full-state feedback ``U_t = K[t] X_t`` on the same random stream as
    :func:`simulate_episode` (link outcomes are drawn but unused)."""
    dims = model.dims
    N, T = dims.n_subsystems, dims.horizon
    smp = resolve_sampler(model, sampler)
    d = draw_episodes(model, seed, [episode], smp)
    L0, Lw = _noise_factors(model)
    xs = [model.noise.mu0[i] + rowmul(L0[i], d.z0[0, dims.x_slice(i)]) for i in range(N)]
    du0 = dims.d_u[0]
    X = np.empty((T + 2, dims.dx_total))
    U = np.empty((T + 1, dims.du_total))
    cost = np.empty(T + 1)
    for t in range(T + 1):
        x = np.concatenate(xs)
        u = rowmul(K[t], x)
        X[t], U[t] = x, u
        cost[t] = stage_cost(model.R(t), np.concatenate([x, u]))
        xs = [
            step_plant(model, i, xs[i], u[dims.local_u_slice(i)], u[:du0], rowmul(Lw[i][t], d.zw[0, t, dims.x_slice(i)]))
            for i in range(N)
        ]
    X[T + 1] = np.concatenate(xs)
    return EpisodeTrace(
        dims, X, X[: T + 1].copy(), np.ones((T + 1, N), dtype=np.int8), U[:, :du0], U[:, du0:], U[:, du0:], cost
    )


@dataclass(frozen=True)
class CostReport:
    mean: float
    stderr: float
    episodes: int
    seed: int
    profile: tuple[float, ...] | None = None

    def within(self, value: float, k: float = 4.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr


def monte_carlo(
    model: ModelSpec,
    gains: GainSchedule | LinearPolicy,
    M: int,
    seed: int,
    *,
    sampler: NoiseSampler | str | None = None,
    gamma: np.ndarray | None = None,
    chunk: int = 4096,
    profile: bool = False,
) -> CostReport:
    """Mean total cost over ``M`` independent episodes with its standard error."""
    if M < 1:
        raise ValueError("M must be >= 1")
    smp = resolve_sampler(model, sampler)
    # bound the (episodes x rows x cols) temporaries of the batched products
    d = model.dims.cost_dim
    chunk = max(1, min(chunk, (1 << 25) // (d * d)))
    J = np.empty(M)
    per_t = np.zeros(model.T + 1) if profile else None
    for start in range(0, M, chunk):
        eps = range(start, min(M, start + chunk))
        b = simulate_batch(model, gains, eps, seed, sampler=smp, gamma=gamma, record=False)
        J[start : start + len(eps)] = b.J
        if profile:
            per_t += b.cost.sum(axis=0)
    mean = float(np.mean(J))
    stderr = float(np.std(J, ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    prof = tuple((per_t / M).tolist()) if profile else None
    return CostReport(mean, stderr, M, seed, prof)


def iter_trace_rows(dims: Dims, episode: int, trace: EpisodeTrace) -> Iterable[list]:
    width = max(dims.d_x)
    uw = max(dims.d_u[1:])
    for t in range(dims.horizon + 1):
        for i in range(dims.n_subsystems):
            pad_x = [""] * (width - dims.d_x[i])
            pad_u = [""] * (uw - dims.d_u[i + 1])
            yield (
                [episode, t, i, int(trace.gamma[t, i])]
                + trace.state(i)[t].tolist() + pad_x
                + trace.estimate(i)[t].tolist() + pad_x
                + trace.common_action(i)[t].tolist() + pad_u
                + trace.local_action(i)[t].tolist() + pad_u
                + trace.u0[t].tolist()
                + [float(trace.cost[t])]
            )


def trace_header(dims: Dims) -> list[str]:
    width = max(dims.d_x)
    uw = max(dims.d_u[1:])
    return (
        ["episode", "t", "subsystem", "gamma"]
        + [f"state_{k}" for k in range(width)]
        + [f"estimate_{k}" for k in range(width)]
        + [f"ubar_{k}" for k in range(uw)]
        + [f"action_{k}" for k in range(uw)]
        + [f"remote_action_{k}" for k in range(dims.d_u[0])]
        + ["stage_cost"]
    )


def write_trace_csv(path, dims: Dims, traces: Iterable[tuple[int, EpisodeTrace]]) -> None:
    """One row per (episode, t, subsystem); narrower subsystems are blank-padded."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_header(dims))
        for k, tr in traces:
            w.writerows(iter_trace_rows(dims, k, tr))
