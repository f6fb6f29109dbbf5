"""Offline synthesis of the optimal gain schedule.

Two coupled backward recursions are run from ``P[T+1] = 0``:

* a centralized Riccati recursion on the stacked system, giving ``P[t]``
  and the common gain ``K[t]`` that maps the stacked common estimate to
  ``(u0, ubar_1, ..., ubar_N)``;
* for every subsystem a local recursion driven by the mixture
  ``(1 - p_i) P_ii[t+1] + p_i Ptilde_i[t+1]``, giving ``Ptilde_i[t]`` and the
  deviation gain ``Ktilde_i[t]`` applied to ``x_i - xhat_i``.

Both use the same one-step operator pair :func:`omega` / :func:`psi`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .errors import ArtifactMismatch, DimensionError, FormatError, SynthesisError
from .model import (
    Dims,
    ModelSpec,
    assemble_global,
    cost_blocks,
    local_cost_blocks,
    min_eig,
    model_hash,
    require_valid,
)

GAINS_FORMAT = "netlqr-gains/1"
COND_CAP = 1e12


def _factor(H: np.ndarray, where: str = "", t=None, subsystem=None):
    """Cholesky factor of the symmetric PD matrix ``H`` with a condition cap."""
    H = (H + H.T) / 2.0
    try:
        cf = scipy.linalg.cho_factor(H, lower=False, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SynthesisError(f"inner matrix {where} is not positive definite", t, subsystem) from exc
    anorm = np.abs(H).sum(axis=0).max()
    rcond, info = lapack.dpocon(cf[0], anorm)
    if info != 0 or rcond * COND_CAP < 1.0:
        cond = np.inf if rcond == 0 else 1.0 / rcond
        raise SynthesisError(
            f"inner matrix {where} has condition number ~{cond:.2e} > {COND_CAP:.0e}", t, subsystem
        )
    return cf


def _riccati_step(P, A, B, R11, R22, R12, *, t=None, subsystem=None):
    PB = P @ B
    H = R22 + B.T @ PB
    cf = _factor(H, "R22 + B'PB", t, subsystem)
    G = R12 + A.T @ PB
    gain = -scipy.linalg.cho_solve(cf, G.T)
    Om = R11 + A.T @ P @ A + G @ gain
    return (Om + Om.T) / 2.0, gain


def omega(P, A, B, R11, R22, R12, *, t=None, subsystem=None) -> np.ndarray:
    """``R11 + A'PA - (R12 + A'PB)(R22 + B'PB)^{-1}(R12' + B'PA)``, symmetrized."""
    args = [np.atleast_2d(np.asarray(a, dtype=float)) for a in (P, A, B, R11, R22, R12)]
    return _riccati_step(*args, t=t, subsystem=subsystem)[0]


def psi(P, A, B, R22, R12, *, t=None, subsystem=None) -> np.ndarray:
    """``-(R22 + B'PB)^{-1}(R12' + B'PA)``."""
    P, A, B, R22, R12 = [np.atleast_2d(np.asarray(a, dtype=float)) for a in (P, A, B, R22, R12)]
    cf = _factor(R22 + B.T @ P @ B, "R22 + B'PB", t, subsystem)
    return -scipy.linalg.cho_solve(cf, R12.T + B.T @ P @ A)


@dataclass(frozen=True, eq=False)
class GainSchedule:
    """Synthesized gains and value-function coefficients.

    ``P`` and ``e`` run over ``t = 0..T+1``; ``K`` over ``t = 0..T``.
    ``Ptilde[i]`` / ``Ktilde[i]`` are the per-subsystem sequences; they are
    empty for schedules produced by the centralized baseline.
    """

    dims: Dims
    P: tuple[np.ndarray, ...]
    K: tuple[np.ndarray, ...]
    Ptilde: tuple[tuple[np.ndarray, ...], ...]
    Ktilde: tuple[tuple[np.ndarray, ...], ...]
    e: np.ndarray
    p: tuple[float, ...]
    model_hash: str | None = None

    @property
    def T(self) -> int:
        return self.dims.horizon

    def Pblock(self, t: int, i: int) -> np.ndarray:
        s = self.dims.x_slice(i)
        return self.P[t][s, s]

    def invariant_violations(self, tol: float = -1e-9) -> list[str]:
        """Zero terminal conditions, symmetry and PSD-ness of every ``P``/``Ptilde``."""
        out = []
        T = self.T
        if np.any(self.P[T + 1] != 0):
            out.append("P[T+1] != 0")
        if self.e[T + 1] != 0:
            out.append("e[T+1] != 0")
        for t, P in enumerate(self.P):
            if not np.array_equal(P, P.T):
                out.append(f"P[{t}] not symmetric")
            if min_eig(P) < tol:
                out.append(f"P[{t}] min eigenvalue {min_eig(P):.3e}")
        for i, seq in enumerate(self.Ptilde):
            if np.any(seq[T + 1] != 0):
                out.append(f"Ptilde[{i}][T+1] != 0")
            for t, Pt in enumerate(seq):
                if not np.array_equal(Pt, Pt.T):
                    out.append(f"Ptilde[{i}][{t}] not symmetric")
                if min_eig(Pt) < tol:
                    out.append(f"Ptilde[{i}][{t}] min eigenvalue {min_eig(Pt):.3e}")
        return out


@dataclass(frozen=True, eq=False)
class BeliefSummary:
    """Per-subsystem mean and covariance of the common belief."""

    mean: tuple[np.ndarray, ...]
    cov: tuple[np.ndarray, ...]


def _backward_pass(model: ModelSpec) -> Iterator[tuple]:
    """Yield ``(t, P_t, K_t, [Ptilde_i,t], [Ktilde_i,t])`` for ``t = T..0``."""
    dims = model.dims
    A, B = assemble_global(model)
    N, T = dims.n_subsystems, dims.horizon
    p = model.channel.p
    P_next = np.zeros((dims.dx_total, dims.dx_total))
    Pt_next = [np.zeros((d, d)) for d in dims.d_x]
    for t in range(T, -1, -1):
        R = model.R(t)
        Rxx, Ruu, Rxu = cost_blocks(R, dims)
        P_t, K_t = _riccati_step(P_next, A, B, Rxx, Ruu, Rxu, t=t)
        Pt_t, Kt_t = [], []
        for i, pl in enumerate(model.plants):
            s = dims.x_slice(i)
            mix = (1.0 - p[i]) * P_next[s, s] + p[i] * Pt_next[i]
            R11, R22, R12 = local_cost_blocks(R, dims, i)
            Pi, Ki = _riccati_step(mix, pl.A, pl.B_local, R11, R22, R12, t=t, subsystem=i)
            Pt_t.append(Pi)
            Kt_t.append(Ki)
        yield t, P_t, K_t, Pt_t, Kt_t
        P_next, Pt_next = P_t, Pt_t


def noise_constant(model: ModelSpec, P, Ptilde) -> np.ndarray:
    """``e[t]`` for ``t = 0..T+1``: accumulated noise contribution to the cost-to-go."""
    dims, T = model.dims, model.T
    p = model.channel.p
    e = np.zeros(T + 2)
    for t in range(T, -1, -1):
        acc = 0.0
        for i in range(dims.n_subsystems):
            s = dims.x_slice(i)
            mix = (1.0 - p[i]) * P[t + 1][s, s] + p[i] * Ptilde[i][t + 1]
            acc += np.trace(mix @ model.noise.sigma_w[i][t])
        e[t] = e[t + 1] + acc
    return e


def synthesize(model: ModelSpec) -> GainSchedule:
    """Run the coupled backward recursions and return the full schedule."""
    require_valid(model)
    dims, T, N = model.dims, model.T, model.N
    P = [None] * (T + 2)
    K = [None] * (T + 1)
    Pt = [[None] * (T + 2) for _ in range(N)]
    Kt = [[None] * (T + 1) for _ in range(N)]
    P[T + 1] = np.zeros((dims.dx_total, dims.dx_total))
    for i in range(N):
        Pt[i][T + 1] = np.zeros((dims.d_x[i], dims.d_x[i]))
    for t, P_t, K_t, Pt_t, Kt_t in _backward_pass(model):
        P[t], K[t] = P_t, K_t
        for i in range(N):
            Pt[i][t], Kt[i][t] = Pt_t[i], Kt_t[i]
    e = noise_constant(model, P, Pt)
    for a in P + K + [m for seq in Pt + Kt for m in seq] + [e]:
        a.setflags(write=False)
    return GainSchedule(
        dims=dims,
        P=tuple(P),
        K=tuple(K),
        Ptilde=tuple(tuple(s) for s in Pt),
        Ktilde=tuple(tuple(s) for s in Kt),
        e=e,
        p=model.channel.p,
        model_hash=model_hash(model),
    )


def benchmark_pass(model: ModelSpec) -> int:
    """Run the recursions without storing the schedule; returns the step count.

    Used for runtime measurements on models whose full schedule would not
    fit in memory.
    """
    require_valid(model)
    steps = 0
    for _ in _backward_pass(model):
        steps += 1
    return steps


def _check_belief(belief: BeliefSummary, dims: Dims):
    if len(belief.mean) != dims.n_subsystems or len(belief.cov) != dims.n_subsystems:
        raise DimensionError("belief must have one mean and covariance per subsystem")
    for i, (m, S) in enumerate(zip(belief.mean, belief.cov)):
        d = dims.d_x[i]
        if np.shape(m) != (d,) or np.shape(S) != (d, d):
            raise DimensionError(f"belief for subsystem {i} has wrong shape")


def value_function(t: int, belief: BeliefSummary, schedule: GainSchedule) -> float:
    """Optimal cost-to-go at step ``t`` for a common belief with the given moments."""
    dims = schedule.dims
    if not 0 <= t <= dims.horizon + 1:
        raise ValueError(f"t={t} outside 0..{dims.horizon + 1}")
    _check_belief(belief, dims)
    m = np.concatenate([np.asarray(v, dtype=float) for v in belief.mean])
    val = m @ schedule.P[t] @ m
    for i, S in enumerate(belief.cov):
        val += np.trace(schedule.Ptilde[i][t] @ np.asarray(S, dtype=float))
    return float(val + schedule.e[t])


def initial_value(model: ModelSpec, schedule: GainSchedule) -> float:
    """Expected optimal cost: ``V_0`` averaged over the time-0 uplink outcomes.

    The time-0 common belief already reflects ``Z_0``: a delivered packet
    collapses subsystem ``i``'s belief onto the true ``x_i(0)`` (mean
    ``x_i(0)``, zero covariance), a dropped one leaves ``(mu0_i, Sigma0_i)``.
    Averaging the value function over both cases gives

        mu0' P_0 mu0 + sum_i tr(((1-p_i) P_0^ii + p_i Ptilde_0^i) Sigma0_i) + e_0.
    """
    _check_compat(model, schedule)
    dims = model.dims
    mu0 = model.noise.mu0_stacked
    val = mu0 @ schedule.P[0] @ mu0
    for i, p_i in enumerate(model.channel.p):
        s = dims.x_slice(i)
        mix = (1.0 - p_i) * schedule.P[0][s, s] + p_i * schedule.Ptilde[i][0]
        val += np.trace(mix @ model.noise.sigma0[i])
    return float(val + schedule.e[0])


def initial_belief(model: ModelSpec) -> BeliefSummary:
    """Prior belief ``(mu0, Sigma0)`` before the first uplink outcome."""
    return BeliefSummary(model.noise.mu0, model.noise.sigma0)


def _check_compat(model: ModelSpec, schedule: GainSchedule):
    if schedule.dims != model.dims:
        raise DimensionError("schedule dimensions do not match the model")


# -- JSON I/O ------------------------------------------------------------------


def schedule_to_dict(schedule: GainSchedule) -> dict:
    d = schedule.dims
    return {
        "format": GAINS_FORMAT,
        "model_hash": schedule.model_hash,
        "dims": {"n_subsystems": d.n_subsystems, "d_x": list(d.d_x), "d_u": list(d.d_u)},
        "horizon": d.horizon,
        "p": list(schedule.p),
        "P": [m.tolist() for m in schedule.P],
        "K": [m.tolist() for m in schedule.K],
        "Ptilde": [[m.tolist() for m in seq] for seq in schedule.Ptilde],
        "Ktilde": [[m.tolist() for m in seq] for seq in schedule.Ktilde],
        "e": schedule.e.tolist(),
    }


def _arr(x):
    a = np.array(x, dtype=float)
    a.setflags(write=False)
    return a


def schedule_from_dict(doc: dict) -> GainSchedule:
    if doc.get("format") != GAINS_FORMAT:
        raise FormatError(f"expected format {GAINS_FORMAT!r}, got {doc.get('format')!r}")
    try:
        d = doc["dims"]
        dims = Dims(int(d["n_subsystems"]), tuple(d["d_x"]), tuple(d["d_u"]), int(doc["horizon"]))
        return GainSchedule(
            dims=dims,
            P=tuple(_arr(m) for m in doc["P"]),
            K=tuple(_arr(m) for m in doc["K"]),
            Ptilde=tuple(tuple(_arr(m) for m in seq) for seq in doc["Ptilde"]),
            Ktilde=tuple(tuple(_arr(m) for m in seq) for seq in doc["Ktilde"]),
            e=_arr(doc["e"]),
            p=tuple(doc["p"]),
            model_hash=doc.get("model_hash"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed gains document: {exc!r}") from exc


def save_schedule(schedule: GainSchedule, path, manifest: dict | None = None) -> None:
    doc = schedule_to_dict(schedule)
    if manifest is not None:
        doc["manifest"] = manifest
    Path(path).write_text(json.dumps(doc, indent=1))


def load_schedule(path) -> GainSchedule:
    return schedule_from_dict(json.loads(Path(path).read_text()))


def check_schedule_matches(model: ModelSpec, schedule: GainSchedule) -> None:
    """Raise :class:`ArtifactMismatch` unless ``schedule`` was built from ``model``."""
    if schedule.model_hash is not None and schedule.model_hash != model_hash(model):
        raise ArtifactMismatch("gains were synthesized for a different model")
    if schedule.dims != model.dims:
        raise ArtifactMismatch("gains dimensions do not match the model")
