"""Evaluation of the decentralized control law.

The remote action and the common parts of the local actions come from one
gain applied to the stacked common estimate; each local controller adds a
deviation term driven by its private estimation error ``x_i - xhat_i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .estimator import CommonEstimate
from .model import Dims, ModelSpec, rowmul
from .synthesis import GainSchedule


@dataclass(frozen=True, eq=False)
class LinearPolicy:
    """Any gain assignment of the form ``(u0, ubar) = Kc[t] xhat``,
    ``u_i = ubar_i + Kd[i][t] (x_i - xhat_i)``; not necessarily optimal."""

    dims: Dims
    Kc: tuple[np.ndarray, ...]
    Kd: tuple[tuple[np.ndarray, ...], ...]

    @classmethod
    def from_schedule(cls, schedule: GainSchedule) -> "LinearPolicy":
        return cls(schedule.dims, schedule.K, schedule.Ktilde)

    def scaled(self, factor: float) -> "LinearPolicy":
        """Every gain multiplied by ``factor`` (a detuned policy)."""
        return LinearPolicy(
            self.dims,
            tuple(factor * k for k in self.Kc),
            tuple(tuple(factor * k for k in seq) for seq in self.Kd),
        )

    def check(self) -> None:
        d = self.dims
        if len(self.Kc) != d.horizon + 1 or len(self.Kd) != d.n_subsystems:
            raise DimensionError("policy length does not match the horizon / subsystem count")
        for t, k in enumerate(self.Kc):
            if k.shape != (d.du_total, d.dx_total):
                raise DimensionError(f"Kc[{t}] has shape {k.shape}")
        for i, seq in enumerate(self.Kd):
            if len(seq) != d.horizon + 1:
                raise DimensionError(f"Kd[{i}] has {len(seq)} steps")
            for t, k in enumerate(seq):
                if k.shape != (d.d_u[i + 1], d.d_x[i]):
                    raise DimensionError(f"Kd[{i}][{t}] has shape {k.shape}")


def as_policy(gains: GainSchedule | LinearPolicy) -> LinearPolicy:
    if isinstance(gains, LinearPolicy):
        return gains
    return LinearPolicy.from_schedule(gains)


@dataclass(frozen=True, eq=False)
class ActionProfile:
    u0: np.ndarray
    ubar: tuple[np.ndarray, ...]
    u: tuple[np.ndarray, ...]

    def stacked(self) -> np.ndarray:
        """``(u0, u_1, ..., u_N)`` along the last axis."""
        return np.concatenate((self.u0,) + self.u, axis=-1)


def compute_actions(
    gains: GainSchedule | LinearPolicy,
    t: int,
    est: CommonEstimate,
    local_states: Sequence[np.ndarray],
) -> ActionProfile:
    pol = as_policy(gains)
    dims = pol.dims
    if not 0 <= t <= dims.horizon:
        raise ValueError(f"t={t} outside 0..{dims.horizon}")
    N = dims.n_subsystems
    if len(est.xhat) != N or len(local_states) != N:
        raise DimensionError("need one estimate and one local state per subsystem")
    xhat = []
    xs = []
    for i in range(N):
        xh = np.asarray(est.xhat[i], dtype=float)
        x = np.asarray(local_states[i], dtype=float)
        if xh.shape[-1:] != (dims.d_x[i],) or x.shape[-1:] != (dims.d_x[i],):
            raise DimensionError(f"subsystem {i}: state/estimate has wrong shape")
        xhat.append(xh)
        xs.append(x)
    batch = np.broadcast_shapes(*(a.shape[:-1] for a in xhat + xs))
    xhat = [np.broadcast_to(a, batch + a.shape[-1:]) for a in xhat]
    common = rowmul(pol.Kc[t], np.concatenate(xhat, axis=-1))
    u0 = common[..., dims.u_slice(0)]
    ubar = tuple(common[..., dims.local_u_slice(i)] for i in range(N))
    u = tuple(ubar[i] + rowmul(pol.Kd[i][t], xs[i] - xhat[i]) for i in range(N))
    return ActionProfile(u0, ubar, u)


@dataclass(frozen=True)
class MessageSize:
    subsystem: int
    scheme: str
    payload: int
    estimate_scheme_payload: int
    replay_scheme_payload: int


def message_sizes(model: ModelSpec) -> list[MessageSize]:
    """Smallest per-step downlink payload (in scalars) for each local controller.

    Scheme ``"A"`` sends ``(xhat_i, ubar_i)``: ``d_x[i] + d_u[i]`` numbers.
    Scheme ``"B"`` sends the link outcome bit plus ``(u0(t-1), ubar_i)`` and
    lets the local controller rerun the estimator: ``1 + d_u[0] + d_u[i]``.
    Ties go to scheme A.
    """
    dims = model.dims
    out = []
    for i in range(dims.n_subsystems):
        a = dims.d_x[i] + dims.d_u[i + 1]
        b = 1 + dims.d_u[0] + dims.d_u[i + 1]
        scheme, size = ("A", a) if a <= b else ("B", b)
        out.append(MessageSize(i, scheme, size, a, b))
    return out
