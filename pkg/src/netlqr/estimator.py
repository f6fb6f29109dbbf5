"""Common state estimate shared by the remote and all local controllers.

The estimate of plant ``i`` resets to the true state whenever the uplink
delivers, and otherwise propagates noiselessly under the *common* part of
the actions (``ubar_i`` and ``u0``).

Every function works on single episodes and on batches alike: arrays may
carry any number of leading batch axes, and the per-subsystem ``received``
flags are booleans broadcast against them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .model import ModelSpec, NoiseSpec, rowmul


@dataclass(frozen=True, eq=False)
class CommonEstimate:
    xhat: tuple[np.ndarray, ...]
    t: int


@dataclass(frozen=True, eq=False)
class UplinkObservation:
    """Per-subsystem channel output: a delivered state or a dropped packet.

    ``received[i]`` is a bool (or bool array over episodes); ``states[i]``
    holds the transmitted state and is ignored wherever the packet dropped.
    """

    received: tuple
    states: tuple

    @classmethod
    def from_list(cls, items: Sequence[np.ndarray | None]) -> "UplinkObservation":
        """Build from ``[x_1 or None, ...]`` where ``None`` marks a drop."""
        received = tuple(x is not None for x in items)
        states = tuple(None if x is None else np.asarray(x, dtype=float) for x in items)
        return cls(received, states)

    @classmethod
    def all_dropped(cls, n: int) -> "UplinkObservation":
        return cls((False,) * n, (None,) * n)


def _merge(received, x, fallback, dim, i):
    if x is None:
        if np.any(received):
            raise DimensionError(f"subsystem {i} marked received without a payload")
        return np.asarray(fallback, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (dim,):
        raise DimensionError(f"subsystem {i}: payload has shape {x.shape}, expected (..., {dim})")
    r = np.asarray(received, dtype=bool)
    if r.ndim:
        r = r[..., None]
    return np.where(r, x, fallback)


def init_estimate(noise: NoiseSpec, z0: UplinkObservation) -> CommonEstimate:
    """Estimate at ``t = 0``: the delivered state, else the prior mean."""
    xhat = tuple(
        _merge(z0.received[i], z0.states[i], mu, mu.shape[0], i)
        for i, mu in enumerate(noise.mu0)
    )
    return CommonEstimate(xhat, 0)


def update_estimate(
    est: CommonEstimate,
    ubar: Sequence[np.ndarray],
    u0: np.ndarray,
    z_next: UplinkObservation,
    model: ModelSpec,
) -> CommonEstimate:
    """Advance the estimate one step given the common actions and ``Z_{t+1}``."""
    if est.t >= model.T:
        raise ValueError(f"cannot update estimate past the horizon (t={est.t}, T={model.T})")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape[-1:] != (model.dims.d_u[0],):
        raise DimensionError(f"u0 has shape {u0.shape}")
    out = []
    for i, pl in enumerate(model.plants):
        xh = np.asarray(est.xhat[i], dtype=float)
        ub = np.asarray(ubar[i], dtype=float)
        if xh.shape[-1:] != (model.dims.d_x[i],) or ub.shape[-1:] != (model.dims.d_u[i + 1],):
            raise DimensionError(f"subsystem {i}: estimate or ubar has the wrong shape")
        pred = rowmul(pl.A, xh) + rowmul(pl.B_local, ub) + rowmul(pl.B_remote, u0)
        out.append(_merge(z_next.received[i], z_next.states[i], pred, model.dims.d_x[i], i))
    return CommonEstimate(tuple(out), est.t + 1)
