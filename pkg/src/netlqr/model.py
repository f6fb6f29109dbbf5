"""Problem instances: N linear plants, one remote controller, lossy uplinks.

A :class:`ModelSpec` bundles the plant matrices, the per-step quadratic cost
matrices, the initial-state / noise second moments and the uplink failure
probabilities.  Construction never raises on inconsistent shapes; call
:func:`validate` to get the list of problems, or :func:`require_valid` to
turn them into a :class:`~netlqr.errors.ValidationError`.

Index conventions used throughout the package:

* plants are indexed ``i = 0 .. N-1`` in Python (``n = i + 1`` in the usual
  1-based notation);
* ``dims.d_u[0]`` is the remote controller's action size and
  ``dims.d_u[i + 1]`` the local action size of subsystem ``i``;
* the stacked action vector is ``(u0, u_1, ..., u_N)`` and the stacked
  cost vector is ``(x_1, ..., x_N, u0, u_1, ..., u_N)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import FormatError, GenerationError, ValidationError

MODEL_FORMAT = "netlqr-model/1"

TOL_PD = 1e-9
TOL_PSD = -1e-9
MAX_PD_TRIES = 10_000

NOISE_FAMILIES = ("gaussian", "uniform", "custom")


def _frozen(a, ndim=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if ndim == 2 and arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif ndim == 1 and arr.ndim == 0:
        arr = arr.reshape(1)
    arr.setflags(write=False)
    return arr


def _sym(a: np.ndarray) -> np.ndarray:
    if a.ndim == 2 and a.shape[0] == a.shape[1]:
        out = (a + a.T) / 2.0
        out.setflags(write=False)
        return out
    return a


@dataclass(frozen=True)
class Dims:
    """Subsystem count, per-block dimensions and horizon ``T``."""

    n_subsystems: int
    d_x: tuple[int, ...]
    d_u: tuple[int, ...]
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "d_x", tuple(int(d) for d in self.d_x))
        object.__setattr__(self, "d_u", tuple(int(d) for d in self.d_u))

    @property
    def dx_total(self) -> int:
        return sum(self.d_x)

    @property
    def du_total(self) -> int:
        return sum(self.d_u)

    @property
    def x_offsets(self) -> tuple[int, ...]:
        return tuple(np.concatenate([[0], np.cumsum(self.d_x)]).astype(int))

    @property
    def u_offsets(self) -> tuple[int, ...]:
        return tuple(np.concatenate([[0], np.cumsum(self.d_u)]).astype(int))

    def x_slice(self, i: int) -> slice:
        """Slice of subsystem ``i``'s state inside the stacked state."""
        off = self.x_offsets
        return slice(off[i], off[i + 1])

    def u_slice(self, k: int) -> slice:
        """Slice of action block ``k`` (0 = remote, ``i + 1`` = local ``i``)
        inside the stacked action vector."""
        off = self.u_offsets
        return slice(off[k], off[k + 1])

    def local_u_slice(self, i: int) -> slice:
        return self.u_slice(i + 1)

    def cost_u_slice(self, k: int) -> slice:
        """Slice of action block ``k`` inside the stacked cost vector."""
        s = self.u_slice(k)
        return slice(self.dx_total + s.start, self.dx_total + s.stop)

    @property
    def cost_dim(self) -> int:
        return self.dx_total + self.du_total

    def problems(self) -> list[str]:
        out = []
        if self.n_subsystems < 1:
            out.append("n_subsystems must be >= 1")
        if len(self.d_x) != self.n_subsystems:
            out.append(f"d_x has {len(self.d_x)} entries, expected {self.n_subsystems}")
        if len(self.d_u) != self.n_subsystems + 1:
            out.append(f"d_u has {len(self.d_u)} entries, expected {self.n_subsystems + 1}")
        if any(d < 1 for d in self.d_x + self.d_u):
            out.append("all dimensions must be >= 1")
        if self.horizon < 0:
            out.append("horizon must be >= 0")
        return out


@dataclass(frozen=True, eq=False)
class PlantBlock:
    """``x' = A x + B_local u_i + B_remote u0 + w`` for one plant."""

    A: np.ndarray
    B_local: np.ndarray
    B_remote: np.ndarray

    def __post_init__(self):
        for name in ("A", "B_local", "B_remote"):
            object.__setattr__(self, name, _frozen(getattr(self, name), ndim=2))


@dataclass(frozen=True, eq=False)
class CostStage:
    """Stage cost matrix ``R_t`` over ``(x, u0, u_1..u_N)``; symmetrized on input."""

    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", _sym(_frozen(self.R, ndim=2)))


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Initial-state and process-noise second moments per subsystem.

    ``sigma_w[i][t]`` is the covariance of ``w_i`` at step ``t``; the noise is
    zero mean.  ``family`` selects the sampler used by the simulator.
    """

    mu0: tuple[np.ndarray, ...]
    sigma0: tuple[np.ndarray, ...]
    sigma_w: tuple[tuple[np.ndarray, ...], ...]
    family: str = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "mu0", tuple(_frozen(m, ndim=1) for m in self.mu0))
        object.__setattr__(self, "sigma0", tuple(_sym(_frozen(s, ndim=2)) for s in self.sigma0))
        object.__setattr__(
            self,
            "sigma_w",
            tuple(tuple(_sym(_frozen(s, ndim=2)) for s in per_t) for per_t in self.sigma_w),
        )

    @property
    def mu0_stacked(self) -> np.ndarray:
        return np.concatenate(self.mu0)

    @property
    def sigma0_stacked(self) -> np.ndarray:
        return scipy.linalg.block_diag(*self.sigma0)

    def sigma_w_stacked(self, t: int) -> np.ndarray:
        return scipy.linalg.block_diag(*(s[t] for s in self.sigma_w))


@dataclass(frozen=True, eq=False)
class ChannelSpec:
    """Uplink failure probabilities ``p[i]`` (packet dropped w.p. ``p[i]``)."""

    p: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    dims: Dims
    plants: tuple[PlantBlock, ...]
    costs: tuple[CostStage, ...]
    noise: NoiseSpec
    channel: ChannelSpec

    def __post_init__(self):
        object.__setattr__(self, "plants", tuple(self.plants))
        object.__setattr__(self, "costs", tuple(self.costs))

    @property
    def N(self) -> int:
        return self.dims.n_subsystems

    @property
    def T(self) -> int:
        return self.dims.horizon

    def R(self, t: int) -> np.ndarray:
        return self.costs[t].R

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return model_to_dict(self) == model_to_dict(other)

    __hash__ = None


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


def make_model(
    A: Sequence,
    B_local: Sequence,
    B_remote: Sequence,
    R,
    *,
    horizon: int,
    p: Sequence[float],
    mu0: Sequence | None = None,
    sigma0: Sequence | None = None,
    sigma_w: Sequence | None = None,
    family: str = "gaussian",
) -> ModelSpec:
    """Build a model from per-subsystem lists, inferring the dimensions.

    ``R`` is either one matrix shared by all steps or a list of ``T + 1``
    matrices.  ``sigma_w`` entries may likewise be one matrix per subsystem
    or a per-step list.  Missing noise terms default to zero mean and
    identity covariances.
    """
    A = [np.atleast_2d(np.asarray(a, dtype=float)) for a in A]
    B_local = [np.atleast_2d(np.asarray(b, dtype=float)) for b in B_local]
    B_remote = [np.atleast_2d(np.asarray(b, dtype=float)) for b in B_remote]
    n = len(A)
    d_x = tuple(a.shape[0] for a in A)
    d_u = (B_remote[0].shape[1],) + tuple(b.shape[1] for b in B_local)
    dims = Dims(n, d_x, d_u, horizon)

    R_arr = np.asarray(R, dtype=float)
    if R_arr.ndim == 3:
        costs = tuple(CostStage(r) for r in R_arr)
    else:
        shared = CostStage(np.atleast_2d(R_arr))
        costs = (shared,) * (horizon + 1)

    if mu0 is None:
        mu0 = [np.zeros(d) for d in d_x]
    if sigma0 is None:
        sigma0 = [np.eye(d) for d in d_x]
    if sigma_w is None:
        sigma_w = [np.eye(d) for d in d_x]
    sw = []
    for s in sigma_w:
        s = np.asarray(s, dtype=float)
        if s.ndim == 3:
            sw.append(tuple(s))
        else:
            shared_s = np.atleast_2d(s)
            sw.append((shared_s,) * (horizon + 1))
    noise = NoiseSpec(tuple(mu0), tuple(sigma0), tuple(sw), family)
    plants = tuple(PlantBlock(a, bl, br) for a, bl, br in zip(A, B_local, B_remote))
    return ModelSpec(dims, plants, costs, noise, ChannelSpec(tuple(p)))


def with_channel(model: ModelSpec, p: Sequence[float] | float) -> ModelSpec:
    """Copy of ``model`` with new failure probabilities (scalar broadcasts)."""
    if np.isscalar(p):
        p = (float(p),) * model.N
    return replace(model, channel=ChannelSpec(tuple(p)))


def with_noise(model: ModelSpec, noise: NoiseSpec) -> ModelSpec:
    return replace(model, noise=noise)


def scale_noise(model: ModelSpec, alpha: float) -> ModelSpec:
    """Scale ``mu0`` by ``alpha`` and every covariance by ``alpha**2``."""
    nz = model.noise
    return with_noise(
        model,
        NoiseSpec(
            tuple(alpha * m for m in nz.mu0),
            tuple(alpha**2 * s for s in nz.sigma0),
            tuple(tuple(alpha**2 * s for s in per_t) for per_t in nz.sigma_w),
            nz.family,
        ),
    )


def min_eig(M: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of ``M``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh((M + M.T) / 2.0)[0])


def is_psd(M: np.ndarray, tol: float = TOL_PSD) -> bool:
    return min_eig(M) >= tol


def is_pd(M: np.ndarray, tol: float = TOL_PD) -> bool:
    return min_eig(M) >= tol


def validate(model: ModelSpec) -> list[Violation]:
    """Return every admissibility violation of ``model`` (empty list = valid)."""
    out: list[Violation] = []
    dims = model.dims
    dim_problems = dims.problems()
    if dim_problems:
        return [Violation("dims_invalid", m) for m in dim_problems]
    N, T = dims.n_subsystems, dims.horizon

    def add(code, msg):
        out.append(Violation(code, msg))

    def finite(name, a):
        if not np.all(np.isfinite(a)):
            add("nonfinite", f"{name} has non-finite entries")

    if len(model.plants) != N:
        add("dim_mismatch", f"{len(model.plants)} plant blocks for {N} subsystems")
    for i, pl in enumerate(model.plants[:N]):
        dx, du = dims.d_x[i], dims.d_u[i + 1]
        expect = {"A": (dx, dx), "B_local": (dx, du), "B_remote": (dx, dims.d_u[0])}
        for name, shape in expect.items():
            a = getattr(pl, name)
            if a.shape != shape:
                add("dim_mismatch", f"plant {i}: {name} has shape {a.shape}, expected {shape}")
            finite(f"plant {i} {name}", a)

    if len(model.costs) != T + 1:
        add("cost_count_mismatch", f"{len(model.costs)} cost stages for horizon {T}")
    D, Dx = dims.cost_dim, dims.dx_total
    checked: set[int] = set()
    for t, cs in enumerate(model.costs):
        if id(cs) in checked:
            continue
        checked.add(id(cs))
        R = cs.R
        if R.shape != (D, D):
            add("dim_mismatch", f"R_{t} has shape {R.shape}, expected {(D, D)}")
            continue
        if not np.all(np.isfinite(R)):
            add("nonfinite", f"R_{t} has non-finite entries")
            continue
        if not is_psd(R):
            add("R_not_PSD", f"R_{t} min eigenvalue {min_eig(R):.3e} < {TOL_PSD}")
        if not is_pd(R[Dx:, Dx:]):
            add("RUU_not_PD", f"R_{t}^UU min eigenvalue {min_eig(R[Dx:, Dx:]):.3e} < {TOL_PD}")

    nz = model.noise
    if nz.family not in NOISE_FAMILIES:
        add("unknown_family", f"noise family {nz.family!r} not in {NOISE_FAMILIES}")
    if not (len(nz.mu0) == len(nz.sigma0) == len(nz.sigma_w) == N):
        add("dim_mismatch", "noise spec must have one entry per subsystem")
    else:
        for i in range(N):
            dx = dims.d_x[i]
            if nz.mu0[i].shape != (dx,):
                add("dim_mismatch", f"mu0[{i}] has shape {nz.mu0[i].shape}, expected {(dx,)}")
            finite(f"mu0[{i}]", nz.mu0[i])
            covs = [("sigma0", nz.sigma0[i])]
            if len(nz.sigma_w[i]) != T + 1:
                add("dim_mismatch", f"sigma_w[{i}] has {len(nz.sigma_w[i])} steps, expected {T + 1}")
            covs += [(f"sigma_w[{t}]", s) for t, s in enumerate(nz.sigma_w[i])]
            seen: set[int] = set()
            for name, s in covs:
                if id(s) in seen:
                    continue
                seen.add(id(s))
                if s.shape != (dx, dx):
                    add("dim_mismatch", f"subsystem {i} {name} has shape {s.shape}, expected {(dx, dx)}")
                elif not np.all(np.isfinite(s)):
                    add("nonfinite", f"subsystem {i} {name} has non-finite entries")
                elif not is_psd(s):
                    add("cov_not_PSD", f"subsystem {i} {name} is not PSD")

    p = model.channel.p
    if len(p) != N:
        add("dim_mismatch", f"channel has {len(p)} probabilities for {N} subsystems")
    for i, v in enumerate(p):
        if not (0.0 <= v <= 1.0):
            add("p_out_of_range", f"p[{i}] = {v} outside [0, 1]")
    return out


def require_valid(model: ModelSpec) -> None:
    violations = validate(model)
    if violations:
        raise ValidationError(violations)


def rowmul(M: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``x @ M.T`` over leading batch axes, with each row's result independent
    of the batch size (BLAS switches kernels between one row and many, which
    changes rounding)."""
    return (np.asarray(x)[..., None, :] * M).sum(axis=-1)


def assemble_global(model: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Stacked dynamics ``X' = A X + B U + W`` with ``U = (u0, u_1, ..., u_N)``.

    ``A`` is block diagonal; the first block column of ``B`` stacks the
    remote input matrices and the remaining columns are block diagonal in
    the local input matrices.
    """
    require_valid(model)
    dims = model.dims
    A = scipy.linalg.block_diag(*(pl.A for pl in model.plants))
    B = np.zeros((dims.dx_total, dims.du_total))
    for i, pl in enumerate(model.plants):
        rows = dims.x_slice(i)
        B[rows, dims.u_slice(0)] = pl.B_remote
        B[rows, dims.local_u_slice(i)] = pl.B_local
    return A, B


def cost_blocks(R: np.ndarray, dims: Dims) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split ``R`` into ``(R_XX, R_UU, R_XU)``."""
    Dx = dims.dx_total
    return R[:Dx, :Dx], R[Dx:, Dx:], R[:Dx, Dx:]


def local_cost_blocks(R: np.ndarray, dims: Dims, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(R^{XiXi}, R^{UiUi}, R^{XiUi})`` for subsystem ``i``'s own state and local action."""
    xs = dims.x_slice(i)
    us = dims.cost_u_slice(i + 1)
    return R[xs, xs], R[us, us], R[xs, us]


# -- random generation ---------------------------------------------------------


def _random_pd(rng, d, lo, hi, method, max_tries, label):
    for _ in range(max_tries):
        if method == "rejection":
            vals = rng.uniform(lo, hi, size=d * (d + 1) // 2)
            M = np.zeros((d, d))
            M[np.triu_indices(d)] = vals
            M = M + np.triu(M, 1).T
        elif method == "gram":
            G = rng.uniform(lo, hi, size=(d, d))
            M = G @ G.T / d
        else:
            raise ValueError(f"unknown cost_method {method!r}")
        if is_pd(M):
            return M
    raise GenerationError(
        f"no PD {d}x{d} matrix for {label} after {max_tries} {method} attempts"
    )


def random_model(
    dims: Dims,
    entry_range: tuple[float, float] = (0.0, 20.0),
    seed: int = 0,
    *,
    p: float | Sequence[float] = 0.5,
    cost_method: str = "rejection",
    per_step_costs: bool = True,
    max_tries: int = MAX_PD_TRIES,
) -> ModelSpec:
    """Random instance in the style of the randomized runtime experiments.

    Plant entries are i.i.d. uniform on ``entry_range``.  Each ``R_t`` is
    symmetric positive definite:

    * ``cost_method="rejection"`` draws the ``d(d+1)/2`` free entries
      uniformly, mirrors the upper triangle and retries until PD (at most
      ``max_tries`` times).  Acceptance collapses beyond ``d ~ 5``.
    * ``cost_method="gram"`` uses ``G G^T / d`` with ``G`` uniform, which is
      PD almost surely at any size.

    Initial states and noises are zero mean with identity covariances.
    """
    lo, hi = map(float, entry_range)
    if not lo < hi:
        raise ValueError(f"entry_range must satisfy lo < hi, got {entry_range}")
    problems = dims.problems()
    if problems:
        raise ValueError("; ".join(problems))
    rng = np.random.default_rng(seed)
    N, T = dims.n_subsystems, dims.horizon
    plants = []
    for i in range(N):
        dx = dims.d_x[i]
        A = rng.uniform(lo, hi, size=(dx, dx))
        Bl = rng.uniform(lo, hi, size=(dx, dims.d_u[i + 1]))
        Br = rng.uniform(lo, hi, size=(dx, dims.d_u[0]))
        plants.append(PlantBlock(A, Bl, Br))
    D = dims.cost_dim
    if per_step_costs:
        costs = tuple(
            CostStage(_random_pd(rng, D, lo, hi, cost_method, max_tries, f"R_{t}"))
            for t in range(T + 1)
        )
    else:
        costs = (CostStage(_random_pd(rng, D, lo, hi, cost_method, max_tries, "R")),) * (T + 1)
    p = (float(p),) * N if np.isscalar(p) else tuple(p)
    noise = NoiseSpec(
        tuple(np.zeros(d) for d in dims.d_x),
        tuple(np.eye(d) for d in dims.d_x),
        tuple((np.eye(d),) * (T + 1) for d in dims.d_x),
        "gaussian",
    )
    return ModelSpec(dims, tuple(plants), costs, noise, ChannelSpec(p))


# -- JSON I/O ------------------------------------------------------------------


def _shared(items) -> bool:
    first = items[0]
    return all(x is first or np.array_equal(x, first) for x in items[1:])


def model_to_dict(model: ModelSpec) -> dict:
    dims = model.dims
    Rs = [c.R for c in model.costs]
    if Rs and _shared(Rs):
        costs = {"shared_R": Rs[0].tolist()}
    else:
        costs = {"per_step_R": [r.tolist() for r in Rs]}
    sigma_w = []
    for per_t in model.noise.sigma_w:
        if per_t and _shared(list(per_t)):
            sigma_w.append(per_t[0].tolist())
        else:
            sigma_w.append([s.tolist() for s in per_t])
    return {
        "format": MODEL_FORMAT,
        "dims": {
            "n_subsystems": dims.n_subsystems,
            "d_x": list(dims.d_x),
            "d_u": list(dims.d_u),
        },
        "horizon": dims.horizon,
        "plants": [
            {"A": pl.A.tolist(), "B_local": pl.B_local.tolist(), "B_remote": pl.B_remote.tolist()}
            for pl in model.plants
        ],
        "costs": costs,
        "noise": {
            "mu0": [m.tolist() for m in model.noise.mu0],
            "sigma0": [s.tolist() for s in model.noise.sigma0],
            "sigma_w": sigma_w,
            "family": model.noise.family,
        },
        "channel": {"p": list(model.channel.p)},
    }


def model_from_dict(doc: dict) -> ModelSpec:
    if doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"expected format {MODEL_FORMAT!r}, got {doc.get('format')!r}")
    try:
        T = int(doc["horizon"])
        d = doc["dims"]
        dims = Dims(int(d["n_subsystems"]), tuple(d["d_x"]), tuple(d["d_u"]), T)
        plants = tuple(
            PlantBlock(pl["A"], pl["B_local"], pl["B_remote"]) for pl in doc["plants"]
        )
        costs_doc = doc["costs"]
        if "shared_R" in costs_doc:
            costs = (CostStage(costs_doc["shared_R"]),) * (T + 1)
        else:
            costs = tuple(CostStage(r) for r in costs_doc["per_step_R"])
        nz = doc["noise"]
        sigma_w = []
        for s in nz["sigma_w"]:
            arr = np.asarray(s, dtype=float)
            if arr.ndim == 3:
                sigma_w.append(tuple(arr))
            else:
                sigma_w.append((_frozen(arr, ndim=2),) * (T + 1))
        noise = NoiseSpec(tuple(nz["mu0"]), tuple(nz["sigma0"]), tuple(sigma_w), nz.get("family", "gaussian"))
        channel = ChannelSpec(tuple(doc["channel"]["p"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model document: {exc!r}") from exc
    return ModelSpec(dims, plants, costs, noise, channel)


def dumps_model(model: ModelSpec) -> str:
    return json.dumps(model_to_dict(model), indent=1)


def loads_model(text: str) -> ModelSpec:
    return model_from_dict(json.loads(text))


def save_model(model: ModelSpec, path) -> None:
    Path(path).write_text(dumps_model(model))


def load_model(path) -> ModelSpec:
    return loads_model(Path(path).read_text())


def model_hash(model: ModelSpec) -> str:
    """SHA-256 over the canonical JSON form of the model."""
    canon = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def scalar_instance(p: float = 0.5, horizon: int = 2) -> ModelSpec:
    """One scalar plant ``x' = x + u0 + u1 + w`` with ``R_t = I_3``.

    Initial state mean 1, all variances 1.  Small enough to check every
    recursion by hand.
    """
    return make_model(
        [[[1.0]]],
        [[[1.0]]],
        [[[1.0]]],
        np.eye(3),
        horizon=horizon,
        p=[p],
        mu0=[[1.0]],
        sigma0=[[[1.0]]],
        sigma_w=[[[1.0]]],
    )
