"""Check suite run by ``netlqr verify``: each check returns a named pass/fail record."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import always_failed_gains, centralized_lqr, deviation_gain_matrix
from .controller import LinearPolicy
from .model import ModelSpec, with_channel
from .oracle import exact_cost, stationarity_check
from .simulator import monte_carlo
from .synthesis import GainSchedule, initial_value, synthesize


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


def _rel(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


def check_psd(schedule: GainSchedule) -> CheckResult:
    v = schedule.invariant_violations()
    return CheckResult("psd_invariants", not v, {"violations": v[:10]})


def check_value_identity(model, schedule, policy, rtol=1e-8) -> CheckResult:
    V0 = initial_value(model, schedule)
    J = exact_cost(model, policy)
    return CheckResult("value_oracle_identity", _rel(V0, J) <= rtol, {"V0": V0, "exact_cost": J, "rel_diff": _rel(V0, J)})


def check_enumeration(model, policy, tol=1e-10) -> CheckResult:
    a = exact_cost(model, policy)
    b = exact_cost(model, policy, mixture="enumerate")
    return CheckResult("mixture_enumeration", _rel(a, b) <= tol, {"sequential": a, "enumerated": b})


def check_stationarity(model, policy, trials, seed) -> CheckResult:
    rep = stationarity_check(model, policy, trials=trials, seed=seed)
    return CheckResult(
        "stationarity",
        rep.passed,
        {"J_opt": rep.J_opt, "min_delta": rep.min_delta, "max_derivative": rep.max_derivative},
    )


def check_centralized(model, schedule, tol=1e-10) -> CheckResult:
    lqr = centralized_lqr(with_channel(model, 0.0))
    diff = max(float(np.max(np.abs(a - b))) for a, b in zip(schedule.K, lqr.K))
    return CheckResult("centralized_reduction", diff <= tol, {"max_abs_diff": diff})


def check_always_failed(model, tol=0.0) -> CheckResult:
    sched = always_failed_gains(model)
    d = model.dims
    ok = True
    for t in range(d.horizon + 1):
        G = deviation_gain_matrix(sched, t)
        if np.any(G[d.u_slice(0)] != 0):
            ok = False
        for i in range(d.n_subsystems):
            for j in range(d.n_subsystems):
                blk = G[d.local_u_slice(i), d.x_slice(j)]
                if i != j and np.any(blk != 0):
                    ok = False
    return CheckResult("always_failed_structure", ok)


def check_monte_carlo(model, policy, episodes, seed, k=4.0) -> CheckResult:
    J = exact_cost(model, policy)
    rep = monte_carlo(model, policy, episodes, seed)
    return CheckResult(
        "monte_carlo_consistency",
        rep.within(J, k),
        {"exact_cost": J, "mc_mean": rep.mean, "mc_stderr": rep.stderr, "episodes": episodes},
    )


def run_checks(
    model: ModelSpec,
    *,
    episodes: int = 2000,
    trials: int = 20,
    seed: int = 0,
    inject_gain_error: float = 0.0,
) -> list[CheckResult]:
    """Synthesize ``model`` and run the full check list against the result.

    ``inject_gain_error`` adds a constant to every entry of ``K[0]`` before
    the checks (a negative control: the optimality checks must then fail).
    """
    schedule = synthesize(model)
    if inject_gain_error:
        K = list(schedule.K)
        K[0] = K[0] + inject_gain_error
        schedule = GainSchedule(
            schedule.dims, schedule.P, tuple(K), schedule.Ptilde, schedule.Ktilde,
            schedule.e, schedule.p, schedule.model_hash,
        )
    policy = LinearPolicy.from_schedule(schedule)
    out = [
        check_psd(schedule),
        check_value_identity(model, schedule, policy),
    ]
    if model.N <= 3:
        out.append(check_enumeration(model, policy))
    out += [
        check_stationarity(model, policy, trials, seed),
        check_centralized(model, schedule),
        check_always_failed(model),
        check_monte_carlo(model, policy, episodes, seed),
    ]
    return out


def results_to_json(results: list[CheckResult]) -> dict:
    return {"passed": all(r.passed for r in results), "checks": [asdict(r) for r in results]}
