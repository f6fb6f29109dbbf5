import numpy as np
import pytest

import transcription
from netlqr.baselines import (
    always_failed_gains,
    centralized_lqr,
    decompose,
    decoupled_check,
    deviation_gain_matrix,
    failure_cost_comparison,
    no_action_embedding,
)
from netlqr.errors import StructureError
from netlqr.model import cost_blocks, make_model, with_channel
from netlqr.simulator import simulate_batch
from netlqr.synthesis import synthesize

from helpers import small_random, with_random_noise


def decoupled_model(seed, n=2, dx=1, du=1, T=6):
    """Plants that share only disjoint slices of the remote action, with additive costs."""
    rng = np.random.default_rng(seed)
    du0 = n * du
    A = [rng.uniform(-1, 1, (dx, dx)) for _ in range(n)]
    Bl = [rng.uniform(-1, 1, (dx, du)) for _ in range(n)]
    Br = []
    for i in range(n):
        b = np.zeros((dx, du0))
        b[:, i * du : (i + 1) * du] = rng.uniform(-1, 1, (dx, du))
        Br.append(b)
    D = n * dx + du0 + n * du
    R = np.zeros((D, D))
    for i in range(n):
        idx = np.r_[i * dx : (i + 1) * dx, n * dx + i * du : n * dx + (i + 1) * du,
                    n * dx + du0 + i * du : n * dx + du0 + (i + 1) * du]
        G = rng.standard_normal((len(idx), len(idx)))
        R[np.ix_(idx, idx)] = G @ G.T + 0.5 * np.eye(len(idx))
    return make_model(A, Bl, Br, R, horizon=T, p=list(rng.uniform(0.1, 0.9, n)),
                      mu0=[rng.standard_normal(dx) for _ in range(n)])


# -- centralized LQ ------------------------------------------------------------


def test_single_step_centralized_gain():
    m = small_random(0, n=2, d=2, T=0)
    Rxx, Ruu, Rxu = cost_blocks(m.R(0), m.dims)
    assert np.allclose(centralized_lqr(m).K[0], -np.linalg.solve(Ruu, Rxu.T), atol=1e-13)


def test_scalar_centralized_matches_transcription(scalar):
    ref = transcription.schedule(p=0.0, T=2)
    c = centralized_lqr(scalar)
    for t in range(3):
        assert np.allclose(c.K[t].ravel(), ref["K"][t], rtol=0, atol=1e-12)
        assert c.P[t][0, 0] == pytest.approx(ref["P"][t], abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_centralized_matches_common_gain(seed):
    m = small_random(seed, n=1 + seed % 3, d=3, T=20, p=0.5)
    a, b = synthesize(m), centralized_lqr(m)
    for x, y in zip(a.K, b.K):
        assert np.max(np.abs(x - y)) <= 1e-10


# -- always-failed links -------------------------------------------------------


def test_always_failed_equals_synthesis_with_p_one():
    m = small_random(1, n=3, d=2, T=5, p=0.3)
    a = always_failed_gains(m)
    b = synthesize(with_channel(m, 1.0))
    for i in range(3):
        for x, y in zip(a.Ktilde[i], b.Ktilde[i]):
            assert np.array_equal(x, y)


def test_always_failed_deviation_structure():
    m = small_random(2, n=3, d=2, T=4)
    s = always_failed_gains(m)
    d = m.dims
    for t in range(m.T + 1):
        G = deviation_gain_matrix(s, t)
        assert not G[d.u_slice(0)].any()
        for i in range(3):
            for j in range(3):
                blk = G[d.local_u_slice(i), d.x_slice(j)]
                if i == j:
                    assert np.array_equal(blk, s.Ktilde[i][t])
                else:
                    assert not blk.any()


def test_always_failed_estimates_never_reset():
    m = with_channel(with_random_noise(small_random(3, n=2, d=2, T=5), 3), 1.0)
    b = simulate_batch(m, always_failed_gains(m), range(100), 0)
    assert not b.gamma.any()
    assert not np.any(b.xhat == b.x[:, : m.T + 1])


def test_failure_cost_comparison_is_reported(record_property):
    pairs = [failure_cost_comparison(with_random_noise(small_random(k, n=2, d=2, T=5), k)) for k in range(10)]
    ordered = sum(j1 >= j0 for j0, j1 in pairs)
    record_property("p1_ge_p0", f"{ordered}/10")
    assert all(np.isfinite(j0) and np.isfinite(j1) for j0, j1 in pairs)


# -- decoupled systems ---------------------------------------------------------


def test_decoupled_scalar_pair():
    rep = decoupled_check(decoupled_model(0), episodes=5, seed=1)
    assert rep.passed
    assert rep.max_action_diff <= rep.tolerance and rep.max_gain_diff <= 1e-9


def test_decoupled_vector_triple():
    assert decoupled_check(decoupled_model(1, n=3, dx=2, du=2), episodes=5, seed=2).passed


def test_single_subsystem_is_trivially_decoupled():
    m = small_random(4, n=1, d=2, T=4)
    assert decoupled_check(m, episodes=3).passed


def test_coupled_cost_is_rejected():
    m = decoupled_model(2)
    R = np.array(m.R(0))
    R[0, 1] = R[1, 0] = 0.1
    coupled = make_model(
        [pl.A for pl in m.plants], [pl.B_local for pl in m.plants], [pl.B_remote for pl in m.plants],
        R + np.eye(len(R)), horizon=m.T, p=m.channel.p,
    )
    with pytest.raises(StructureError):
        decompose(coupled)


def test_shared_remote_input_is_rejected():
    m = decoupled_model(3)
    Br = [np.ones_like(pl.B_remote) for pl in m.plants]
    shared = make_model(
        [pl.A for pl in m.plants], [pl.B_local for pl in m.plants], Br,
        np.stack([c.R for c in m.costs]), horizon=m.T, p=m.channel.p,
    )
    with pytest.raises(StructureError):
        decompose(shared)


def test_uneven_remote_split_needs_explicit_partition():
    m = small_random(5, n=2, d=2, T=3, du0=3)
    with pytest.raises(StructureError):
        decompose(m)


# -- idle controllers ----------------------------------------------------------


@pytest.mark.parametrize("idle", [{0}, {1}, {2}, {0, 2}])
def test_idle_controllers_never_act(idle):
    m = no_action_embedding(with_random_noise(small_random(6, n=2, d=2, T=6), 6), idle)
    b = simulate_batch(m, synthesize(m), range(200), 4)
    if 0 in idle:
        assert not b.u0.any()
    for i in (1, 2):
        # b.u holds the local actions only, two entries per subsystem
        if i in idle:
            assert not b.u[..., 2 * (i - 1) : 2 * i].any()


def test_empty_idle_set_leaves_model_unchanged():
    m = small_random(7)
    assert no_action_embedding(m, []) is m
    with pytest.raises(ValueError):
        no_action_embedding(m, [3])
