"""Acceptance criteria, one test each.

Run with ``pytest tests/test_acceptance.py``; the terminal summary prints one
PASS/FAIL line per criterion with its tolerance and the measured values.
"""

import sys
import time

import numpy as np
import pytest

from netlqr.baselines import (
    always_failed_gains,
    centralized_lqr,
    decoupled_check,
    deviation_gain_matrix,
    no_action_embedding,
)
from netlqr.controller import LinearPolicy
from netlqr.model import Dims, NoiseSpec, random_model, scalar_instance, with_channel, with_noise
from netlqr.oracle import exact_cost, stationarity_check
from netlqr.simulator import monte_carlo, simulate_batch
from netlqr.synthesis import initial_value, synthesize

from helpers import small_random, with_random_noise
from test_baselines import decoupled_model

criterion = pytest.mark.criterion


def wide_range_model(seed, n, T, p=0.5):
    """d_x = d_u = 3, entries uniform on [0, 20]."""
    return random_model(Dims(n, (3,) * n, (3,) * (n + 1), T), (0.0, 20.0), seed, p=p, cost_method="gram")


@criterion(1, "centralized reduction: K equals independent LQ on 100 models", "1e-10 abs, < 60 s")
def test_centralized_reduction(record_property):
    start = time.perf_counter()
    worst, bad = 0.0, []
    for seed in range(100):
        m = wide_range_model(seed, (1, 2, 5)[seed % 3], 50)
        a, b = synthesize(m), centralized_lqr(m)
        diff = max(float(np.max(np.abs(x - y))) for x, y in zip(a.K, b.K))
        worst = max(worst, diff)
        if diff > 1e-10:
            bad.append((seed, f"{diff:.2e}"))
    elapsed = time.perf_counter() - start
    record_property("max_abs_diff", f"{worst:.2e}")
    record_property("over_tol", bad)
    record_property("seconds", f"{elapsed:.1f}")
    assert not bad
    assert elapsed < 60


@criterion(2, "value function equals exact expected cost on 20 models", "1e-8 rel")
def test_value_oracle_identity(record_property):
    worst = 0.0
    for k in range(20):
        n, d, T = 1 + k % 3, 1 + (k // 3) % 3, 5 + 45 * (k % 2)
        base = random_model(Dims(n, (d,) * n, (d,) * (n + 1), T), (0.0, 20.0), k, cost_method="gram")
        m = with_channel(with_random_noise(base, k), list(np.random.default_rng(k).uniform(0, 1, n)))
        s = synthesize(m)
        J, V = exact_cost(m, s), initial_value(m, s)
        worst = max(worst, abs(J - V) / abs(V))
    record_property("max_rel_diff", f"{worst:.2e}")
    assert worst <= 1e-8


@criterion(3, "Monte Carlo mean within 4 stderr of exact cost (M = 1e4)", "4 stderr, < 60 s")
def test_monte_carlo_consistency(record_property):
    start = time.perf_counter()
    models = [scalar_instance()] + [with_random_noise(wide_range_model(s, 2, 50), s) for s in range(5)]
    z = []
    for k, m in enumerate(models):
        s = synthesize(m)
        rep = monte_carlo(m, s, 10**4, 500 + k)
        z.append((rep.mean - exact_cost(m, s)) / rep.stderr)
    elapsed = time.perf_counter() - start
    record_property("z_scores", [f"{v:+.2f}" for v in z])
    record_property("seconds", f"{elapsed:.1f}")
    assert all(abs(v) <= 4 for v in z)
    assert elapsed < 60


@criterion(4, "200 gain perturbations on 5 models never reduce cost; gradient vanishes",
           "delta >= -1e-10, |FD| <= 1e-6 max(1,|J|)")
def test_stationarity(record_property):
    min_delta, max_ratio, probes = np.inf, 0.0, 0
    for seed in range(5):
        m = with_random_noise(wide_range_model(seed, 1 + seed % 3, 20), seed)
        rep = stationarity_check(m, synthesize(m), epsilon=1e-4, trials=40, seed=seed)
        probes += len(rep.probes)
        min_delta = min(min_delta, rep.min_delta)
        max_ratio = max(max_ratio, rep.max_derivative / max(1.0, abs(rep.J_opt)))
        assert rep.passed, seed
    record_property("probes", probes)
    record_property("min_delta", f"{min_delta:.2e}")
    record_property("max_rel_derivative", f"{max_ratio:.2e}")
    assert probes == 200


@criterion(5, "every P and Ptilde PSD across 100 syntheses", "min eig >= -1e-9")
def test_psd_invariants(record_property):
    worst = np.inf
    for seed in range(100):
        s = synthesize(wide_range_model(seed, (1, 2, 5)[seed % 3], 50))
        assert s.invariant_violations() == [], seed
        mats = list(s.P) + [P for seq in s.Ptilde for P in seq]
        worst = min(worst, min(float(np.linalg.eigvalsh(P).min()) for P in mats))
    record_property("min_eigenvalue", f"{worst:.3e}")


@criterion(6, "gains bit-identical when only noise covariances change", "bit-identical")
def test_noise_independence(record_property):
    for seed in range(5):
        a = wide_range_model(seed, 1 + seed % 3, 30)
        b = with_random_noise(a, seed)
        sa, sb = synthesize(a), synthesize(b)
        assert all(np.array_equal(x, y) for x, y in zip(sa.K, sb.K))
        for i in range(a.N):
            assert all(np.array_equal(x, y) for x, y in zip(sa.Ktilde[i], sb.Ktilde[i]))
        assert not np.array_equal(sa.e, sb.e)


@criterion(7, "gaussian and covariance-matched uniform noise both match the same expected cost",
           "4 stderr each")
def test_distribution_free(record_property):
    z = []
    for k, base in enumerate([scalar_instance(), with_random_noise(small_random(3, n=2, d=2, T=10), 3)]):
        s = synthesize(base)
        V = initial_value(base, s)
        for fam in ("gaussian", "uniform"):
            nz = base.noise
            m = with_noise(base, NoiseSpec(nz.mu0, nz.sigma0, nz.sigma_w, fam))
            rep = monte_carlo(m, s, 10**4, 40 + k)
            z.append((rep.mean - V) / rep.stderr)
    record_property("z_scores", [f"{v:+.2f}" for v in z])
    assert all(abs(v) <= 4 for v in z)


@criterion(8, "sequential link mixture equals full enumeration for N <= 3", "1e-10")
def test_mixture_factorization(record_property):
    worst = 0.0
    for n in (1, 2, 3):
        for seed in range(4):
            m = with_random_noise(small_random(seed, n=n, d=2, T=10), seed)
            m = with_channel(m, list(np.random.default_rng(seed).uniform(0, 1, n)))
            pol = synthesize(m) if seed % 2 == 0 else LinearPolicy.from_schedule(synthesize(m)).scaled(0.7)
            worst = max(worst, abs(exact_cost(m, pol) - exact_cost(m, pol, mixture="enumerate")))
    record_property("max_abs_diff", f"{worst:.2e}")
    assert worst <= 1e-10


@criterion(9, "special cases: idle controllers, decoupled plants, always-failed structure",
           "exact zeros; 1e-9; exact zeros")
def test_special_cases(record_property):
    base = with_random_noise(small_random(6, n=3, d=2, T=8), 6)
    for idle in ({0}, {2}, {1, 3}):
        m = no_action_embedding(base, idle)
        b = simulate_batch(m, synthesize(m), range(200), 1)
        if 0 in idle:
            assert not b.u0.any()
        for i in idle - {0}:
            assert not b.u[..., 2 * (i - 1) : 2 * i].any()

    diffs = []
    for seed, (n, d) in enumerate([(2, 1), (3, 2), (2, 3)]):
        rep = decoupled_check(decoupled_model(seed, n=n, dx=d, du=d), episodes=5, seed=seed)
        diffs.append(rep.max_action_diff)
        assert rep.passed
    record_property("decoupled_max_action_diff", f"{max(diffs):.2e}")

    s = always_failed_gains(base)
    d = base.dims
    for t in range(base.T + 1):
        G = deviation_gain_matrix(s, t)
        assert not G[d.u_slice(0)].any()
        for i in range(d.n_subsystems):
            for j in range(d.n_subsystems):
                blk = G[d.local_u_slice(i), d.x_slice(j)]
                assert np.array_equal(blk, s.Ktilde[i][t]) if i == j else not blk.any()


@criterion(10, "estimate equals state on delivery; zero-mean error on drops (1e5 episodes)",
           "bit-exact; 4 stderr")
def test_estimator_exactness(record_property):
    m = with_random_noise(small_random(2, n=2, d=2, T=6), 2)
    s = synthesize(m)
    d = m.dims
    M = 10**5

    free = simulate_batch(m, s, range(2000), 3)
    for i in range(2):
        hit = free.gamma[:, :, i] == 1
        assert np.array_equal(free.x[:, : m.T + 1, d.x_slice(i)][hit], free.xhat[:, :, d.x_slice(i)][hit])

    gamma = np.array([[0, 0], [0, 1], [1, 0], [0, 0], [0, 0], [1, 1], [0, 0]], dtype=np.int8)
    b = simulate_batch(m, s, range(M), 4, gamma=gamma)
    worst = 0.0
    for i in range(2):
        sl = d.x_slice(i)
        hit = gamma[:, i] == 1
        assert np.array_equal(b.x[:, : m.T + 1][:, hit][..., sl], b.xhat[:, hit][..., sl])
        err = (b.x[:, : m.T + 1] - b.xhat)[:, ~hit][..., sl]
        z = np.abs(err.mean(axis=0)) / (err.std(axis=0, ddof=1) / np.sqrt(M))
        worst = max(worst, float(z.max()))
    record_property("max_abs_z", f"{worst:.2f}")
    assert worst <= 4


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
