import csv

import numpy as np
import pytest

from netlqr.baselines import centralized_lqr
from netlqr.controller import LinearPolicy
from netlqr.errors import DimensionError
from netlqr.model import ChannelSpec, make_model
from netlqr.oracle import exact_cost
from netlqr.simulator import (
    episode_rng,
    gaussian_sampler,
    monte_carlo,
    psd_sqrt,
    sample_channel,
    simulate_batch,
    simulate_centralized_episode,
    simulate_episode,
    step_plant,
    uniform_sampler,
    write_trace_csv,
)
from netlqr.synthesis import synthesize

from helpers import small_random, with_random_noise


# -- channel and plant ---------------------------------------------------------


def test_degenerate_links():
    rng = np.random.default_rng(0)
    g = sample_channel(ChannelSpec((0.0, 1.0, 0.0)), rng, 1000)
    assert g.shape == (1000, 3)
    assert g[:, 0].all() and not g[:, 1].any() and g[:, 2].all()


def test_fair_link_frequency():
    g = sample_channel(ChannelSpec((0.5,)), np.random.default_rng(1), 10**6)
    assert abs(g.mean() - 0.5) <= 0.002


def test_step_plant_substitution():
    m = make_model([[[1.0]]], [[[1.0]]], [[[1.0]]], np.eye(3), horizon=1, p=[0.5])
    out = step_plant(m, 0, [1.0], [2.0], [3.0], [4.0])
    assert out.tolist() == [10.0]
    assert not step_plant(m, 0, [0.0], [0.0], [0.0], [0.0]).any()
    with pytest.raises(DimensionError):
        step_plant(m, 0, [1.0, 2.0], [2.0], [3.0], [4.0])


def test_plant_noise_is_zero_mean():
    m = with_random_noise(small_random(0, n=1, d=3, T=1), 2)
    rng = np.random.default_rng(3)
    M = 10**5
    L = psd_sqrt(m.noise.sigma_w[0][0])
    w = gaussian_sampler(rng, (M, 3)) @ L.T
    x, u, u0 = np.ones(3), np.ones(3), np.ones(3)
    resid = step_plant(m, 0, x, u, u0, w) - step_plant(m, 0, x, u, u0, np.zeros(3))
    assert np.all(np.abs(resid.mean(axis=0)) <= 4 * resid.std(axis=0, ddof=1) / np.sqrt(M))


@pytest.mark.parametrize("sampler", [gaussian_sampler, uniform_sampler])
def test_samplers_are_standardized(sampler):
    z = sampler(np.random.default_rng(4), (200000, 2))
    assert np.all(np.abs(z.mean(axis=0)) < 0.01)
    assert np.allclose(np.cov(z.T), np.eye(2), atol=0.01)


def test_uniform_noise_matches_covariance():
    S = np.array([[2.0, 0.7], [0.7, 1.0]])
    z = uniform_sampler(np.random.default_rng(5), (400000, 2)) @ psd_sqrt(S).T
    assert np.allclose(np.cov(z.T), S, atol=0.02)
    assert np.ptp(z[:, 0]) < 2 * np.sqrt(3) * np.abs(psd_sqrt(S)).sum(axis=1)[0] + 1e-9


# -- episodes ------------------------------------------------------------------


def test_zero_noise_from_origin_stays_at_origin():
    m = small_random(1, n=2, d=2, T=6)
    z = [np.zeros((2, 2))] * 2
    m = make_model(
        [pl.A for pl in m.plants], [pl.B_local for pl in m.plants], [pl.B_remote for pl in m.plants],
        np.stack([c.R for c in m.costs]), horizon=m.T, p=m.channel.p, sigma0=z, sigma_w=z,
    )
    tr = simulate_episode(m, synthesize(m), 0)
    for a in (tr.x, tr.xhat, tr.u0, tr.ubar, tr.u, tr.cost):
        assert not a.any()


def test_same_seed_same_trace():
    m = with_random_noise(small_random(2, n=2, d=2, T=6), 0)
    s = synthesize(m)
    a, b = simulate_episode(m, s, 42, episode=3), simulate_episode(m, s, 42, episode=3)
    for f in ("x", "xhat", "gamma", "u0", "ubar", "u", "cost"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    c = simulate_episode(m, s, 43, episode=3)
    assert not np.array_equal(a.x, c.x)


def test_episode_identical_alone_or_in_batch():
    m = with_random_noise(small_random(3, n=3, d=2, T=10), 1)
    s = synthesize(m)
    b = simulate_batch(m, s, range(64), 9)
    for k in (0, 17, 63):
        tr = simulate_episode(m, s, 9, episode=k)
        for f in ("x", "xhat", "gamma", "u0", "ubar", "u", "cost"):
            assert np.array_equal(getattr(tr, f), getattr(b, f)[k])


def test_perfect_links_reproduce_centralized_rollout():
    m = with_random_noise(small_random(4, n=2, d=2, T=8, p=0.0), 2)
    s = synthesize(m)
    dec = simulate_episode(m, s, 7)
    cen = simulate_centralized_episode(m, s.K, 7)
    assert dec.gamma.all()
    for f in ("x", "u0", "u", "cost"):
        assert np.array_equal(getattr(dec, f), getattr(cen, f))
    # the independent LQ code path agrees to rounding
    ind = simulate_centralized_episode(m, centralized_lqr(m).K, 7)
    assert np.allclose(ind.x, dec.x, rtol=1e-9, atol=1e-9)
    assert np.allclose(ind.u, dec.u, rtol=1e-9, atol=1e-9)


def test_trace_invariants_hold():
    for seed in range(6):
        m = with_random_noise(small_random(seed, n=1 + seed % 3, d=2, T=7, p=0.4), seed)
        s = synthesize(m)
        b = simulate_batch(m, s, range(20), seed)
        for k in range(20):
            tr = b.trace(k)
            assert tr.invariant_violations(m) == []
            assert tr.J == pytest.approx(tr.cost.sum(), rel=1e-15)


def test_forced_link_sequence_is_respected():
    m = small_random(5, n=2, d=2, T=3)
    gamma = np.array([[1, 0], [0, 0], [0, 1], [1, 1]], dtype=np.int8)
    tr = simulate_episode(m, synthesize(m), 0, gamma=gamma)
    assert np.array_equal(tr.gamma, gamma)


def test_episode_streams_are_distinct():
    a = episode_rng(1, 0).random(4)
    b = episode_rng(1, 1).random(4)
    c = episode_rng(2, 0).random(4)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)


# -- Monte Carlo ---------------------------------------------------------------


def test_single_episode_report(scalar):
    s = synthesize(scalar)
    rep = monte_carlo(scalar, s, 1, 3)
    assert rep.mean == simulate_episode(scalar, s, 3).J
    assert rep.stderr == 0.0


def test_report_matches_manual_statistics(scalar):
    s = synthesize(scalar)
    rep = monte_carlo(scalar, s, 500, 8, chunk=64, profile=True)
    J = simulate_batch(scalar, s, range(500), 8, record=False).J
    assert rep.mean == pytest.approx(J.mean(), rel=1e-14)
    assert rep.stderr == pytest.approx(J.std(ddof=1) / np.sqrt(500), rel=1e-12)
    assert sum(rep.profile) == pytest.approx(rep.mean, rel=1e-12)


def test_monte_carlo_rejects_empty_run(scalar):
    with pytest.raises(ValueError):
        monte_carlo(scalar, synthesize(scalar), 0, 0)


def test_scalar_mean_matches_exact_cost(scalar):
    s = synthesize(scalar)
    rep = monte_carlo(scalar, s, 10**4, 0)
    assert rep.within(exact_cost(scalar, s), 4)


def test_detuned_gains_cost_more():
    m = small_random(0, n=2, d=2, T=8, lo=0.0, hi=2.0)
    s = synthesize(m)
    opt = monte_carlo(m, s, 10**4, 100)
    det = monte_carlo(m, LinearPolicy.from_schedule(s).scaled(1.1), 10**4, 200)
    assert det.mean - opt.mean > 4 * np.hypot(opt.stderr, det.stderr)


def test_interval_coverage(scalar):
    s = synthesize(scalar)
    J = exact_cost(scalar, s)
    hits = sum(
        abs((r := monte_carlo(scalar, s, 1000, seed)).mean - J) <= 3 * r.stderr for seed in range(100)
    )
    assert hits >= 95


# -- trace export --------------------------------------------------------------


def test_csv_export(tmp_path):
    m = small_random(6, n=2, d=2, T=3)
    s = synthesize(m)
    traces = [(k, simulate_episode(m, s, 1, episode=k)) for k in range(2)]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trace_csv(p1, m.dims, traces)
    write_trace_csv(p2, m.dims, traces)
    assert p1.read_bytes() == p2.read_bytes()
    rows = list(csv.DictReader(p1.open()))
    assert len(rows) == 2 * (m.T + 1) * m.N
    first = rows[0]
    assert set(first) >= {"episode", "t", "subsystem", "gamma", "state_0", "estimate_0", "stage_cost"}
    assert float(first["stage_cost"]) == pytest.approx(traces[0][1].cost[0])

