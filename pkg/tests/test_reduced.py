import math

import numpy as np
import pytest
from scipy import stats

from opgrowth.protocol import ProtocolParams, derive_params
from opgrowth.reduced import (
    ReducedState,
    SiteLabel,
    analytic_recursion,
    apply_depolarizer_reduced,
    apply_zz_reduced,
    estimate_success,
    initial_state,
    lambda_eta,
    p1,
    p_ell,
    p_star,
    run_trial,
    run_trials,
    sinc,
    sinc_bounds,
)
from opgrowth.seeding import derive_rng


# ---------------------------------------------------------------- formulas


def test_sinc_bounds_examples():
    assert sinc(0.0) == 1.0
    assert sinc(math.pi) == pytest.approx(0.0, abs=1e-15)
    F, lo, hi = sinc_bounds(1.0)
    assert (lo, F, hi) == pytest.approx((0.833333, 0.841471, 0.841667), abs=1e-6)


@pytest.mark.parametrize("x", np.linspace(0, math.sqrt(20), 25))
def test_sinc_sandwich(x):
    F, lo, hi = sinc_bounds(x)
    assert lo - 1e-15 <= F <= hi + 1e-15


def test_p1_can_exceed_half():
    # sinc dips to about -0.217 near x = 4.493
    assert p1(4.4934 * 16**1.5 / 4, 16, 1.5) == pytest.approx(0.6086, abs=1e-4)


def test_p1_edges():
    assert p1(0.0, 10, 1.5) == 0.0
    R, a = 16, 1.5
    assert p1(math.pi * R**a / 4, R, a) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        p1(-1.0, 4, 1.5)


def test_p1_matches_monte_carlo(rng):
    tau, R, a = 7.0, 8, 1.5
    theta = rng.uniform(-1, 1, 10**6) * tau / R**a
    flips = np.sin(2 * theta) ** 2
    assert abs(flips.mean() - p1(tau, R, a)) < 3 * flips.std() / 1e3


@pytest.mark.parametrize("tau", [0.5, 2.0, 5.0, 11.0])
def test_p1_taylor_sandwich(tau):
    R, a = 16, 1.5
    x2 = tau**2 / R ** (2 * a)
    v = p1(tau, R, a)
    assert 4 / 3 * x2 - 16 / 15 * x2**2 < v < 4 / 3 * x2


def test_p_ell_examples():
    assert p_ell(0.3, 0) == 0.0
    assert p_ell(0.1, 2) == pytest.approx(2 * 0.1 * 0.9)
    assert p_ell(0.2, 500) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        p_ell(1.2, 1)
    with pytest.raises(ValueError):
        p_ell(0.1, -1)


@pytest.mark.parametrize("p", [0.0, 0.03, 0.25, 0.5, 0.6])
def test_p_ell_vs_markov_power(p):
    T = np.array([[1 - p, p], [p, 1 - p]])
    for ell in range(0, 25):
        assert p_ell(p, ell) == pytest.approx(np.linalg.matrix_power(T, ell)[0, 1], abs=1e-14)
        if p <= 0.5:
            assert p_ell(p, ell) >= 0.5 * (1 - math.exp(-2 * p * ell)) - 1e-15


def test_p_ell_vectorized():
    np.testing.assert_allclose(p_ell(0.1, np.array([0, 1, 2])), [0, 0.1, 0.18])


def test_p_star_examples():
    assert p_star(0.0, 10) == 0.0
    assert p_star(0.5, 1) == 0.5
    with pytest.raises(ValueError):
        p_star(0.5, 0)


@pytest.mark.parametrize("r", [1e3, 1e4, 1e5])
def test_p_star_chain_at_defaults(r):
    for row in analytic_recursion(derive_params(r, 1.5)).rows:
        assert row.p_star >= 1 / 15


# ---------------------------------------------------------------- label updates


def _state(params, labels):
    lab = np.zeros(params.n_sites, dtype=np.int8)
    lab[: len(labels)] = labels
    return ReducedState(lab, params)


def test_zz_no_nu_is_identity(rng):
    p = ProtocolParams(d=1, alpha=1.5, m=4, q_star=2)
    st = _state(p, [2, 0, 2, 2])
    out = apply_zz_reduced(st, 1, 1e6, rng)
    np.testing.assert_array_equal(out.labels, st.labels)


def test_zz_all_nu_cube_is_identity(rng):
    p = ProtocolParams(d=1, alpha=1.5, m=4, q_star=1)
    st = _state(p, [1, 1, 1, 1])
    np.testing.assert_array_equal(apply_zz_reduced(st, 1, 50.0, rng).labels, st.labels)


def test_zz_seed_count_is_binomial(rng):
    p = ProtocolParams(d=1, alpha=1.5, m=16, q_star=1)
    ell = 3
    st = _state(p, [1] * ell)
    tau = 12.0
    pl = p_ell(p1(tau, 16, 1.5), ell)
    n_free = 16 - ell
    trials = 100_000
    counts = np.array([np.count_nonzero(apply_zz_reduced(st, 1, tau, rng).labels == 2) for _ in range(trials)])
    obs = np.bincount(counts, minlength=n_free + 1)
    exp = stats.binom.pmf(np.arange(n_free + 1), n_free, pl) * trials
    # pool sparse tail bins so every expected count is >= 5
    keep = exp >= 5
    o = np.append(obs[keep], obs[~keep].sum())
    e = np.append(exp[keep], exp[~keep].sum())
    if e[-1] == 0:
        o, e = o[:-1], e[:-1]
    assert stats.chisquare(o, e).pvalue > 0.01


def test_zz_flips_z_back_to_identity(rng):
    p = ProtocolParams(d=1, alpha=1.5, m=4, q_star=1)
    st = _state(p, [1, 2, 2, 2])
    tau = math.pi * 4**1.5 / 4  # p1 = 1/2
    outs = np.array([apply_zz_reduced(st, 1, tau, rng).labels for _ in range(4000)])
    assert np.all(outs[:, 0] == 1)
    assert np.mean(outs[:, 1:] == 0) == pytest.approx(0.5, abs=0.03)


def test_depolarizer_identity_state(rng):
    p = ProtocolParams(d=1, alpha=1.5, m=4, q_star=1)
    st = _state(p, [])
    np.testing.assert_array_equal(apply_depolarizer_reduced(st, rng).labels, 0)


def test_depolarizer_nu_fraction(rng):
    p = ProtocolParams(d=1, alpha=1.5, m=10, q_star=1)
    st = _state(p, [2, 0, 1, 2, 0])
    res = np.array([apply_depolarizer_reduced(st, rng).labels for _ in range(100_000 // 3)])
    occ = res[:, [0, 2, 3]]
    assert np.all(res[:, [1, 4]] == 0) and np.all(occ != 0)
    frac = np.mean(occ == 1)
    sigma = math.sqrt(2 / 9 / occ.size)
    assert abs(frac - 2 / 3) < 3 * sigma


# ---------------------------------------------------------------- trajectories


def test_first_layer_mean():
    p = ProtocolParams(d=1, alpha=1.5, m=4, q_star=1)
    trials = 20_000
    after = np.array([run_trial(p, derive_rng(0, f"t{k}")).occupancy[1] for k in range(trials)])
    want = 1 + 3 * p1(p.tau(1), p.R(1), p.alpha)
    assert abs(after.mean() - want) < 4 * after.std() / math.sqrt(trials)


def test_trajectory_bounds_and_reproducibility():
    p = ProtocolParams(d=1, alpha=1.5, m=5, q_star=3, seed=2)
    a = run_trial(p, derive_rng(9, "x"))
    b = run_trial(p, derive_rng(9, "x"))
    np.testing.assert_array_equal(a.occupancy, b.occupancy)
    assert a.occupancy.max() <= p.n_sites and a.occupancy[0] == 1 and a.diameter[0] == 0
    assert len(a.occupancy) == 2 ** (p.q_star + 1) - 1
    assert len(a.level_occupancy()) == p.q_star


def test_trial_2d():
    p = ProtocolParams(d=2, alpha=2.5, m=4, q_star=2)
    tr = run_trial(p, derive_rng(0, "2d"))
    assert tr.occupancy.max() <= 256 and tr.diameter.max() <= 2 * 15


def test_run_trials_thread_independent():
    p = ProtocolParams(d=1, alpha=1.5, m=6, q_star=2)
    a = run_trials(p, 6, seed=5, threads=1)
    b = run_trials(p, 6, seed=5, threads=2)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_adaptive_tau_runs():
    p = ProtocolParams(d=1, alpha=1.5, m=6, q_star=3)
    occ, _ = run_trials(p, 4, adaptive_tau=True)
    assert occ.shape == (4, 15)


def test_success_extremes():
    p = ProtocolParams(d=1, alpha=1.5, m=6, q_star=2)
    data = run_trials(p, 30)
    assert estimate_success(p, 30, 0.0, L=0, data=data).probability == 1.0
    assert estimate_success(p, 30, 1.01, L=0, data=data).probability == 0.0
    est = estimate_success(p, 30, 0.1, data=data)
    assert est.low <= est.probability <= est.high


def test_success_monotone_in_m():
    ests = []
    for m in (3, 6, 12):
        p = ProtocolParams(d=1, alpha=1.5, m=m, q_star=2)
        ests.append(estimate_success(p, 300, 0.3, L=p.R(1), seed=1))
    for a, b in zip(ests, ests[1:]):
        assert a.low <= b.high


# ---------------------------------------------------------------- analytic recursion


def test_recursion_base_m4():
    t = analytic_recursion(ProtocolParams(d=1, alpha=1.5, m=4, q_star=3))
    assert t.rows[0].eta1 == pytest.approx(1 - math.exp(-1 / 30))
    assert t.rows[0].eta1 == pytest.approx(0.0328, abs=1e-4)
    assert t.vacuous


def test_recursion_identities():
    m, q_star = 400, 5
    lam, eta = lambda_eta(m, 1, q_star)
    assert lam[0] == pytest.approx(1 / 30)
    for q in range(1, q_star):
        assert lam[q] == pytest.approx(eta[q - 1][0] * lam[q - 1] / 60)
        assert eta[q][0] == pytest.approx(min(1, max(0, eta[q - 1][0] * eta[q - 1][1] * eta[q - 1][2])))
    assert all(0 <= v <= 1 for row in eta for v in row)


def test_lambda_lower_bound_when_eta_large():
    lam, eta = lambda_eta(20_000, 1, 6)
    for q, v in enumerate(lam, start=1):
        assert v >= 4 / 120**q


def test_lambda_lower_bound_fails_when_eta_small():
    lam, _ = lambda_eta(21, 1, 4)
    assert lam[1] < 4 / 120**2


def test_floor():
    md = 2160 * math.log(1000)
    for q_star in (1, 10, 33):
        assert 1 - 3 * q_star * math.exp(-md / 2160) > 0.9
    assert 1 - 3 * 34 * math.exp(-md / 2160) < 0.9
    t = analytic_recursion(ProtocolParams(d=1, alpha=1.5, m=math.ceil(md), q_star=1))
    assert t.floor == pytest.approx(1 - 3 * math.exp(-math.ceil(md) / 2160))


@pytest.mark.parametrize("m", [8, 16, 32])
def test_seeded_count_tail_certificate(m, rng):
    p = ProtocolParams(d=1, alpha=1.5, m=m, q_star=2)
    s = m
    labels = [1, 2] * (m // 2)  # one full sub-cube, half NU
    st = _state(p, labels)
    tau = p.tau(2, s)
    trials = 3000
    low = 0
    for _ in range(trials):
        out = apply_zz_reduced(st, 2, tau, rng).labels.reshape(m, m)
        seeded = np.count_nonzero(np.any(out[1:] != 0, axis=1))
        low += seeded <= m / 30
    bound = math.exp(-m / 120) + math.exp(-s / 72)
    assert low / trials <= bound
