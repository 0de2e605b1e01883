"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest
from scipy.stats import norm

from opgrowth import bounds, reduced, verify
from opgrowth.protocol import ProtocolParams, assemble, derive_params, fit_slope, runtime, runtime_scaling

pytestmark = pytest.mark.slow


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_criterion_1_depolarizer_identities(criterion):
    with Clock() as c:
        rep = verify.check_depolarizer_group(tol=1e-12)
    ok = rep.passed and rep.max_slack < 1e-12 and c.elapsed < 1.0
    criterion(1, ok, f"depolarizer max deviation {rep.max_slack:.2e}, "
                     f"order48={rep.details['order48']} closed={rep.details['closed']}, {c.elapsed:.2f}s")
    assert ok


def test_criterion_2_flip_probabilities(criterion):
    rng = np.random.default_rng(2)
    worst_z, worst_markov, sandwich_ok = 0.0, 0.0, True
    with Clock() as c:
        for tau, R, alpha in [(0.5, 4, 1.5), (3.0, 4, 1.5), (16.0, 16, 1.5), (40.0, 8, 2.0), (200.0, 21, 1.5)]:
            J = rng.uniform(-1, 1, 1_000_000)
            theta = J * tau / R**alpha
            draws = np.sin(2 * theta) ** 2
            want = reduced.p1(tau, R, alpha)
            z = abs(draws.mean() - want) / (draws.std(ddof=1) / math.sqrt(draws.size))
            worst_z = max(worst_z, z)
            flip = np.array([[1 - want, want], [want, 1 - want]])
            for ell in range(0, 13):
                mp = np.linalg.matrix_power(flip, ell)[0, 1]
                worst_markov = max(worst_markov, abs(mp - reduced.p_ell(want, ell)))
        for x in np.linspace(0, math.sqrt(20), 200):
            F, lo, hi = reduced.sinc_bounds(float(x))
            sandwich_ok &= lo - 1e-15 <= F <= hi + 1e-15
    ok = worst_z < 3 and worst_markov < 1e-14 and sandwich_ok and c.elapsed < 10
    criterion(2, ok, f"p1 worst |z|={worst_z:.2f} (<3), p_ell vs matrix power {worst_markov:.1e}, "
                     f"sandwich={sandwich_ok}, {c.elapsed:.1f}s")
    assert ok


def test_criterion_3_inequality_suites(criterion):
    rng = np.random.default_rng(3)
    dims = [(2, 2), (2, 4), (4, 2), (2, 8), (8, 2), (4, 4)]
    with Clock() as c:
        reps = [
            verify.check_uniform_smoothness(q_list=(2, 3, 4, 6), trials=10_000, rng=rng, dims=dims),
            verify.check_holder(trials=10_000, rng=rng, max_dim=16),
            verify.check_riesz_thorin(trials=10_000, rng=rng, max_dim=16),
            verify.check_nc_convexity(dims=dims, trials=10_000, rng=rng),
            verify.check_submultiplicativity(n=8, alpha=2.0, trials=1000, rng=rng, k=2, p=2),
            verify.check_submultiplicativity(n=8, alpha=2.0, trials=1000, rng=rng, k=3, p=2),
            verify.check_submultiplicativity(n=8, alpha=2.0, trials=1000, rng=rng, k=3, p=4),
        ]
    for r in reps:
        print(r.line())
    ok = all(r.passed for r in reps) and c.elapsed < 300
    worst = max(r.max_slack for r in reps)
    criterion(3, ok, f"{sum(r.passed for r in reps)}/{len(reps)} suites clean, "
                     f"worst relative slack {worst:.2e}, {c.elapsed:.0f}s")
    assert ok


def test_criterion_4_oracle_equivalence(criterion):
    with Clock() as c:
        br = verify.check_branching_vs_exact(trials=100, seed=4)
        tv = verify.check_reduced_vs_exact(trials=100_000, seed=4)
    ok = br.passed and br.max_slack < 1e-9 and tv.details["tvd"] < 0.02 and c.elapsed < 600
    criterion(4, ok, f"branching max error {br.max_slack:.1e} (<1e-9), "
                     f"reduced vs exact TVD {tv.details['tvd']:.4f} (<0.02), {c.elapsed:.0f}s")
    assert ok


def test_criterion_5_markov_front(criterion):
    with Clock() as c:
        markov, rate = verify.check_markov_front(n=10, alpha=(1.5, 2.0, 3.0), trials=20, rng=5)
    ok = markov.passed and rate.passed and c.elapsed < 900
    criterion(5, ok, f"Markov step slack {markov.max_slack:.2e}, rate bound slack {rate.max_slack:.2e}, "
                     f"{markov.trials} points, {c.elapsed:.0f}s")
    assert ok


def test_criterion_6_bound_exponents(criterion):
    Rs = np.array([2**k - 1 for k in range(7, 14)], dtype=float)
    with Clock() as c:
        t15 = [bounds.frobenius_lightcone_time(1.5, int(R), 0.5) for R in Rs]
        t25 = [bounds.frobenius_lightcone_time(2.5, int(R), 0.5) for R in Rs]
        slope15 = np.polyfit(np.log(Rs), np.log(t15), 1)[0]
        comp25 = np.polyfit(np.log(Rs), np.log(np.array(t25) / (Rs / np.log(Rs))), 1)[0]
        table = {
            (3.0, 1e4): 1e4,
            (2.0, 1e4): 1e2,
            (2.5, 1e4): 1e4 / math.log(1e4) ** 1.5,
        }
        table_ok = all(math.isclose(bounds.pnorm_constants(a, r)["R_of_r"], want, rel_tol=1e-12)
                       for (a, r), want in table.items())
    ok = abs(slope15 - 0.5) <= 0.05 and abs(comp25) <= 0.05 and table_ok and c.elapsed < 1
    criterion(6, ok, f"alpha=1.5 slope {slope15:.3f} (0.5+-0.05), alpha=2.5 compensated slope "
                     f"{comp25:+.3f} (+-0.05), R(r) table={table_ok}, {c.elapsed:.2f}s")
    assert ok


def test_criterion_7_runtime_scaling(criterion):
    rs = np.geomspace(1e3, 1e6, 13)
    with Clock() as c:
        table = runtime_scaling(rs, 1.5, 1)
        slope = fit_slope(table)
        cap_ok = True
        for r in rs:
            p = derive_params(float(r), 1.5, 1)
            cap_ok &= runtime(p)[-1] < 2 ** (p.q_star + 1) * p.tau(p.q_star)
    ok = abs(slope - 0.5) <= 0.1 and cap_ok and c.elapsed < 1
    criterion(7, ok, f"runtime slope {slope:.3f} (target 0.5+-0.1), "
                     f"t_q* < 2^(q*+1) tau_q* {cap_ok}, {c.elapsed:.2f}s")
    assert ok


def test_criterion_8_protocol_growth(criterion):
    params = ProtocolParams(d=1, alpha=1.5, m=21, q_star=4, seed=8)
    table = reduced.analytic_recursion(params)
    lam = table.row(params.q_star).lambda1
    eta = table.row(params.q_star).eta1
    with Clock() as c:
        occ, dia = reduced.run_trials(params, 1000, seed=8)
        est = reduced.estimate_success(params, 1000, lam, data=(occ, dia))
    ends = np.array(assemble(params).level_ends())
    levels = occ[:, ends]
    diffs = np.diff(levels, axis=1)
    lows = diffs.mean(axis=0) - norm.ppf(0.975) * diffs.std(axis=0, ddof=1) / math.sqrt(len(diffs))
    growth_ok = bool(np.all(lows > 0))
    ok = est.probability >= eta and growth_ok and c.elapsed < 300
    criterion(8, ok, f"success {est.probability:.3f} >= eta {eta:.3g} (vacuous={table.vacuous}), "
                     f"mean level occupancy {np.round(levels.mean(axis=0), 1).tolist()}, "
                     f"min 95% lower bound on increase {lows.min():.2f}, {c.elapsed:.0f}s")
    assert ok


def test_criterion_9_inclusion_exclusion(criterion):
    with Clock() as c:
        reps = [verify.check_inclusion_exclusion(N, 12) for N in range(1, 13)]
    ok = all(r.passed for r in reps) and c.elapsed < 1
    criterion(9, ok, f"all N <= M <= 12 exact={all(r.passed for r in reps)}, {c.elapsed:.2f}s")
    assert ok
