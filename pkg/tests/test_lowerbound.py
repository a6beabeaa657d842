import math

import numpy as np
import pytest
from scipy import stats

from lbopt import lowerbound as lb


def wilson_by_hand(hits, n, conf=0.99):
    z = stats.norm.ppf(0.5 + conf / 2)
    p = hits / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return centre - half, centre + half


class TestEta:
    def test_deterministic_coin(self):
        assert np.all(lb.sample_eta(1.0, np.random.default_rng(0), 100) == 1)

    def test_mean_and_cdf(self):
        x = lb.sample_eta(0.1, np.random.default_rng(1), 100_000)
        assert x.min() >= 1
        assert x.mean() == pytest.approx(10.0, abs=4 * x.std() / np.sqrt(x.size))
        hits = np.count_nonzero(x <= 3)
        assert wilson_by_hand(hits, x.size)[0] <= 0.3


class TestMu:
    def test_full_window(self):
        np.testing.assert_array_equal(lb.sample_mu_block(6, 6, 3, np.random.default_rng(0)), [1, 1, 1])

    def test_cdf_bound_and_total(self):
        rng = np.random.default_rng(2)
        d, K = 40, 4
        gaps = np.array([lb.sample_mu_block(d, K, K, rng) for _ in range(20_000)])
        assert np.all(gaps.sum(axis=1) <= d)
        for t in range(1, d // 2 + 1):
            hits = np.count_nonzero(gaps[:, 0] <= t)
            assert wilson_by_hand(hits, len(gaps))[0] <= K * t / (d - t + 1)

    def test_first_gap_law(self):
        # first hit of a K-window in a uniform order: P(mu > t) = C(d-K, t) / C(d, t)
        rng = np.random.default_rng(3)
        d, K = 12, 3
        first = np.array([lb.sample_mu_block(d, K, 1, rng)[0] for _ in range(20_000)])
        t = np.arange(0, d - K + 1)
        surv = np.array([math.comb(d - K, s) / math.comb(d, s) for s in t])
        pmf = surv[:-1] - surv[1:]
        counts = np.bincount(first, minlength=d - K + 2)[1 : d - K + 1]
        assert stats.chisquare(counts, pmf / pmf.sum() * counts.sum()).pvalue > 1e-3


class TestTB:
    def test_degenerate(self):
        p = lb.ConcParams(n=1, d=4, K=2, B=1, p_sigma=1.0, h=1.0, tau_s=1e9)
        assert lb.t_B(p, np.random.default_rng(0)) == 1.0
        p0 = lb.ConcParams(n=3, d=8, K=2, B=5, p_sigma=0.3, h=1.0, tau_s=0.0)
        assert lb.t_B(p0, np.random.default_rng(0)) == 0.0

    def test_median_against_direct_simulation(self):
        # a loop-by-loop simulation (per block, worker and hit, with explicit
        # geometric draws and a shuffled coordinate stream) over 10^4 trials
        # has median 359
        p = lb.ConcParams(n=8, d=512, K=4, B=32, p_sigma=0.05, h=1.0, tau_s=1.0)
        med = np.median(lb.t_B_samples(p, 10_000, np.random.default_rng(0)))
        assert med == pytest.approx(359.0, abs=3.0)
        assert med > lb.t_bar_lemma6(p)


class TestYT:
    def test_single_worker(self):
        p = lb.ConcParams(n=1, d=10, T=20, p_sigma=0.2, h=2.0, tau_w=5.0)
        y = lb.y_T_samples(p, 20_000, np.random.default_rng(4))
        assert y.mean() == pytest.approx(2.0 * 20 / 0.2, abs=4 * y.std() / np.sqrt(y.size))

    def test_free_upload(self):
        n, ps = 4, 0.1
        p = lb.ConcParams(n=n, d=10, T=10, p_sigma=ps, h=1.0, tau_w=0.0)
        y = lb.y_T_samples(p, 20_000, np.random.default_rng(5))
        q = 1 - (1 - ps) ** n  # min of n geometrics is geometric
        assert y.mean() == pytest.approx(10 / q, abs=4 * y.std() / np.sqrt(y.size))

    def test_recursion_small_case(self):
        # n = 2, T = 1: y = min_i min(h eta_i, h eta_j + tau_w mu_j)
        p = lb.ConcParams(n=2, d=3, T=1, p_sigma=0.5, h=1.0, tau_w=1.0)
        y = lb.y_T_samples(p, 50_000, np.random.default_rng(6))
        # with T = 1 the channel never helps, so y = min(eta_1, eta_2) ~ Geometric(3/4)
        assert y.mean() == pytest.approx(4 / 3, abs=4 * y.std() / np.sqrt(y.size))


class TestThresholds:
    def test_t_B_value(self):
        p = lb.ConcParams(n=2, d=800, K=4, B=10, p_sigma=0.1, h=1.0, tau_s=1.0, delta=0.5)
        assert p.p_K == pytest.approx(0.01)
        # mpmath reference; rounds to 0.767
        assert lb.t_bar_lemma6(p) == pytest.approx(0.767001432509507675, rel=1e-12)

    def test_t_B_limits(self):
        p = lb.ConcParams(n=2, d=800, K=4, B=10, p_sigma=0.1, h=1.0, tau_s=1.0, delta=1.0)
        den = math.exp(4) * 4**0.5 * (4 + 0.5 * math.log(4))
        assert lb.t_bar_lemma6(p) == pytest.approx(40 / den * 10)
        with pytest.raises(lb.BoundError) as e:
            lb.t_bar_lemma6(lb.ConcParams(n=1, d=4, K=2, B=1, p_sigma=1.0, h=1.0, tau_s=1.0, delta=0.1))
        assert e.value.code == "NONPOSITIVE_NUMERATOR"

    def test_t_B_monotone_in_n(self):
        vals = [lb.t_bar_lemma6(lb.ConcParams(n=n, d=400, K=6, B=5, p_sigma=0.1, h=1.0, tau_s=1.0))
                for n in range(1, 200)]
        assert np.all(np.diff(vals) <= 0)

    def test_t_B_polylog_scaling(self):
        from lbopt.worstcase import proof_window

        def tbar(n):
            K, _ = proof_window(n)
            return lb.t_bar_lemma6(lb.ConcParams(n=n, d=4 * K, K=K, B=4, p_sigma=0.1, h=1.0, tau_s=1e6))

        grid = [2**k for k in range(1, 11)]
        base = tbar(1)
        c = tbar(grid[0]) / base * math.log(grid[0] + 1) ** 4
        for n in grid:
            assert tbar(n) / base >= c / math.log(n + 1) ** 4

    def test_y_T_value(self):
        p = lb.ConcParams(n=1, d=100, T=100, p_sigma=0.1, h=1.0, tau_w=1.0, delta=0.5)
        # mpmath reference; rounds to 14.924
        assert lb.t_bar_lemma8(p) == pytest.approx(14.9239066759267022, rel=1e-12)

    def test_y_T_properties(self):
        vals = [lb.t_bar_lemma8(lb.ConcParams(n=3, d=50, T=T, p_sigma=0.2, h=1.0, tau_w=2.0)) for T in range(5, 60)]
        assert np.all(np.diff(vals) >= 0)
        p = lb.ConcParams(n=4, d=50, T=30, p_sigma=0.2, h=1.0, tau_w=1e-12)
        scale = (30 - math.log(4) + math.log(0.5)) / (32 * math.log(32))
        assert lb.t_bar_lemma8(p) == pytest.approx(scale * max(1 / (0.2 * 4), 1.0), rel=1e-5)
        with pytest.raises(lb.BoundError):
            lb.t_bar_lemma8(lb.ConcParams(n=8, d=50, T=2, p_sigma=0.2, h=1.0, tau_w=1.0))


class TestMCVerify:
    def test_degenerate_point_mass(self):
        p = lb.ConcParams(n=1, d=2, K=2, B=1, p_sigma=1.0, h=1.0, tau_s=1e9, delta=0.5)
        r = lb.mc_verify("lemma6", p, 1000, 0)
        assert r.p_hat == 0.0 and r.passed

    def test_report_and_determinism(self):
        p = lb.ConcParams(n=4, d=100, T=30, p_sigma=0.3, h=1.0, tau_w=1.0)
        a = lb.mc_verify("lemma8", p, 2000, 3).to_dict()
        b = lb.mc_verify("lemma8", p, 2000, 3).to_dict()
        assert a == b
        assert {"params", "p_hat", "ci_low", "ci_high", "t_bar", "pass"} <= set(a)

    def test_detects_violation(self, monkeypatch):
        # a threshold far above every sample must fail the check
        monkeypatch.setattr(lb, "t_bar_lemma8", lambda params: 1e9)
        p = lb.ConcParams(n=2, d=100, T=5, p_sigma=0.5, h=1.0, tau_w=1.0, delta=0.5)
        r = lb.mc_verify("lemma8", p, 1000, 0)
        assert r.p_hat == 1.0 and not r.passed

    def test_wilson(self):
        for hits, n in ((0, 1000), (37, 1000), (500, 1000)):
            np.testing.assert_allclose(lb.wilson_interval(hits, n), wilson_by_hand(hits, n), rtol=1e-9, atol=1e-12)

    def test_trials_floor(self):
        p = lb.ConcParams(n=1, d=2, K=2, B=1, p_sigma=1.0, h=1.0, tau_s=1.0)
        with pytest.raises(ValueError):
            lb.mc_verify("lemma6", p, 999)


class TestTheoryTime:
    def test_models(self):
        args = dict(L=1.0, Delta=2.0, eps=0.01, sigma2=0.0, n=3, d=10, h=0.5, tau_s=0.0, tau_w=0.0)
        assert lb.theory_time("eq3", **args) == pytest.approx(0.5 * 200)
        args.update(sigma2=0.5, tau_w=0.1, tau_s=0.2)
        eq4 = lb.theory_time("eq4", **args)
        assert lb.theory_time("eq5", **args) == pytest.approx(eq4 + 0.2 * 10 * 200)
        local = lb.theory_time("eq8-local", **args)
        assert local == pytest.approx(0.5 * 200 + 0.5 * 50 * 200)
        assert lb.theory_time("eq8-min", **args) == min(local, eq4 + 0.2 * 10 * 200)
        with pytest.raises(ValueError):
            lb.theory_time("eq9", **args)

    def test_doubling_n_halves_noise_term(self):
        args = dict(L=1.0, Delta=1.0, eps=0.01, sigma2=1.0, d=10, h=1.0, tau_s=0.0, tau_w=0.0)
        base = 100.0
        t2 = lb.theory_time("eq3", n=2, **args) - base
        t4 = lb.theory_time("eq3", n=4, **args) - base
        assert t4 == pytest.approx(t2 / 2)
