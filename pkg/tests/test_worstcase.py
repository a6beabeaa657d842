import json
import math

import numpy as np
import pytest

from lbopt import worstcase as wc


def naive_psi(a, x):
    if x <= 0.5:
        return 0.0
    return math.exp(math.log(a) * (1 - 1 / (2 * x - 1) ** 2))


def naive_phi(x):
    return math.sqrt(math.e) * math.sqrt(math.pi / 2) * math.erfc(-x / math.sqrt(2))


def naive_gamma(x):
    return -x * math.exp(1 / x + 1) if x < 0 else 0.0


def naive_new(x, K, a):
    """Term-by-term sum with the ones prefix written out explicitly."""
    full = [1.0] * K + list(x)
    total = 0.0
    for i in range(len(x)):
        prod = 1.0
        for j in range(i, i + K):
            prod *= naive_psi(a, full[j])
        total -= prod * naive_phi(x[i])
        total += naive_gamma(x[i])
    return total


def naive_classic(x):
    full = [1.0] + list(x)
    total = -naive_psi(math.e, 1.0) * naive_phi(x[0])
    for i in range(1, len(x)):
        total += naive_psi(math.e, -full[i]) * naive_phi(-x[i]) - naive_psi(math.e, full[i]) * naive_phi(x[i])
    return total


def random_point(rng, T):
    choices = np.array([-3.0, -0.5, 0.0, 0.0, 0.4, 0.6, 0.9, 1.0, 1.3, 2.5])
    return rng.choice(choices, T) + rng.normal(0, 0.05, T) * (rng.random(T) < 0.5)


class TestProg:
    def test_examples(self):
        assert wc.prog(np.zeros(5), 3) == 0
        assert wc.prog([1, 1, 0, 1], 1) == 4
        assert wc.prog([1, 1, 0, 1], 2) == 2

    def test_against_definition(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            x = (rng.random(12) < 0.6).astype(float)
            K = int(rng.integers(1, 5))
            full = np.concatenate([np.ones(K), x])
            best = 0
            for i in range(1, 13):
                if np.all(full[i : i + K] != 0):
                    best = i
            assert wc.prog(x, K) == best
            assert wc.prog(x, K) <= wc.prog(x, 1)


class TestConstants:
    def test_classic(self):
        c = wc.constants(1, math.e, "classic")
        assert (c.delta0, c.ell1, c.gamma_inf) == (12.0, 152.0, 23.0)

    def test_new_values(self):
        # mpmath references
        assert wc.constants(1, math.e).delta0 == pytest.approx(11.2339285418141161, rel=1e-14)
        c = wc.constants(4, 1.25)
        assert c.gamma_inf == pytest.approx(1393.44804469343617, rel=1e-13)
        assert c.ell1 == pytest.approx(64147.9938815710712, rel=1e-13)
        assert c.delta0 == pytest.approx(10.0896761575256175, rel=1e-13)

    def test_proof_window(self):
        assert wc.proof_window(1) == (4, 1.25)
        assert wc.proof_window(2) == (6, 1 + 1 / 6)
        assert wc.proof_window(8)[0] == 12
        assert wc.proof_window(32)[0] == 18


class TestEvaluate:
    def test_zero_point(self):
        f = wc.WorstCaseFn(3, 1, math.e)
        assert f(np.zeros(3)) == pytest.approx(-2.06636567706124647, rel=1e-13)
        f2 = wc.WorstCaseFn(2, 2, 1.5)
        assert f2(np.zeros(2)) == pytest.approx(-2.06636567706124647, rel=1e-13)

    @pytest.mark.parametrize("T,K,a", [(7, 1, math.e), (9, 3, 1.3), (12, 4, 1.25)])
    def test_matches_naive_sum(self, T, K, a):
        rng = np.random.default_rng(T)
        f = wc.WorstCaseFn(T, K, a)
        for _ in range(50):
            x = random_point(rng, T)
            assert f(x) == pytest.approx(naive_new(x, K, a), rel=1e-12, abs=1e-12)

    def test_classic_matches_naive(self):
        rng = np.random.default_rng(0)
        f = wc.WorstCaseFn.classic(10)
        for _ in range(100):
            x = random_point(rng, 10)
            assert f(x) == pytest.approx(naive_classic(x), rel=1e-12, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            wc.evaluate(wc.WorstCaseFn(4), np.zeros(3))

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            wc.WorstCaseFn(3, K=4)
        with pytest.raises(ValueError):
            wc.WorstCaseFn(3, K=2, a=1.5, variant="classic")


class TestGradient:
    @pytest.mark.parametrize("T,K,a,variant", [(8, 1, math.e, "classic"), (10, 1, math.e, "new"),
                                               (10, 3, 1.3, "new"), (14, 4, 1.25, "new")])
    def test_central_differences(self, T, K, a, variant):
        rng = np.random.default_rng(1)
        f = wc.WorstCaseFn(T, K, a, variant)
        for _ in range(20):
            x = random_point(rng, T)
            g = f.grad(x)
            step = 1e-6 * np.maximum(1.0, np.abs(x))
            fd = np.array([(f(x + s * e) - f(x - s * e)) / (2 * s) for s, e in zip(step, np.eye(T))])
            err = np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(fd))
            assert err <= 1e-5

    def test_support_at_zero(self):
        g = wc.grad(wc.WorstCaseFn(6, 2, 1.5), np.zeros(6))
        assert g[0] != 0 and np.all(g[1:] == 0)

    def test_large_gradient_before_end(self):
        rng = np.random.default_rng(2)
        f = wc.WorstCaseFn(20, 3, 1.3)
        hits = 0
        for _ in range(200):
            x = random_point(rng, 20)
            if wc.prog(x, 3) < 20:
                hits += 1
                assert np.linalg.norm(f.grad(x)) > 1
        assert hits > 40

    def test_progress_containment(self):
        rng = np.random.default_rng(4)
        for K in (1, 2, 4):
            f = wc.WorstCaseFn(16, K, 1.25 if K > 1 else math.e)
            for _ in range(100):
                x = random_point(rng, 16)
                m = wc.prog(x, K)
                assert wc.prog(f.grad(x), 1) <= max(m + 1, wc.prog(x, 1))


class TestHessian:
    def test_band_and_norm(self):
        rng = np.random.default_rng(5)
        for T, K, a in ((30, 1, math.e), (30, 3, 1.3)):
            f = wc.WorstCaseFn(T, K, a)
            for _ in range(5):
                H = wc.hessian_band(f, random_point(rng, T))
                i, j = np.indices(H.shape)
                assert np.all(H[np.abs(i - j) > K] == 0)
                assert wc.spectral_norm(H) <= f.constants().ell1

    def test_guard(self):
        with pytest.raises(ValueError):
            wc.hessian_band(wc.WorstCaseFn(2001), np.zeros(2001))

    def test_power_iteration_agrees(self):
        rng = np.random.default_rng(6)
        A = rng.normal(size=(250, 250))
        A = A + A.T
        assert wc.spectral_norm(A) == pytest.approx(np.abs(np.linalg.eigvalsh(A)).max(), rel=1e-6)


class TestInstance:
    def test_scaling_invariants(self):
        K, a = wc.proof_window(2)
        Delta = wc.delta_for_chain(40, 1.0, 1e-3, K, a, "new", frac=0.5)
        inst = wc.build_instance(1.0, Delta, 1e-3, 2, 0.5, 2000)
        c = inst.consts
        assert inst.K == 6 and inst.fn.a == pytest.approx(7 / 6)
        assert inst.lam == pytest.approx(math.sqrt(2e-3) * c.ell1)
        assert inst.T == 40 == math.floor(Delta / (2 * c.delta0 * c.ell1 * 1e-3))
        assert inst.p_sigma == pytest.approx(min(2e-3 * c.gamma_inf**2 / 0.5, 1.0))
        assert inst.p_K == pytest.approx(12 / 2000)

    def test_deterministic_oracle_when_noiseless(self):
        inst = wc.build_instance(1.0, 5.0, 1e-3, 1, 0.0, 10, variant="classic")
        assert inst.p_sigma == 1.0

    def test_errors(self):
        with pytest.raises(wc.InstanceError) as e:
            wc.build_instance(1.0, 1e-3, 1e-3, 1, 0.0, 10, variant="classic")
        assert e.value.code == "T_ZERO"
        with pytest.raises(wc.InstanceError) as e:
            wc.build_instance(1.0, 100.0, 1e-3, 1, 0.0, 5, variant="classic")
        assert e.value.code == "DIM_TOO_SMALL"

    def test_delta_for_chain(self):
        for T in (1, 2, 7, 300):
            D = wc.delta_for_chain(T, 1.0, 1e-3)
            assert wc.build_instance(1.0, D, 1e-3, 1, 0.0, 400, variant="classic").T == T

    def test_scaled_function(self):
        inst = wc.build_instance(2.0, wc.delta_for_chain(12, 2.0, 1e-3), 1e-3, 1, 0.0, 20, variant="classic")
        rng = np.random.default_rng(7)
        assert -inst.value_scale * inst.consts.delta0 * inst.T >= -inst.Delta
        for _ in range(50):
            x = np.zeros(20)
            x[:12] = inst.lam * random_point(rng, 12)
            y = x + rng.normal(0, 1e-3 * inst.lam, 20)
            gx, gy = inst.grad_scaled(x), inst.grad_scaled(y)
            assert np.all(gx[12:] == 0)
            assert np.linalg.norm(gx - gy) <= inst.L * np.linalg.norm(x - y) * (1 + 1e-6)
            assert inst.eval_scaled(x) >= inst.eval_scaled(np.zeros(20)) - inst.Delta
            if wc.prog(x[:12] / inst.lam, 1) < 12:
                assert gx @ gx > 2 * inst.eps

    def test_json_round_trip(self):
        K, a = wc.proof_window(3)
        inst = wc.build_instance(1.0, wc.delta_for_chain(24, 1.0, 1e-3, K, a, "new"), 1e-3, 3, 0.2, 500)
        doc = json.loads(inst.to_json())
        assert doc["constants"]["ell1"] == inst.consts.ell1
        assert wc.ObjectiveInstance.from_json(inst.to_json()) == inst
