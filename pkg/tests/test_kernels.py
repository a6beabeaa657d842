import math

import numpy as np
import pytest

from lbopt import kernels as kr


class TestKernelParam:
    def test_accepts_range(self):
        assert kr.KernelParam(1.5) == 1.5
        assert kr.KernelParam(math.e) == math.e

    @pytest.mark.parametrize("a", [1.0, 0.5, 3.0, -2.0])
    def test_rejects_outside(self, a):
        with pytest.raises(ValueError):
            kr.KernelParam(a)

    def test_psi_validates_a(self):
        with pytest.raises(ValueError):
            kr.psi(1.0, 1.0)


class TestPsi:
    def test_flat_branch(self):
        assert kr.psi(1.5, 0.5) == 0.0
        assert kr.psi_d1(1.5, 0.4) == 0.0
        assert kr.psi_d2(1.5, -3.0) == 0.0

    def test_value_at_one(self):
        assert kr.psi(math.e, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_value_at_ten(self):
        # mpmath at 30 digits: exp(1 - 1/361)
        assert kr.psi(math.e, 10.0) == pytest.approx(2.71076238145304751, rel=1e-14)

    def test_first_derivative_at_one(self):
        assert kr.psi_d1(math.e, 1.0) == pytest.approx(4.0, rel=1e-14)

    def test_vectorized_shape(self):
        x = np.linspace(-1, 3, 12).reshape(3, 4)
        v, d1, d2 = kr.psi_all(1.25, x)
        assert v.shape == d1.shape == d2.shape == (3, 4)
        np.testing.assert_allclose(v.ravel(), [kr.psi(1.25, t) for t in x.ravel()])

    def test_large_input_tends_to_a(self):
        assert kr.psi(1.5, 1e12) == pytest.approx(1.5, rel=1e-12)
        assert np.isfinite(kr.psi_d2(1.5, 1e300))

    @pytest.mark.parametrize("a", [1.1, 1.25, 1.5, 2.0, math.e])
    def test_bounds_on_grid(self, a):
        x = np.linspace(-10, 10, 10_000)
        v, d1, d2 = kr.psi_all(a, x)
        amax, d1max, d2max = kr.psi_bounds(a)
        assert v.min() >= 0 and v.max() < a
        assert np.all(np.diff(v) >= 0)
        assert d1.min() >= 0 and d1.max() <= d1max
        assert np.abs(d2).max() <= d2max
        assert v[x >= 1].min() >= 1.0

    def test_derivatives_match_differences(self):
        x = np.linspace(0.6, 4.0, 200)
        step = 1e-6
        for a in (1.25, math.e):
            fd1 = (kr.psi(a, x + step) - kr.psi(a, x - step)) / (2 * step)
            fd2 = (kr.psi_d1(a, x + step) - kr.psi_d1(a, x - step)) / (2 * step)
            np.testing.assert_allclose(kr.psi_d1(a, x), fd1, rtol=1e-6, atol=1e-9)
            np.testing.assert_allclose(kr.psi_d2(a, x), fd2, rtol=1e-6, atol=1e-7)


class TestPhi:
    def test_values(self):
        # mpmath references
        assert kr.phi(0.0) == pytest.approx(2.06636567706124647, rel=1e-13)
        assert kr.phi(1.0) == pytest.approx(3.47705181170369447, rel=1e-13)
        assert kr.phi(40.0) == pytest.approx(4.13273135412249294, rel=1e-13)
        assert kr.phi_d1(0.0) == pytest.approx(math.sqrt(math.e), rel=1e-15)

    def test_bounds(self):
        x = np.linspace(-10, 10, 10_000)
        v = kr.phi(x)
        assert v.min() >= 0 and v.max() <= kr.PHI_MAX
        inner = np.abs(x) <= 0.99
        assert kr.phi_d1(x[inner]).min() >= 1 + 1e-3
        assert np.abs(kr.phi_d2(x)).max() <= kr.PHI_D2_MAX

    def test_second_derivative_formula(self):
        x = np.array([-2.0, 0.3, 1.7])
        np.testing.assert_allclose(kr.phi_d2(x), -x * kr.phi_d1(x))


class TestGamma:
    def test_values(self):
        assert kr.gamma_fn(0.7) == 0.0
        assert kr.gamma_fn(-1.0) == pytest.approx(1.0, rel=1e-15)
        assert kr.gamma_d1(-1.0) == pytest.approx(-2.0, rel=1e-15)

    def test_bounds(self):
        x = np.linspace(-10, 10, 10_000)
        g, d1, d2 = kr.gamma_all(x)
        assert g.min() >= 0
        assert d1.min() > kr.GAMMA_D1_MIN and d1.max() <= 0
        assert d2.min() >= 0 and d2.max() <= kr.GAMMA_D2_MAX + 1e-12
        assert d1[x <= -1].max() <= -2.0 + 1e-12

    def test_far_limit(self):
        assert kr.gamma_d1(-1e12) == pytest.approx(-math.e, rel=1e-9)

    def test_smooth_at_zero(self):
        h = 1e-5
        assert abs(kr.gamma_d1(-h)) < 1e-3
        assert abs(kr.gamma_d2(-h)) < 1e-3
