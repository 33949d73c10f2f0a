"""Tests for the built-in models and structural condition checks."""

import math

import numpy as np
import pytest

import settlekit as sk
from settlekit.systems import Modulus, ModulusPair, make_unstable_cubic


class TestSignedPower:
    def test_zero(self):
        assert sk.signed_power(0.0, 1.0 / 3.0) == 0.0

    def test_negative_cube_root(self):
        assert sk.signed_power(-8.0, 1.0 / 3.0) == pytest.approx(-2.0, abs=1e-12)

    def test_four_thirds(self):
        # 8^(4/3) = 8 * 8^(1/3) = 16
        assert sk.signed_power(8.0, 4.0 / 3.0) == pytest.approx(16.0, rel=1e-14)

    def test_odd(self):
        x = np.linspace(-3, 3, 41)
        for p in (0.5, 1.0 / 3.0, 1.5):
            assert np.allclose(sk.signed_power(-x, p), -sk.signed_power(x, p))

    def test_invalid_exponent(self):
        with pytest.raises(ValueError):
            sk.signed_power(1.0, 0.0)


class TestExample1:
    def setup_method(self):
        self.m = sk.make_example1()

    def test_vanishes_at_origin(self):
        zero = np.zeros(2)
        for t in (0.0, 1.0, 10.0):
            assert np.all(self.m.f(zero, t) == 0.0)
            assert np.all(self.m.g(zero, t) == 0.0)

    def test_drift_value(self):
        f = self.m.f(np.array([1.0, 0.0]), 0.0)
        assert f[0] == pytest.approx(-1.5, abs=1e-15)
        assert f[1] == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_gain_signed_cube_roots(self):
        g = self.m.g(np.array([1.0, -8.0]), 0.0)
        assert np.allclose(g, np.diag([1.0, -2.0]), atol=1e-14)

    def test_batch_broadcast(self):
        x = np.random.default_rng(0).normal(size=(10, 2))
        assert self.m.f(x, 0.0).shape == (10, 2)
        assert self.m.g(x, 0.0).shape == (10, 2, 2)

    def test_axis_restricted_oddness(self):
        for x1 in (0.3, 1.7):
            a = self.m.f(np.array([x1, 0.0]), 0.0)
            b = self.m.f(np.array([-x1, 0.0]), 0.0)
            assert np.allclose(a, -b)


class TestExample2:
    def test_open_loop_origin(self):
        m = sk.make_example2()
        assert m.f(np.zeros(1), 0.0)[0] == 0.0
        assert m.g(np.zeros(1), 0.0)[0, 0] == 0.0

    def test_gain_value(self):
        m = sk.make_example2()
        expected = 0.5 * 2.0 * (math.pi / 4.0) ** (1.0 / 3.0)
        assert m.g(np.array([1.0]), 0.0)[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_open_loop_drift_value(self):
        m = sk.make_example2()
        expected = 3.0 * (math.pi / 4.0) ** 2 / 2.0 - 0.5
        assert m.f(np.array([1.0]), 0.0)[0] == pytest.approx(expected, rel=1e-12)

    def test_controller_zero_at_origin(self):
        assert sk.stabilizing_controller(0.0) == 0.0

    def test_closed_loop_identity_spot_values(self):
        # dV/dx f(x) = -|arctan x|^(4/3) with V = (arctan x)^2 / 2
        m = sk.get_model("example2-closed")

        def lie(x):
            xv = np.array([x])
            grad = np.arctan(x) / (1.0 + x * x)
            return grad * m.f(xv, 0.0)[0]

        assert lie(1.0) == pytest.approx(-(math.pi / 4.0) ** (4.0 / 3.0), abs=1e-12)
        assert lie(-3.0) == pytest.approx(-abs(math.atan(-3.0)) ** (4.0 / 3.0), abs=1e-12)

    def test_closed_loop_identities_on_grid(self):
        m = sk.get_model("example2-closed")
        x = np.linspace(-10.0, 10.0, 1001)
        grad = np.arctan(x) / (1.0 + x * x)
        lie_f = grad * m.f(x[:, None], 0.0)[:, 0]
        lie_g = grad * m.g(x[:, None], 0.0)[:, 0, 0]
        target = np.abs(np.arctan(x)) ** (4.0 / 3.0)
        assert np.max(np.abs(lie_f + target)) <= 1e-9
        assert np.max(np.abs(lie_g - 0.5 * target)) <= 1e-9

    def test_closed_loop_oddness(self):
        m = sk.get_model("example2-closed")
        x = np.linspace(0.1, 8.0, 25)[:, None]
        assert np.allclose(m.f(-x, 0.0), -m.f(x, 0.0), atol=1e-12)

    def test_gain_scale_zero_allowed(self):
        m = sk.make_example2(noise_gain_scale=0.0)
        assert np.all(m.g(np.array([2.0]), 0.0) == 0.0)


class TestRegistry:
    @pytest.mark.parametrize("name,n", [
        ("example1", 2), ("example2-open", 1), ("example2-closed", 1),
        ("unstable-cubic", 1),
    ])
    def test_known_names(self, name, n):
        m = sk.get_model(name)
        assert m.n == n and m.name == name

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            sk.get_model("nope")


class TestCheckOrigin:
    @pytest.mark.parametrize("name", ["example1", "example2-closed", "example2-open"])
    def test_builtin_models_pass(self, name):
        rep = sk.check_origin(sk.get_model(name), [0.0, 0.5, 2.0], tol=1e-15)
        assert rep.passed

    def test_constructed_failure(self):
        bad = sk.SystemModel(
            n=2, l=1,
            f=lambda x, t: np.broadcast_to(np.array([1.0, 0.0]), x.shape).copy(),
            g=lambda x, t: np.zeros(x.shape + (1,)), name="offset")
        rep = sk.check_origin(bad, [0.0, 1.0, 2.0], tol=1e-12)
        assert not rep.passed
        assert len(rep.violations) == 3


class TestModulus:
    def test_families(self):
        assert Modulus.linear(2.0)(0.5) == pytest.approx(1.0)
        assert Modulus.root(3.0, 0.5)(0.25) == pytest.approx(1.5)
        lo = Modulus.log_osgood(1.0)
        assert lo(0.0) == 0.0
        assert lo(0.1) == pytest.approx(0.1 * math.log(10.0))

    def test_sum_of_terms(self):
        mod = Modulus.root(4.0, 1.0 / 3.0) + Modulus.linear(2.0)
        assert mod(0.125) == pytest.approx(4.0 * 0.5 + 0.25)

    @pytest.mark.parametrize("ctor", [
        lambda: Modulus.linear(0.0),
        lambda: Modulus.root(1.0, 1.5),
        lambda: Modulus.root(1.0, 0.0),
    ])
    def test_invalid(self, ctor):
        with pytest.raises(ValueError):
            ctor()


class TestCheckOsgood:
    def test_linear_system_equality_margin(self):
        # f = -x with kappa(u) = u gives margin exactly 0 at every pair
        m = sk.SystemModel(n=1, l=1, f=lambda x, t: -x,
                           g=lambda x, t: np.zeros(x.shape + (1,)), name="lin")
        mp = ModulusPair(kappa=Modulus.linear(1.0), rho=Modulus.linear(1.0))
        rep = sk.check_osgood(m, mp, box_radius=2.0, n_pairs=200, t_grid=[0.0],
                              tol=1e-12, seed=5)
        assert rep.f_condition.worst_margin == 0.0
        assert rep.passed

    def test_example1_candidate_moduli_pass(self):
        m = sk.make_example1()
        mp = ModulusPair(kappa=Modulus.root(4.0, 1.0 / 3.0) + Modulus.linear(2.0),
                         rho=Modulus.root(8.0, 1.0 / 3.0) + Modulus.linear(4.0))
        rep = sk.check_osgood(m, mp, box_radius=2.0, n_pairs=20000,
                              t_grid=[0.0], tol=1e-9, seed=3)
        assert rep.passed
        assert rep.f_condition.worst_margin > 0.5

    def test_margin_symmetric_under_swap(self):
        m = sk.make_example1()
        mp = ModulusPair(kappa=Modulus.root(4.0, 1.0 / 3.0) + Modulus.linear(2.0),
                         rho=Modulus.root(8.0, 1.0 / 3.0) + Modulus.linear(4.0))
        rng = np.random.default_rng(1)
        x1 = rng.uniform(-2, 2, size=(50, 2))
        x2 = rng.uniform(-2, 2, size=(50, 2))
        d12 = np.linalg.norm(x1 - x2, axis=1)
        d21 = np.linalg.norm(x2 - x1, axis=1)
        m12 = mp.kappa(d12) - np.linalg.norm(m.f(x1, 0.0) - m.f(x2, 0.0), axis=1)
        m21 = mp.kappa(d21) - np.linalg.norm(m.f(x2, 0.0) - m.f(x1, 0.0), axis=1)
        assert np.array_equal(m12, m21)


class TestOsgoodDivergence:
    def test_linear_modulus_diverges_logarithmically(self):
        mp = ModulusPair(kappa=Modulus.linear(1.0), rho=Modulus.linear(1.0))
        rep = sk.check_osgood_divergence(mp, 1.0)
        assert rep.rho_diverging
        # I(delta) = ln(gamma/delta)
        for d, val in zip(rep.deltas, rep.rho_integral):
            assert val == pytest.approx(math.log(1.0 / d), abs=1e-8)

    def test_square_root_modulus_converges(self):
        mp = ModulusPair(kappa=Modulus.root(1.0, 0.5), rho=Modulus.root(1.0, 0.5))
        rep = sk.check_osgood_divergence(mp, 1.0)
        assert not rep.rho_diverging
        assert not rep.combined_diverging
        # I(delta) = 2 (sqrt(gamma) - sqrt(delta))
        assert rep.rho_integral[-1] == pytest.approx(
            2.0 * (1.0 - math.sqrt(rep.deltas[-1])), abs=1e-8)

    def test_log_osgood_modulus_diverges(self):
        mp = ModulusPair(kappa=Modulus.log_osgood(1.0), rho=Modulus.log_osgood(1.0))
        rep = sk.check_osgood_divergence(mp, 0.1)
        assert rep.rho_diverging
        # I(delta) = ln ln(1/delta) - ln ln(10) for gamma = 0.1
        for d, val in zip(rep.deltas, rep.rho_integral):
            expected = math.log(math.log(1.0 / d) / math.log(10.0))
            assert val == pytest.approx(expected, abs=1e-8)


def test_unstable_cubic_grows():
    m = make_unstable_cubic()
    assert m.f(np.array([2.0]), 0.0)[0] == 8.0
