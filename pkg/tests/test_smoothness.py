import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixseries.densities import MixingDensity, beta_shaped, cosine_bump, uniform
from mixseries.legendre import Interval
from mixseries.smoothness import (
    ModulusQuery,
    certify_class,
    default_t_grid,
    step_weight,
    symmetric_difference,
    weighted_modulus,
)

I = Interval(0.0, 1.0)


class Fn:
    """Plain callable with an interval, enough for symmetric_difference."""

    def __init__(self, fn, interval=I):
        self.fn = fn
        self.interval = interval

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))


class TestSymmetricDifference:
    def test_linear_first_order(self):
        # sum_i C(1,i)(-1)^i f(x + (i - 1/2) h) = f(x - h/2) - f(x + h/2)
        assert symmetric_difference(Fn(lambda t: t), 1, 0.1, 0.5) == pytest.approx(-0.1, abs=1e-15)

    def test_quadratic_second_order(self):
        for h in (0.1, 0.01, 0.3):
            assert symmetric_difference(Fn(lambda t: t**2), 2, h, 0.5) == pytest.approx(2 * h * h, rel=1e-12)

    def test_cubic_third_order(self):
        # leading term of the r-th difference of t^r is (-1)^r r! h^r
        assert symmetric_difference(Fn(lambda t: t**3), 3, 0.1, 0.5) == pytest.approx(-6e-3, rel=1e-10)

    def test_vanishes_outside(self):
        f = Fn(lambda t: t)
        assert symmetric_difference(f, 1, 0.2, 0.05) == 0.0
        assert symmetric_difference(f, 2, 0.2, 0.85) == 0.0
        assert symmetric_difference(Fn(lambda t: t**2), 2, 0.2, 0.8) != 0.0

    def test_broadcast(self):
        x = np.linspace(0.2, 0.8, 7)
        d = symmetric_difference(Fn(lambda t: t), 1, np.full(7, 0.1), x)
        np.testing.assert_allclose(d, -0.1, atol=1e-15)

    def test_polynomial_killed(self):
        x = np.linspace(0.3, 0.7, 9)
        d = symmetric_difference(Fn(lambda t: 1 + t - 2 * t**2), 3, 0.05, x)
        np.testing.assert_allclose(d, 0.0, atol=1e-13)

    def test_order(self):
        with pytest.raises(ValueError):
            symmetric_difference(Fn(lambda t: t), 0, 0.1, 0.5)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(-2.0, 2.0), st.integers(1, 4), st.floats(1e-3, 0.2), st.floats(0.1, 0.9))
    def test_linear_in_f(self, a, b, r, h, x):
        f = Fn(np.sin)
        g = Fn(lambda t: t**4)
        fg = Fn(lambda t: a * np.sin(t) + b * t**4)
        lhs = symmetric_difference(fg, r, h, x)
        rhs = a * symmetric_difference(f, r, h, x) + b * symmetric_difference(g, r, h, x)
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestWeightedModulus:
    def test_step_weight(self):
        np.testing.assert_allclose(step_weight([0.0, 0.5, 1.0], I), [0.0, 0.5, 0.0])

    @pytest.mark.parametrize("r", [1, 2, 3, 4])
    def test_constant_is_zero(self, r):
        curve = weighted_modulus(ModulusQuery(uniform(Interval(1.0, 3.0)), r))
        assert np.all(curve.omega == 0.0)

    def test_monotone_nonnegative(self):
        curve = weighted_modulus(ModulusQuery(cosine_bump(I), 2))
        assert np.all(curve.omega >= 0)
        assert np.all(np.diff(curve.omega) >= 0)
        assert curve.omega[-1] > 0

    def test_quadratic_third_order_vanishes(self):
        f = beta_shaped(I, 2, 2)  # 6 t (1 - t)
        curve = weighted_modulus(ModulusQuery(f, 3, t_grid=(0.01, 0.1, 0.5)))
        assert np.max(curve.omega) < 1e-12

    def test_refining_h_never_decreases(self):
        f = beta_shaped(I, 3, 2)
        coarse = weighted_modulus(ModulusQuery(f, 1, t_grid=(0.05, 0.3), h_subdivisions=8))
        # a grid of 15 points contains the 8-point grid
        fine = weighted_modulus(ModulusQuery(f, 1, t_grid=(0.05, 0.3), h_subdivisions=15))
        assert np.all(fine.omega >= coarse.omega * (1 - 1e-13))

    def test_smooth_scaling(self):
        f = cosine_bump(I)
        t = (1e-3, 1e-2)
        w = weighted_modulus(ModulusQuery(f, 2, t_grid=t)).omega
        assert math.log(w[1] / w[0]) / math.log(10) == pytest.approx(2.0, abs=0.05)

    def test_query_validation(self):
        f = uniform(I)
        with pytest.raises(ValueError):
            ModulusQuery(f, 0)
        with pytest.raises(ValueError):
            ModulusQuery(f, 1, t_grid=(0.0,))
        with pytest.raises(ValueError):
            ModulusQuery(f, 1, n_nodes=64)

    def test_csv(self, tmp_path):
        curve = weighted_modulus(ModulusQuery(cosine_bump(I), 1, t_grid=(0.1, 0.2)))
        curve.to_csv(tmp_path / "m.csv", 1.0, 3.0, comments=["demo"])
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0] == "# demo" and lines[1] == "t,omega_hat,C_t_alpha"
        assert len(lines) == 4
        assert float(lines[3].split(",")[2]) == pytest.approx(0.6)


def jump_density(interval=I):
    mid = interval.midpoint
    return MixingDensity(lambda t: np.where(t < mid, 0.5, 1.5), interval, 1.5, breakpoints=(mid,), label="jump")


class TestCertify:
    def test_uniform_norm(self):
        f = uniform(I)
        assert certify_class(f, 1.5, 1.0).consistent
        cert = certify_class(f, 1.5, 0.999)
        assert cert.verdict == "violated" and cert.witness == "norm"

    def test_jump_violates_smooth_class(self):
        cert = certify_class(jump_density(), 1.0, 2.0)
        assert cert.verdict == "violated"
        assert cert.witness == pytest.approx(default_t_grid()[0])
        assert cert.margin < 0 and cert.r == 2

    def test_jump_rate(self):
        # a jump of size s gives omega(t) ~ s sqrt(t) up to a constant
        curve = weighted_modulus(ModulusQuery(jump_density(), 1, t_grid=(1e-3, 1e-1)))
        slope = math.log(curve.omega[1] / curve.omega[0]) / math.log(100)
        assert slope == pytest.approx(0.5, abs=0.05)

    def test_smooth_density_consistent(self):
        cert = certify_class(cosine_bump(I), 1.0, 20.0)
        assert cert.consistent and cert.margin > 0 and cert.witness is None

    def test_parameters(self):
        with pytest.raises(ValueError):
            certify_class(uniform(I), 0.0, 1.0)
