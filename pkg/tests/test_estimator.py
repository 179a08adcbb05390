import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from mixseries.densities import beta_shaped, cosine_bump, uniform
from mixseries.errors import BasisMismatch, DegenerateEstimate, InvalidA, InvalidDensity, PointOutsideInterval
from mixseries.estimator import (
    ProjectionEstimate,
    SelectionRule,
    a_upper_bound,
    bias_norm_direct,
    coefficients_from_means,
    estimate_coefficients,
    evaluate,
    in_basis_density,
    merge_estimates,
    postprocess_density,
    project_exact,
    psi_values,
    psi_values_via_T,
    select_m,
)
from mixseries.families import BetaScale, ExponentialIndicator, ExponentialMoment, GammaShape
from mixseries.legendre import Interval, build_basis, gauss_nodes
from mixseries.simulation import sample_mixture

from conftest import named_families


def basis_for(family, m=20):
    return build_basis(family.target_interval, m)


class TestCoefficients:
    def test_uniform_scale_first_coefficient(self, rng):
        fam = BetaScale(1, 3, 1)
        est = estimate_coefficients(fam, basis_for(fam, 1), rng.uniform(0, 2, 17), 1)
        assert est.c_hat[0] == pytest.approx(1 / math.sqrt(2), rel=1e-15)

    def test_indicator_below_threshold(self):
        fam = ExponentialIndicator(1, 2)
        est = estimate_coefficients(fam, basis_for(fam, 3), [0.1, 0.2, 0.49], 1)
        assert est.c_hat[0] == 0.0

    def test_basis_mismatch(self):
        fam = ExponentialIndicator(1, 2)
        with pytest.raises(BasisMismatch):
            estimate_coefficients(fam, build_basis(Interval(1, 2), 3), [1.0], 2)

    def test_order_and_data_checks(self):
        fam = GammaShape(1, 2)
        b = basis_for(fam, 3)
        with pytest.raises(ValueError):
            estimate_coefficients(fam, b, [1.0], 4)
        with pytest.raises(ValueError):
            estimate_coefficients(fam, b, [], 2)

    def test_unbiased_for_uniform(self):
        fam = ExponentialIndicator(1, 2)
        f = uniform(fam.theta_interval)
        basis = basis_for(fam, 5)
        exact = project_exact(fam, basis, f, 5).coeffs
        rng = np.random.default_rng(5)
        c = np.array([estimate_coefficients(fam, basis, sample_mixture(fam, f, 10**4, rng), 5).c_hat
                      for _ in range(200)])
        se = c.std(axis=0, ddof=1) / math.sqrt(200)
        assert np.all(np.abs(c.mean(axis=0) - exact) < 4 * se)

    def test_linearity_exact_for_indicator_data(self, rng):
        fam = ExponentialIndicator(1, 2)
        b = basis_for(fam, 6)
        d1, d2 = rng.exponential(0.7, 300), rng.exponential(0.7, 500)
        e1, e2 = estimate_coefficients(fam, b, d1, 6), estimate_coefficients(fam, b, d2, 6)
        both = estimate_coefficients(fam, b, np.concatenate([d1, d2]), 6)
        merged = merge_estimates(e1, e2)
        np.testing.assert_array_equal(merged.c_hat, both.c_hat)
        np.testing.assert_array_equal(both.c_hat, coefficients_from_means(b, (e1.g_sums + e2.g_sums) / 800, 6))
        np.testing.assert_allclose(both.c_hat, (300 * e1.c_hat + 500 * e2.c_hat) / 800, rtol=1e-12, atol=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(n1=st.integers(1, 50), n2=st.integers(1, 50), seed=st.integers(0, 2**32 - 1))
    def test_linearity_weighted_average(self, n1, n2, seed):
        fam = BetaScale(1, 2, 2)
        b = build_basis(fam.target_interval, 4)
        r = np.random.default_rng(seed)
        d1, d2 = r.uniform(0, 2, n1), r.uniform(0, 2, n2)
        e1, e2 = estimate_coefficients(fam, b, d1, 4), estimate_coefficients(fam, b, d2, 4)
        both = estimate_coefficients(fam, b, np.concatenate([d1, d2]), 4)
        avg = (n1 * e1.c_hat + n2 * e2.c_hat) / (n1 + n2)
        np.testing.assert_allclose(both.c_hat, avg, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("fam", [ExponentialIndicator(1, 2), BetaScale(1, 2, 2), ExponentialMoment(1, 2)],
                             ids=lambda f: f.name)
    def test_exact_means_recover_projection(self, fam):
        f = cosine_bump(fam.theta_interval)
        m = 6
        b = basis_for(fam, m)
        t, w = gauss_nodes(fam.theta_interval, 60)
        means = []
        for j in range(1, m + 1):
            inner = []
            for ti in t:
                lo, hi = fam.kernel_support(ti)
                integrand = lambda x: float(fam.g(j, x)) * float(fam.kernel_density(ti, x))  # noqa: E731
                start = j - 0.5 if isinstance(fam, ExponentialIndicator) else lo
                inner.append(quad(integrand, start, hi, epsabs=1e-14, epsrel=1e-13, limit=200)[0])
            means.append(math.fsum(w * f(t) * np.array(inner)))
        c = coefficients_from_means(b, means, m)
        np.testing.assert_allclose(c, project_exact(fam, b, f, m).coeffs, atol=1e-8)


class TestPsi:
    def test_orthonormal(self, family):
        b = basis_for(family, 15)
        x, w = family.quadrature(15 + 16)
        p = psi_values(family, b, x)
        assert np.max(np.abs((p * w) @ p.T - np.eye(15))) < 1e-8

    def test_first_function_exponential(self):
        fam = ExponentialIndicator(1, 2)
        b = basis_for(fam, 2)
        t = np.linspace(1, 2, 5)
        np.testing.assert_allclose(psi_values(fam, b, t)[0], b.Q[0, 0] * np.exp(-t / 2), rtol=1e-14)

    def test_two_paths_agree(self, family):
        b = basis_for(family, 20)
        t = np.linspace(family.a, family.b, 33)
        np.testing.assert_allclose(psi_values(family, b, t), psi_values_via_T(family, b, t), rtol=1e-9, atol=1e-9)

    def test_outside(self):
        fam = GammaShape(1, 2)
        with pytest.raises(PointOutsideInterval):
            psi_values(fam, basis_for(fam, 2), [2.5])


class TestEvaluate:
    def test_uniform_recovery(self):
        for fam in (GammaShape(1, 3), BetaScale(1, 3, 2)):
            b = basis_for(fam, 1)
            est = ProjectionEstimate(fam, b, 1, np.array([1 / math.sqrt(2)]), 10, np.zeros(1))
            assert evaluate(est, 1.7) == pytest.approx(0.5, rel=1e-14)
            assert isinstance(evaluate(est, 1.7), float)
            np.testing.assert_allclose(est(np.array([1.0, 3.0])), [0.5, 0.5], rtol=1e-14)

    def test_outside(self):
        fam = GammaShape(1, 3)
        est = ProjectionEstimate(fam, basis_for(fam, 1), 1, np.ones(1), 1, np.ones(1))
        with pytest.raises(PointOutsideInterval):
            evaluate(est, 3.5)

    def test_parseval(self, family, rng):
        f = cosine_bump(family.theta_interval)
        b = basis_for(family, 5)
        est = estimate_coefficients(family, b, sample_mixture(family, f, 5000, rng), 5)
        x, w = family.quadrature(40)
        assert math.fsum(w * est(x) ** 2) == pytest.approx(math.fsum(est.c_hat**2), rel=1e-10)

    def test_save_and_export(self, tmp_path, rng):
        fam = ExponentialIndicator(1, 2)
        est = estimate_coefficients(fam, basis_for(fam, 3), rng.exponential(0.7, 100), 3, {"seed": 9})
        est.save(tmp_path / "e.json")
        d = json.loads((tmp_path / "e.json").read_text())
        assert d["m"] == 3 and d["n"] == 100 and d["provenance"] == {"seed": 9}
        assert d["c_hat"] == [float(c) for c in est.c_hat]
        est.export_csv(tmp_path / "e.csv", comments=["x"])
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines[:2] == ["# x", "t,f_hat"] and len(lines) == 514


class TestProjection:
    def test_uniform_in_first_space(self):
        fam = BetaScale(1, 3, 1)
        p = project_exact(fam, basis_for(fam, 1), uniform(fam.theta_interval), 1)
        assert p.coeffs[0] == pytest.approx(1 / math.sqrt(2), rel=1e-14)
        assert p.bias < 1e-7

    def test_in_basis_density_has_no_bias(self, family):
        b = basis_for(family, 6)
        f = in_basis_density(family, [1.0, 0.0, 0.05], b)
        for m in (3, 4, 6):
            assert project_exact(family, b, f, m).bias < 1e-6
        np.testing.assert_allclose(project_exact(family, b, f, 3).coeffs, f.exact_coeffs, rtol=1e-10, atol=1e-12)

    def test_bias_paths_agree(self, family):
        b = basis_for(family, 8)
        f = cosine_bump(family.theta_interval)
        for m in range(1, 9):
            p = project_exact(family, b, f, m)
            assert bias_norm_direct(family, b, f, m) == pytest.approx(p.bias, rel=1e-6, abs=1e-8)

    @settings(max_examples=15, deadline=None)
    @given(p=st.floats(1.0, 6.0), q=st.floats(1.0, 6.0))
    def test_bias_nonincreasing(self, p, q):
        fam = ExponentialIndicator(1, 2)
        b = build_basis(fam.target_interval, 8)
        f = beta_shaped(fam.theta_interval, p, q)
        bias = [project_exact(fam, b, f, m).bias for m in range(1, 9)]
        assert all(y <= x + 1e-9 for x, y in zip(bias, bias[1:]))

    def test_negative_in_basis_rejected(self):
        fam = GammaShape(1, 2)
        with pytest.raises(InvalidDensity):
            in_basis_density(fam, [1.0, 5.0])


class TestSelection:
    def test_bound_for_exponential_indicator(self):
        assert a_upper_bound("logn", ExponentialIndicator(1, 2)) == pytest.approx(0.1885, abs=1e-4)

    def test_logn(self):
        assert select_m(SelectionRule("logn", 0.1), 10**6, ExponentialIndicator(1, 2)) == 1

    def test_loglog(self):
        assert select_m(SelectionRule("loglog", 0.2), 10**6, GammaShape(1, 2)) == 1
        assert select_m(SelectionRule("loglog", 0.24), 10**40, GammaShape(1, 2)) == math.floor(
            0.24 * math.log(1e40) / math.log(math.log(1e40)))

    def test_invalid(self):
        with pytest.raises(InvalidA):
            select_m(SelectionRule("logn", 0.2), 1000, ExponentialIndicator(1, 2))
        with pytest.raises(InvalidA):
            select_m(SelectionRule("logn", 0.1), 1000, GammaShape(1, 2))
        with pytest.raises(InvalidA):
            select_m(SelectionRule("loglog", 0.1), 1000, ExponentialIndicator(1, 2))
        with pytest.raises(InvalidA):
            SelectionRule("logn", -1.0)
        with pytest.raises(ValueError):
            select_m(SelectionRule("logn", 0.1), 2, ExponentialIndicator(1, 2))

    def test_default_is_half_bound(self):
        fam = ExponentialIndicator(1, 2)
        rule = SelectionRule.default(fam)
        assert rule.regime == "logn" and rule.A == pytest.approx(0.5 * a_upper_bound("logn", fam))
        assert SelectionRule.default(GammaShape(1, 2)) == SelectionRule("loglog", 0.125)

    def test_parse(self):
        assert SelectionRule.parse("logn:0.05") == SelectionRule("logn", 0.05)
        assert str(SelectionRule("loglog", 0.2)) == "loglog:0.2"
        with pytest.raises(ValueError):
            SelectionRule.parse("sqrt:1")


class TestPostprocess:
    def test_raw_matches_evaluate(self, rng):
        fam = ExponentialIndicator(1, 2)
        est = estimate_coefficients(fam, basis_for(fam, 4), rng.exponential(0.7, 500), 4)
        t = np.linspace(1, 2, 9)
        np.testing.assert_array_equal(postprocess_density(est, "raw")(t), evaluate(est, t))

    def test_clip_keeps_a_density(self):
        fam = GammaShape(1, 3)
        est = ProjectionEstimate(fam, basis_for(fam, 1), 1, np.array([1 / math.sqrt(2)]), 10, np.zeros(1))
        t = np.linspace(1, 3, 11)
        np.testing.assert_allclose(postprocess_density(est, "clip")(t), 0.5, rtol=1e-12)

    def test_clip_integrates_to_one(self, rng):
        fam = ExponentialIndicator(1, 2)
        est = estimate_coefficients(fam, basis_for(fam, 4), rng.exponential(0.7, 300), 4)
        assert np.any(est(np.linspace(1, 2, 200)) < 0)
        g = postprocess_density(est, "clip")
        total = sum(quad(lambda s: g(s), lo, hi, epsabs=1e-13, limit=200)[0]
                    for lo, hi in zip(np.linspace(1, 2, 21)[:-1], np.linspace(1, 2, 21)[1:]))
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_degenerate(self):
        fam = GammaShape(1, 3)
        est = ProjectionEstimate(fam, basis_for(fam, 1), 1, np.array([-1.0]), 10, np.zeros(1))
        with pytest.raises(DegenerateEstimate):
            postprocess_density(est, "clip")
        with pytest.raises(ValueError):
            postprocess_density(est, "smooth")


class TestPointwiseUnbiasedness:
    @pytest.mark.parametrize("fam", named_families(), ids=lambda f: f.name)
    def test_mean_estimate_matches_projection(self, fam):
        f = cosine_bump(fam.theta_interval)
        basis = basis_for(fam, 5)
        t = np.linspace(fam.a, fam.b, 33)
        rng = np.random.default_rng(2024)
        c = np.array([estimate_coefficients(fam, basis, sample_mixture(fam, f, 2000, rng), 5).c_hat
                      for _ in range(500)])
        for m in (1, 3, 5):
            psi = psi_values(fam, basis, t, m)
            vals = c[:, :m] @ psi
            proj = project_exact(fam, basis, f, m).coeffs @ psi
            se = vals.std(axis=0, ddof=1) / math.sqrt(500)
            assert np.all(np.abs(vals.mean(axis=0) - proj) < 4 * se + 1e-12)
