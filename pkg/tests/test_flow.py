"""Scalar flow, transport map tabulation, and the 1/N correction flow."""
import numpy as np
import pytest

from betatransport import (
    ConfigurationError,
    Potential,
    apply_map,
    build_field_set,
    build_transport_map,
    flow_correction,
    flow_scalar,
    map_from_dict,
    map_to_dict,
    sample_gaussian_tridiagonal,
    solve_equilibrium,
)


@pytest.fixture(scope="module")
def tmap_rescale():
    """Gaussian to Gaussian with a larger spring constant."""
    V = Potential((0.0, 0.0, 0.5), 2.0)
    W = Potential((0.0, 0.0, 0.125), 2.0)
    fields = build_field_set(V, W, n_time=9, n_y=16)
    return build_transport_map(fields, n_grid=256)


class TestGaussianRescale:
    def test_map_is_linear_quantile_map(self, tmap_rescale):
        # target model 0.625 x^2 has support radius sqrt(2 / 0.625)
        ratio = np.sqrt(2.0 / 0.625) / 2.0
        x = np.linspace(-1.9, 1.9, 101)
        np.testing.assert_allclose(tmap_rescale(x), ratio * x, atol=1e-7)

    def test_derivative_is_the_ratio(self, tmap_rescale):
        ratio = np.sqrt(2.0 / 0.625) / 2.0
        x = np.linspace(-1.5, 1.5, 31)
        np.testing.assert_allclose(tmap_rescale.derivative(x), ratio,
                                   atol=1e-7)


class TestPushforward:
    def test_cdf_identity(self, tmap_gq2, mu_gauss2, mu_quartic2):
        x = np.linspace(mu_gauss2.a + 1e-3, mu_gauss2.b - 1e-3, 201)
        lhs = mu_quartic2.cdf(tmap_gq2(x))
        rhs = mu_gauss2.cdf(x)
        assert np.max(np.abs(lhs - rhs)) < 2e-6

    def test_map_is_strictly_increasing(self, tmap_gq2):
        x = np.linspace(tmap_gq2.grid[0], tmap_gq2.grid[-1], 512)
        assert np.all(np.diff(tmap_gq2(x)) > 0)
        assert np.all(tmap_gq2.derivative(x) > 0)

    def test_derivative_matches_finite_difference(self, tmap_gq2):
        # the finite difference sees the piecewise interpolant, so agreement
        # is limited by the tabulation step, not the flow tolerance
        x = np.linspace(-1.8, 1.8, 41)
        h = 1e-6
        fd = (tmap_gq2(x + h) - tmap_gq2(x - h)) / (2 * h)
        np.testing.assert_allclose(tmap_gq2.derivative(x), fd, atol=1e-4)


class TestIdentityMap:
    def test_zero_perturbation(self, gauss2):
        fields = build_field_set(gauss2, Potential((0.0,), 2.0),
                                 n_time=3, degree=32, n_y=8)
        tmap = build_transport_map(fields, n_grid=128)
        x = np.linspace(-2.5, 2.5, 101)
        np.testing.assert_allclose(tmap(x), x, atol=1e-9)


class TestFlowScalar:
    def test_matches_tabulated_map(self, fields_gq2, tmap_gq2):
        x = np.array([-1.7, -0.6, 0.0, 0.9, 1.8])
        vals, derivs = flow_scalar(fields_gq2, x)
        matched = tmap_gq2.rescaling.inverse()(vals)
        np.testing.assert_allclose(tmap_gq2(x), matched, atol=1e-8)


class TestApplyMap:
    def test_without_correction_equals_leading(self, tmap_gq2):
        rows = sample_gaussian_tridiagonal(
            Potential((0.0, 0.0, 0.5), 2.0), 40, 12, 3).values
        mapped = apply_map(tmap_gq2, rows, include_correction=False)
        expected = tmap_gq2.rescaling.inverse()(tmap_gq2.leading(rows))
        np.testing.assert_allclose(mapped.values, expected, atol=1e-12)
        assert mapped.N == 40
        assert not mapped.include_correction

    def test_correction_preserves_order(self, tmap_gq2):
        rows = sample_gaussian_tridiagonal(
            Potential((0.0, 0.0, 0.5), 2.0), 35, 24, 9).values
        mapped = apply_map(tmap_gq2, rows, include_correction=True)
        assert np.all(np.diff(mapped.values, axis=1) >= 0)

    def test_correction_is_order_one_over_n(self, tmap_gq2):
        rows = sample_gaussian_tridiagonal(
            Potential((0.0, 0.0, 0.5), 2.0), 50, 16, 21).values
        with_c = apply_map(tmap_gq2, rows, include_correction=True)
        without = apply_map(tmap_gq2, rows, include_correction=False)
        shift = np.abs(with_c.values - without.values)
        assert 0 < np.max(shift) < 5.0 / 50


class TestFlowCorrection:
    def test_leading_part_agrees_with_scalar_flow(self, fields_gq2):
        rows = sample_gaussian_tridiagonal(
            Potential((0.0, 0.0, 0.5), 2.0), 30, 8, 13).values
        X0, X1 = flow_correction(fields_gq2, rows)
        scalar_vals, _ = flow_scalar(fields_gq2, rows.ravel())
        np.testing.assert_allclose(X0, scalar_vals.reshape(rows.shape),
                                   atol=1e-6)
        assert np.all(np.isfinite(X1))

    def test_correction_vanishes_for_zero_perturbation(self, gauss2):
        fields = build_field_set(gauss2, Potential((0.0,), 2.0),
                                 n_time=3, degree=32, n_y=8)
        rows = sample_gaussian_tridiagonal(gauss2, 20, 6, 2).values
        X0, X1 = flow_correction(fields, rows)
        np.testing.assert_allclose(X0, rows, atol=1e-9)
        np.testing.assert_allclose(X1, 0.0, atol=1e-9)


class TestMapSerialization:
    def test_round_trip_is_exact(self, tmap_gq2):
        back = map_from_dict(map_to_dict(tmap_gq2))
        np.testing.assert_array_equal(back.grid, tmap_gq2.grid)
        np.testing.assert_array_equal(back.x0_values, tmap_gq2.x0_values)
        x = np.linspace(-2.4, 2.4, 67)
        np.testing.assert_array_equal(back(x), tmap_gq2(x))

    def test_rejects_unknown_format(self, tmap_gq2):
        d = map_to_dict(tmap_gq2)
        d["format"] = "not/a/map"
        with pytest.raises(ConfigurationError, match="format"):
            map_from_dict(d)
