"""Polynomial potentials, interpolation, and affine support matching."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from betatransport import (
    AffineMap,
    ConfigurationError,
    Potential,
    interpolate,
    match_supports,
    solve_equilibrium,
)

coeff_lists = st.lists(
    st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False),
    min_size=1, max_size=7)


class TestPotential:
    def test_rejects_empty_coefficients(self):
        with pytest.raises(ConfigurationError):
            Potential((), 2.0)

    @pytest.mark.parametrize("bad", [float("nan"), float("inf")])
    def test_rejects_nonfinite_coefficients(self, bad):
        with pytest.raises(ConfigurationError):
            Potential((0.0, bad), 2.0)

    @pytest.mark.parametrize("beta", [0.0, -1.0, float("nan")])
    def test_rejects_bad_beta(self, beta):
        with pytest.raises(ConfigurationError):
            Potential((0.0, 0.0, 0.5), beta)

    def test_degree_ignores_trailing_zeros(self):
        assert Potential((1.0, 2.0, 0.0, 0.0), 1.0).degree == 1

    def test_confinement_flags(self):
        assert Potential((0.0, 0.0, 0.5), 2.0).is_confining
        assert not Potential((0.0, 1.0), 2.0).is_confining
        assert not Potential((0.0, 0.0, -0.5), 2.0).is_confining
        assert not Potential((0.0, 0.0, 0.0, 1.0), 2.0).is_confining

    def test_require_confining_raises_with_context(self):
        with pytest.raises(ConfigurationError, match="even degree"):
            Potential((0.0, 1.0), 2.0).require_confining("test potential")

    def test_evaluation_matches_polyval(self):
        V = Potential((1.0, -2.0, 0.5, 0.25), 2.0)
        x = np.linspace(-3, 3, 11)
        expected = 1.0 - 2.0 * x + 0.5 * x**2 + 0.25 * x**3
        np.testing.assert_allclose(V(x), expected, atol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(coeffs=coeff_lists, x=st.floats(-2.0, 2.0, allow_nan=False))
    def test_derivative_matches_finite_difference(self, coeffs, x):
        V = Potential(tuple(coeffs), 2.0)
        h = 1e-6
        fd = (V(x + h) - V(x - h)) / (2 * h)
        assert abs(V(x, 1) - fd) < 1e-4 * (1.0 + abs(fd))

    def test_high_orders_consistent(self):
        V = Potential((0.0, 0.0, 0.5, 0.0, 0.1), 2.0)
        x = np.linspace(-2, 2, 7)
        np.testing.assert_allclose(V(x, 2), 1.0 + 1.2 * x**2, atol=1e-14)
        np.testing.assert_allclose(V(x, 3), 2.4 * x, atol=1e-14)


class TestInterpolate:
    def test_endpoints(self, gauss2, quartic_w2):
        assert interpolate(gauss2, quartic_w2, 0.0).coeffs[: 3] == gauss2.coeffs
        Vt = interpolate(gauss2, quartic_w2, 1.0)
        assert Vt.coeffs[4] == pytest.approx(0.1)

    def test_affine_in_t(self, gauss2, quartic_w2):
        V_half = interpolate(gauss2, quartic_w2, 0.5)
        assert V_half.coeffs[4] == pytest.approx(0.05)

    def test_beta_mismatch_rejected(self, gauss2):
        with pytest.raises(ConfigurationError, match="beta"):
            interpolate(gauss2, Potential((0.0, 1.0), 1.0), 0.5)


class TestAffineMap:
    def test_inverse_roundtrip(self):
        L = AffineMap(2.5, -0.75)
        x = np.linspace(-4, 4, 9)
        np.testing.assert_allclose(L.inverse()(L(x)), x, atol=1e-14)

    def test_identity(self):
        ident = AffineMap.identity()
        assert ident(3.25) == 3.25

    def test_degenerate_scale_rejected(self):
        with pytest.raises(ConfigurationError):
            AffineMap(0.0, 1.0)

    @settings(max_examples=50, deadline=None)
    @given(scale=st.floats(0.1, 10.0), shift=st.floats(-5.0, 5.0),
           x=st.floats(-10.0, 10.0))
    def test_inverse_property(self, scale, shift, x):
        L = AffineMap(scale, shift)
        assert L.inverse()(L(x)) == pytest.approx(x, abs=1e-9)


class TestMatchSupports:
    def test_rescaled_model_lands_on_source_support(self, gauss2, quartic_w2,
                                                    mu_gauss2, mu_quartic2):
        L, wt = match_supports(gauss2, quartic_w2,
                               (mu_gauss2.a, mu_gauss2.b),
                               (mu_quartic2.a, mu_quartic2.b))
        mu_t = solve_equilibrium(interpolate(gauss2, wt, 1.0))
        assert mu_t.a == pytest.approx(mu_gauss2.a, abs=1e-7)
        assert mu_t.b == pytest.approx(mu_gauss2.b, abs=1e-7)

    def test_maps_target_onto_source_interval(self, mu_gauss2, mu_quartic2,
                                              gauss2, quartic_w2):
        L, _ = match_supports(gauss2, quartic_w2,
                              (mu_gauss2.a, mu_gauss2.b),
                              (mu_quartic2.a, mu_quartic2.b))
        assert L(mu_quartic2.a) == pytest.approx(mu_gauss2.a, abs=1e-12)
        assert L(mu_quartic2.b) == pytest.approx(mu_gauss2.b, abs=1e-12)

    def test_zero_perturbation_is_identity(self, gauss2, mu_gauss2):
        W0 = Potential((0.0,), 2.0)
        L, wt = match_supports(gauss2, W0, (mu_gauss2.a, mu_gauss2.b),
                               (mu_gauss2.a, mu_gauss2.b))
        assert L.scale == pytest.approx(1.0)
        assert L.shift == pytest.approx(0.0)
        assert max(abs(c) for c in wt.coeffs) < 1e-12
