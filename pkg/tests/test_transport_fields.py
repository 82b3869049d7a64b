"""Transport vector fields: hierarchy equations, assembly, serialization."""
import numpy as np
import pytest

from betatransport import (
    ConfigurationError,
    InvalidInputError,
    Potential,
    ResidualSample,
    apply_xi,
    build_field_set,
    check_field_equations,
    evaluate_field,
    field_divergence,
    field_equation_residuals,
    fieldset_from_dict,
    fieldset_to_dict,
    residual,
    residual_slope,
    sample_gaussian_tridiagonal,
)


class TestFieldEquations:
    def test_all_slices_satisfy_hierarchy(self, fields_gq2):
        for idx in range(len(fields_gq2.times)):
            res = check_field_equations(fields_gq2, idx)
            assert res["y0"] < 1e-10
            assert res["z"] < 1e-10
            assert res["y1"] < 1e-10

    def test_leading_equation_directly(self, fields_gq2):
        sl = fields_gq2.slices[3]
        image = apply_xi(sl.y0, sl.mu, sl.Vt)
        x = np.linspace(sl.mu.a + 0.05, sl.mu.b - 0.05, 41)
        np.testing.assert_allclose(
            image.evaluate(x) + fields_gq2.W_tilde(x), sl.c0, atol=1e-10)

    def test_beta_two_kills_first_correction(self, fields_gq2):
        x = np.linspace(fields_gq2.source_measure.a,
                        fields_gq2.source_measure.b, 101)
        for sl in fields_gq2.slices:
            assert np.max(np.abs(sl.y1.evaluate(x))) < 1e-10

    def test_beta_one_correction_is_nonzero(self, gauss2, quartic_w2):
        V = Potential(gauss2.coeffs, 1.0)
        W = Potential(quartic_w2.coeffs, 1.0)
        fields = build_field_set(V, W, n_time=3, degree=48, n_y=24)
        sl = fields.slices[1]
        x = np.linspace(fields.source_measure.a + 0.1,
                        fields.source_measure.b - 0.1, 51)
        assert np.max(np.abs(sl.y1.evaluate(x))) > 1e-4
        for idx in range(3):
            res = check_field_equations(fields, idx)
            assert max(res.values()) < 1e-9

    def test_zero_perturbation_gives_zero_fields(self, gauss2):
        fields = build_field_set(gauss2, Potential((0.0,), 2.0),
                                 n_time=3, degree=32, n_y=16)
        x = np.linspace(-1.9, 1.9, 41)
        sl = fields.slices[1]
        assert np.max(np.abs(sl.y0.evaluate(x))) < 1e-12
        assert np.max(np.abs(sl.z.evaluate(x, np.full_like(x, 0.3)))) < 1e-12
        assert np.max(np.abs(sl.y1.evaluate(x))) < 1e-12


class TestTimeGrid:
    def test_endpoints_exact(self, fields_gq2):
        assert fields_gq2.times[0] == 0.0
        assert fields_gq2.times[-1] == 1.0
        assert np.all(np.diff(fields_gq2.times) > 0)

    def test_time_outside_interval_rejected(self, fields_gq2):
        with pytest.raises(InvalidInputError):
            fields_gq2.y0_at(1.2, np.array([0.0]))


class TestFieldAssembly:
    def test_velocity_matches_manual_sum(self, fields_gq2):
        lam = np.array([-1.2, -0.3, 0.4, 1.1])
        N = len(lam)
        t = 0.5
        Y = evaluate_field(fields_gq2, t, lam, N)
        sl_lo, sl_hi, w = fields_gq2.bracket(t)
        assert w in (0.0, 1.0) or 0.0 < w < 1.0
        manual = np.empty(N)
        for i in range(N):
            y0 = fields_gq2.y0_at(t, np.array([lam[i]]))[0]
            y1 = fields_gq2.y1_at(t, np.array([lam[i]]))[0]
            zsum = fields_gq2.z_sum_at(t, np.array([lam[i]]), lam)[0]
            zbar = fields_gq2.zbar_at(t, np.array([lam[i]]))[0]
            manual[i] = y0 + (y1 + zsum) / N - zbar
        np.testing.assert_allclose(Y, manual, atol=1e-12)

    def test_leading_term_only_without_correction(self, fields_gq2):
        lam = np.array([-0.9, 0.2, 0.8])
        Y = evaluate_field(fields_gq2, 0.25, lam, include_correction=False)
        np.testing.assert_allclose(Y, fields_gq2.y0_at(0.25, lam), atol=1e-14)

    def test_divergence_matches_finite_difference(self, fields_gq2):
        lam = np.array([-1.0, -0.1, 0.7, 1.3])
        t = 0.75
        div = field_divergence(fields_gq2, t, lam)
        h = 1e-6
        for i in range(len(lam)):
            lp = lam.copy()
            lm = lam.copy()
            lp[i] += h
            lm[i] -= h
            fd = (evaluate_field(fields_gq2, t, lp)[i]
                  - evaluate_field(fields_gq2, t, lm)[i]) / (2 * h)
            assert div[i] == pytest.approx(fd, abs=2e-5)


class TestResidual:
    def test_shapes_and_batching(self, fields_gq2):
        rows = sample_gaussian_tridiagonal(
            Potential((0.0, 0.0, 0.5), 2.0), 30, 40, 5).values
        r = residual(fields_gq2, 0.0, rows)
        assert r.shape == (40,)
        res = field_equation_residuals(fields_gq2, 0.0, rows, chunk=16)
        assert res.N == 30 and res.n_samples == 40
        np.testing.assert_allclose(res.raw, r, atol=1e-12)

    def test_quadratic_time_slice_is_pathwise_constant(self, fields_gq2, rng):
        # at t = 0 the interpolating potential is quadratic, the fields are
        # low-degree polynomials, and the residual is the same constant for
        # every configuration
        rows = rng.normal(scale=0.5, size=(12, 25))
        r = residual(fields_gq2, 0.0, np.sort(rows, axis=1))
        assert np.max(np.abs(r - r[0])) < 1e-8

    def test_rejects_one_dimensional_input(self, fields_gq2):
        with pytest.raises(InvalidInputError):
            field_equation_residuals(fields_gq2, 0.0, np.zeros(8))

    def test_slope_recovers_power_law(self):
        samples = [ResidualSample(n, 0.5, 100,
                                  np.linspace(0.0, 2.0 / n, 100))
                   for n in (50, 100, 200, 400)]
        assert residual_slope(samples) == pytest.approx(-1.0, abs=1e-10)

    def test_slope_needs_two_sizes(self):
        with pytest.raises(InvalidInputError):
            residual_slope([ResidualSample(50, 0.0, 10, np.ones(10))])


class TestSerialization:
    def test_round_trip_preserves_fields(self, fields_gq2):
        d = fieldset_to_dict(fields_gq2)
        back = fieldset_from_dict(d)
        x = np.linspace(fields_gq2.source_measure.a + 0.05,
                        fields_gq2.source_measure.b - 0.05, 31)
        for t in (0.0, 0.4, 1.0):
            np.testing.assert_allclose(back.y0_at(t, x),
                                       fields_gq2.y0_at(t, x), atol=1e-10)
            np.testing.assert_allclose(back.zbar_at(t, x),
                                       fields_gq2.zbar_at(t, x), atol=1e-10)

    def test_rejects_unknown_format(self, fields_gq2):
        d = fieldset_to_dict(fields_gq2)
        d["format"] = "something/else"
        with pytest.raises(ConfigurationError, match="format"):
            fieldset_from_dict(d)

    def test_rejects_tampered_coefficients(self, fields_gq2):
        d = fieldset_to_dict(fields_gq2)
        d["slices"][2]["y0"][0] += 0.5
        with pytest.raises(ConfigurationError):
            fieldset_from_dict(d)
