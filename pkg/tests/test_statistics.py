"""Local spectral statistics and two-sample comparison machinery."""
import numpy as np
import pytest

from betatransport import (
    InvalidInputError,
    bulk_gaps,
    compare_distributions,
    compare_local_statistics,
    compare_rescaled_statistics,
    edge_values,
    ks_null_quantile,
    rescale_gaps,
    rescaled_statistics_experiment,
)


class TestBulkGaps:
    rows = np.array([[0.0, 1.0, 3.0, 6.0],
                     [0.0, 2.0, 5.0, 9.0]])

    def test_values_are_n_times_spacings(self):
        g = bulk_gaps(self.rows, 1, orders=(1, 2))
        np.testing.assert_allclose(g.order(1), [4.0, 8.0])
        np.testing.assert_allclose(g.order(2), [12.0, 20.0])

    def test_one_based_indexing(self):
        g = bulk_gaps(self.rows, 2, orders=(1,))
        np.testing.assert_allclose(g.order(1), [8.0, 12.0])

    def test_unsorted_input_is_sorted_first(self):
        shuffled = self.rows[:, ::-1]
        g = bulk_gaps(shuffled, 1, orders=(1,))
        np.testing.assert_allclose(g.order(1), [4.0, 8.0])

    @pytest.mark.parametrize("index", [0, 4, 7])
    def test_out_of_range_index_rejected(self, index):
        with pytest.raises(InvalidInputError):
            bulk_gaps(self.rows, index, orders=(1,))


class TestEdgeValues:
    rows = np.array([[1.0, 2.0, 8.0],
                     [0.5, 3.0, 9.0]])
    support = (0.0, 10.0)

    def test_right_edge_inward_positive(self):
        e = edge_values(self.rows, self.support, 1, "right")
        np.testing.assert_allclose(e.values, 3 ** (2.0 / 3.0) * np.array([2.0, 1.0]))

    def test_left_edge_inward_positive(self):
        e = edge_values(self.rows, self.support, 1, "left")
        np.testing.assert_allclose(e.values, 3 ** (2.0 / 3.0) * np.array([1.0, 0.5]))

    def test_second_order(self):
        e = edge_values(self.rows, self.support, 2, "right")
        np.testing.assert_allclose(e.values, 3 ** (2.0 / 3.0) * np.array([8.0, 7.0]))

    def test_bad_side_rejected(self):
        with pytest.raises(InvalidInputError):
            edge_values(self.rows, self.support, 1, "top")

    def test_order_beyond_n_rejected(self):
        with pytest.raises(InvalidInputError):
            edge_values(self.rows, self.support, 4, "right")


class TestRescaleGaps:
    def test_scalar_factor(self):
        np.testing.assert_allclose(rescale_gaps(np.array([1.0, 2.0]), 0.5),
                                   [0.5, 1.0])

    def test_per_sample_factors(self):
        out = rescale_gaps(np.array([1.0, 2.0]), np.array([2.0, 3.0]))
        np.testing.assert_allclose(out, [2.0, 6.0])

    @pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
    def test_invalid_factor_rejected(self, bad):
        with pytest.raises(InvalidInputError):
            rescale_gaps(np.array([1.0]), bad)


class TestCompareDistributions:
    def test_identical_samples(self, rng):
        x = rng.standard_normal(500)
        rep = compare_distributions(x, x.copy(), name="self")
        assert rep.ks == 0.0
        assert rep.wasserstein == 0.0
        assert rep.ks_pvalue == pytest.approx(1.0)

    def test_disjoint_samples(self, rng):
        a = rng.standard_normal(300)
        rep = compare_distributions(a, a + 100.0)
        assert rep.ks == pytest.approx(1.0)

    def test_bootstrap_errors_positive(self, rng):
        rep = compare_distributions(rng.standard_normal(200),
                                    rng.standard_normal(250), n_boot=50)
        assert rep.ks_se > 0
        assert rep.wasserstein_se > 0

    def test_threshold_gates(self, rng):
        a = rng.standard_normal(400)
        b = rng.standard_normal(400) + 2.0
        rep = compare_distributions(a, b, threshold=0.2)
        assert rep.passed is False
        rep = compare_distributions(a, a.copy(), threshold=0.2)
        assert rep.passed is True

    def test_to_dict_round_trips_fields(self, rng):
        rep = compare_distributions(rng.standard_normal(50),
                                    rng.standard_normal(50), threshold=0.5)
        d = rep.to_dict()
        assert {"name", "ks", "wasserstein", "passed"} <= set(d)

    def test_needs_two_values(self):
        with pytest.raises(InvalidInputError):
            compare_distributions(np.array([1.0]), np.array([1.0, 2.0]))


class TestNullQuantile:
    def test_close_to_asymptotic_value(self):
        n = 2000
        q = ks_null_quantile(n, n, q=0.99, n_draws=1500)
        asymptotic = 1.628 * np.sqrt(2.0 / n)
        assert q == pytest.approx(asymptotic, rel=0.1)

    def test_smaller_samples_need_larger_threshold(self):
        assert ks_null_quantile(200, 200) > ks_null_quantile(2000, 2000)

    def test_invalid_level_rejected(self):
        with pytest.raises(InvalidInputError):
            ks_null_quantile(100, 100, q=1.2)


class TestCompareLocalStatistics:
    support = (-2.0, 2.0)

    def _fake_rows(self, rng, n, shift=0.0):
        rows = np.sort(rng.uniform(-2.0, 2.0, size=(n, 40)), axis=1)
        return rows + shift * 0.01

    def test_same_law_passes(self, rng):
        a = self._fake_rows(rng, 400)
        b = self._fake_rows(rng, 400)
        res = compare_local_statistics(a, b, self.support, seed=1)
        assert res.all_passed
        assert set(res.reports) == {"gap_k1", "gap_k2", "edge_left_k1",
                                    "edge_right_k1"}
        assert set(res.samples) == set(res.reports)

    def test_shifted_law_fails_edges(self, rng):
        a = self._fake_rows(rng, 400)
        b = self._fake_rows(rng, 400, shift=30.0)
        res = compare_local_statistics(a, b, self.support, seed=1)
        assert not res.all_passed

    def test_empty_gap_family(self, rng):
        a = self._fake_rows(rng, 100)
        b = self._fake_rows(rng, 100)
        res = compare_local_statistics(a, b, self.support, gap_orders=(),
                                       seed=1)
        assert set(res.reports) == {"edge_left_k1", "edge_right_k1"}

    def test_empty_edge_family(self, rng):
        a = self._fake_rows(rng, 100)
        b = self._fake_rows(rng, 100)
        res = compare_local_statistics(a, b, self.support, edge_orders=(),
                                       seed=1)
        assert set(res.reports) == {"gap_k1", "gap_k2"}

    def test_mismatched_widths_rejected(self, rng):
        a = np.sort(rng.uniform(-1, 1, (10, 20)), axis=1)
        b = np.sort(rng.uniform(-1, 1, (10, 25)), axis=1)
        with pytest.raises(InvalidInputError):
            compare_local_statistics(a, b, self.support)

    def test_to_dict_shape(self, rng):
        a = self._fake_rows(rng, 60)
        b = self._fake_rows(rng, 60)
        res = compare_local_statistics(a, b, self.support, seed=0)
        d = res.to_dict()
        assert {"beta", "N", "n_samples", "threshold", "all_passed",
                "reports"} <= set(d)


class TestRescaledComparison:
    def test_direct_call_matches_experiment_reports(self, gauss2, quartic_w2,
                                                    tmap_gq2):
        res = rescaled_statistics_experiment(
            gauss2, quartic_w2, 40, 250, seed=60601, tmap=tmap_gq2,
            gap_orders=(1,), edge_orders=(1,), n_boot=30)
        assert set(res.reports) == {"gap_k1", "edge_left_k1", "edge_right_k1"}
        assert res.beta == 2.0
        assert res.all_passed

    def test_wrong_map_direction_fails(self, gauss2, quartic_w2, tmap_gq2,
                                       rng):
        # rescaling source statistics with the inverse-direction factors
        # moves them away from the target law
        from betatransport import sample_spectra

        src = sample_spectra(gauss2, 40, 300, 1)
        # pretend the source sample already follows the target model
        res = compare_rescaled_statistics(tmap_gq2, src, src.values,
                                          gap_orders=(1,), edge_orders=(),
                                          seed=2, n_boot=30)
        rep = res.reports["gap_k1"]
        assert rep.ks > 0.0
