"""Tests for the three partition builders and bin assignment."""

import numpy as np
import pytest
from scipy.special import ndtri

from sobolstream.errors import (
    DataError,
    DegeneratePartitionError,
    DegeneratePartitionWarning,
    ParameterError,
)
from sobolstream.partition import (
    Partition,
    assign_bins,
    build_partition,
    equidistant_edges,
    kde_edges,
    quantile_edges,
)


def reference_quantile(sorted_values, p):
    """Interpolated inverted-CDF quantile, written out from its definition."""
    n = len(sorted_values)
    h = n * p
    if h < 1:
        return sorted_values[0]
    if h >= n:
        return sorted_values[-1]
    lo = int(np.floor(h))
    frac = h - lo
    upper = sorted_values[min(lo, n - 1)] if lo == n else sorted_values[lo]
    return sorted_values[lo - 1] + frac * (upper - sorted_values[lo - 1])


class TestQuantileEdges:
    def test_four_samples_two_bins(self):
        p = quantile_edges([1, 2, 3, 4], 2)
        np.testing.assert_array_equal(p.interior_edges, [2.0])
        assert p.m_effective == 2 and p.scheme == "quantile"

    def test_eight_samples_four_bins(self):
        p = quantile_edges([1, 2, 3, 4, 5, 6, 7, 8], 4)
        np.testing.assert_array_equal(p.interior_edges, [2.0, 4.0, 6.0])

    def test_matches_reference_formula(self):
        rng = np.random.default_rng(5)
        samples = np.sort(rng.normal(size=137))
        p = quantile_edges(samples, 10)
        expected = [reference_quantile(samples, k / 10) for k in range(1, 10)]
        np.testing.assert_allclose(p.interior_edges, expected, rtol=1e-14)

    def test_spike_collapses_duplicates_with_warning(self):
        with pytest.warns(DegeneratePartitionWarning):
            p = quantile_edges([0, 0, 0, 0, 1, 2], 4)
        assert p.m_effective < 4
        assert p.collapsed
        assert (np.diff(p.interior_edges) > 0).all()

    def test_identical_samples_error(self):
        with pytest.raises(DegeneratePartitionError):
            quantile_edges([3.0] * 10, 4)

    def test_parameter_and_data_errors(self):
        with pytest.raises(ParameterError):
            quantile_edges([1, 2, 3], 1)
        with pytest.raises(DataError):
            quantile_edges([], 2)
        with pytest.raises(DataError):
            quantile_edges([1.0, np.nan], 2)


class TestKdeEdges:
    def test_symmetric_samples_median_at_zero(self):
        vals = np.concatenate([np.arange(1, 50.0), -np.arange(1, 50.0)])
        p = kde_edges(vals, 2)
        # grid resolution bounds the inversion error
        grid_step = (vals.max() - vals.min() + 6 * vals.std(ddof=1) * vals.size ** -0.2) / 4095
        assert abs(p.interior_edges[0]) < grid_step

    def test_normal_quartiles(self):
        rng = np.random.default_rng(42)
        samples = rng.standard_normal(10_000)
        p = kde_edges(samples, 4)
        np.testing.assert_allclose(
            p.interior_edges, [ndtri(0.25), 0.0, ndtri(0.75)], atol=0.05
        )

    def test_uniform_median_with_boundary_bias(self):
        rng = np.random.default_rng(43)
        p = kde_edges(rng.random(10_000), 2)
        assert abs(p.interior_edges[0] - 0.5) < 0.02

    def test_cdf_inversion_monotone_in_level(self):
        rng = np.random.default_rng(44)
        p = kde_edges(rng.standard_normal(2_000), 20)
        assert (np.diff(p.interior_edges) > 0).all()

    def test_degenerate_density(self):
        with pytest.raises(DegeneratePartitionError):
            kde_edges([2.0, 2.0, 2.0], 2)


class TestEquidistantEdges:
    def test_simple_range(self):
        p = equidistant_edges([0.0, 10.0, 3.0, 7.0], 5)
        np.testing.assert_allclose(p.interior_edges, [2.0, 4.0, 6.0, 8.0], rtol=1e-15)

    def test_midpoint(self):
        p = equidistant_edges([-1.0, 3.0], 2)
        np.testing.assert_allclose(p.interior_edges, [1.0])

    def test_truncated_normal_grid(self):
        rng = np.random.default_rng(7)
        samples = rng.standard_normal(10_000)
        m = 10
        p = equidistant_edges(samples, m, truncation=(1e-4, 1 - 1e-4))
        hi = ndtri(1 - 1e-4)
        expected = -hi + np.arange(1, m) * (2 * hi / m)
        np.testing.assert_allclose(p.interior_edges, expected, atol=0.15)

    def test_degenerate_range(self):
        with pytest.raises(DegeneratePartitionError):
            equidistant_edges([5.0, 5.0], 2)

    def test_bad_truncation(self):
        with pytest.raises(ParameterError):
            equidistant_edges([1.0, 2.0], 2, truncation=(0.9, 0.1))


class TestAssign:
    def test_left_closed_boundary(self):
        p = Partition(np.array([2.0, 4.0, 6.0, 8.0]), "equidistant", 5)
        assert p.assign([4.0])[0] == 2

    def test_infinite_outer_bins(self):
        p = Partition(np.array([2.0, 4.0, 6.0, 8.0]), "equidistant", 5)
        np.testing.assert_array_equal(p.assign([-100.0, 1e9]), [0, 4])

    def test_single_edge_split(self):
        p = Partition(np.array([2.0]), "quantile", 2)
        np.testing.assert_array_equal(assign_bins(p, [1, 2, 3, 4]), [0, 1, 1, 1])

    def test_rejects_non_finite(self):
        p = Partition(np.array([0.0]), "quantile", 2)
        with pytest.raises(DataError):
            p.assign([np.nan])

    def test_totality_and_monotonicity(self):
        rng = np.random.default_rng(8)
        p = quantile_edges(rng.standard_normal(1_000), 7)
        values = np.sort(rng.standard_normal(5_000) * 10)
        bins = p.assign(values)
        assert bins.min() >= 0 and bins.max() < p.m_effective
        assert (np.diff(bins) >= 0).all()
        counts = np.bincount(bins, minlength=p.m_effective)
        assert counts.sum() == values.size


class TestSchemeConsistency:
    def test_uniform_quantile_equals_equidistant_asymptotically(self):
        rng = np.random.default_rng(9)
        samples = rng.random(100_000)
        q = quantile_edges(samples, 10)
        e = equidistant_edges(samples, 10)
        assert np.abs(q.interior_edges - e.interior_edges).max() < 0.02

    def test_equiprobable_bin_counts(self):
        # quantile edges from a large initial sample put near-equal counts
        # in every bin for a fresh sample of the same law
        rng = np.random.default_rng(10)
        m = 10
        p = quantile_edges(rng.standard_normal(10_000), m)
        fresh = rng.standard_normal(10_000)
        counts = np.bincount(p.assign(fresh), minlength=m)
        bound = 5 * np.sqrt(fresh.size / m)
        assert np.abs(counts - fresh.size / m).max() < bound


class TestPartitionType:
    def test_validates_edges(self):
        with pytest.raises(ParameterError):
            Partition(np.array([1.0, 1.0]), "quantile", 3)
        with pytest.raises(ParameterError):
            Partition(np.array([2.0, 1.0]), "quantile", 3)
        with pytest.raises(ParameterError):
            Partition(np.array([1.0]), "no-such-scheme", 2)

    def test_immutable_edges(self):
        p = Partition(np.array([1.0, 2.0]), "quantile", 3)
        with pytest.raises(ValueError):
            p.interior_edges[0] = 5.0

    def test_build_partition_dispatch(self):
        samples = np.arange(100.0)
        for scheme in ("quantile", "kde", "equidistant"):
            p = build_partition(samples, scheme, 4)
            assert p.scheme == scheme
        with pytest.raises(ParameterError):
            build_partition(samples, "fancy", 4)
