"""Tests for the streaming accumulator, finalization, and the sklearn API."""

import numpy as np
import pytest
from sklearn.base import clone

from sobolstream.errors import (
    DataError,
    DegeneratePartitionError,
    DegeneratePartitionWarning,
    InsufficientDataError,
    ZeroVarianceError,
)
from sobolstream.estimator import (
    SobolAccumulator,
    SobolIndexEstimator,
    all_at_once,
)
from sobolstream.partition import build_partition


def tiny_case():
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([1.0, 2.0, 3.0, 4.0])
    return x, y


class TestInitialize:
    def test_hand_trace(self):
        x, y = tiny_case()
        acc = SobolAccumulator.initialize(x, y, scheme="quantile", m=2)
        np.testing.assert_array_equal(acc.partitions[0].interior_edges, [2.0])
        moments = acc.bin_moments(0)
        assert [m.n for m in moments] == [1, 3]
        assert acc.total_moments.n == 4
        assert acc.n_seen == 4

    def test_constant_output_accumulates_but_wont_finalize(self):
        x, _ = tiny_case()
        acc = SobolAccumulator.initialize(x, np.ones(4), scheme="quantile", m=2)
        assert acc.n_seen == 4
        with pytest.raises(ZeroVarianceError):
            acc.finalize()

    def test_shape_contract(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(100, 3))
        acc = SobolAccumulator.initialize(x, rng.normal(size=100), m=50)
        assert acc.d == 3
        assert all(p.interior_edges.size == 49 for p in acc.partitions)

    def test_single_row_rejected(self):
        with pytest.raises(InsufficientDataError):
            SobolAccumulator.initialize([[1.0]], [1.0], m=2)

    def test_degenerate_column_tagged_with_index(self):
        x = np.column_stack([np.arange(10.0), np.full(10, 3.0)])
        with pytest.raises(DegeneratePartitionError, match="input 1"):
            SobolAccumulator.initialize(x, np.arange(10.0), scheme="equidistant", m=4)

    def test_fast_paths_match_per_column_builders(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(500, 4))
        for scheme in ("quantile", "equidistant"):
            acc = SobolAccumulator.initialize(x, rng.normal(size=500), scheme=scheme, m=8)
            for i in range(4):
                ref = build_partition(x[:, i], scheme, 8)
                np.testing.assert_allclose(
                    acc.partitions[i].interior_edges, ref.interior_edges, rtol=1e-15
                )


class TestIngest:
    def test_batch_split_matches_single_batch(self):
        x, y = tiny_case()
        one = SobolAccumulator.initialize(x, y, scheme="quantile", m=2)
        part = [build_partition(x[:, 0], "quantile", 2)]
        two = SobolAccumulator(part)
        two.ingest(x[:2], y[:2]).ingest(x[2:], y[2:])
        for a, b in zip(one.bin_moments(0), two.bin_moments(0)):
            assert a.n == b.n
            assert a.mean == pytest.approx(b.mean, abs=1e-12)
            assert a.uv == pytest.approx(b.uv, abs=1e-12)

    def test_empty_batch_is_noop(self):
        x, y = tiny_case()
        acc = SobolAccumulator.initialize(x, y, scheme="quantile", m=2)
        before = acc.finalize()
        acc.ingest(np.empty((0, 1)), np.empty(0))
        after = acc.finalize()
        assert before.n == after.n
        np.testing.assert_array_equal(before.s, after.s)

    def test_constant_subgroup_keeps_zero_uv(self):
        part = [build_partition(np.arange(10.0), "equidistant", 2)]
        acc = SobolAccumulator(part)
        acc.ingest(np.array([[0.0], [1.0], [8.0]]), np.array([5.0, 5.0, 7.0]))
        assert acc.bin_moments(0)[0].uv == 0.0

    def test_shape_mismatch(self):
        x, y = tiny_case()
        acc = SobolAccumulator.initialize(x, y, scheme="quantile", m=2)
        with pytest.raises(DataError):
            acc.ingest(np.zeros((3, 2)), np.zeros(3))
        with pytest.raises(DataError):
            acc.ingest(np.zeros((3, 1)), np.zeros(4))

    def test_non_finite_rejected(self):
        x, y = tiny_case()
        acc = SobolAccumulator.initialize(x, y, scheme="quantile", m=2)
        with pytest.raises(DataError):
            acc.ingest(np.array([[np.inf]]), np.array([1.0]))

    def test_broadcast_and_column_paths_agree(self):
        rng = np.random.default_rng(2)
        d = 40
        x0 = rng.normal(size=(200, d))
        parts = [build_partition(x0[:, i], "equidistant", 6) for i in range(d)]
        a, b = SobolAccumulator(parts), SobolAccumulator(parts)
        xb, yb = rng.normal(size=(100, d)), rng.normal(size=100)
        a._ingest_broadcast(xb, yb)
        b._ingest_per_column(xb, yb)
        np.testing.assert_array_equal(a._counts, b._counts)
        np.testing.assert_allclose(a._means, b._means, rtol=1e-13, atol=1e-13)
        np.testing.assert_allclose(a._uvs, b._uvs, rtol=1e-12, atol=1e-12)


class TestFinalize:
    def test_hand_example(self):
        x, y = tiny_case()
        res = SobolAccumulator.initialize(x, y, scheme="quantile", m=2).finalize()
        assert res.total_variance == pytest.approx(5.0 / 3.0, rel=1e-15)
        assert res.ev[0] == pytest.approx(0.75, rel=1e-15)
        assert res.s[0] == pytest.approx(0.55, rel=1e-12)
        assert res.bin_counts[0].tolist() == [1, 3]

    def test_injective_output_approaches_one_as_bins_refine(self):
        n = 64
        x = np.arange(float(n)).reshape(-1, 1)
        y = np.arange(float(n))
        coarse = all_at_once(x, y, scheme="quantile", m=8).s[0]
        fine = all_at_once(x, y, scheme="quantile", m=n).s[0]
        assert coarse < fine < 1.0 + 1e-15
        assert fine == pytest.approx(1.0, abs=1e-3)
        with pytest.warns(DegeneratePartitionWarning):
            isolating = all_at_once(x, y, scheme="quantile", m=2 * n)
        assert isolating.s[0] == pytest.approx(1.0, abs=1e-12)

    def test_independent_input_near_zero(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(50_000, 2))
        y = x[:, 0] * 2.0  # column 1 is inert
        res = all_at_once(x, y, scheme="equidistant", m=20)
        assert abs(res.s[1]) < 0.02
        assert res.s[0] > 0.95

    def test_non_destructive(self):
        x, y = tiny_case()
        acc = SobolAccumulator.initialize(x, y, scheme="quantile", m=2)
        first = acc.finalize()
        acc.ingest(x, y)
        second = acc.finalize()
        assert second.n == 2 * first.n

    def test_bounds_and_weights(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(2_000, 3))
        y = rng.normal(size=2_000) + x[:, 0]
        res = all_at_once(x, y, m=10)
        assert (res.s <= 1.0).all()
        assert (res.ev >= 0.0).all()
        for counts in res.bin_counts:
            assert counts.sum() == res.n


class TestStreamingEquivalence:
    def test_any_batching_matches_all_at_once(self):
        rng = np.random.default_rng(5)
        n = 5_000
        x = rng.normal(size=(n, 3))
        y = x[:, 0] + np.square(x[:, 1]) + 0.1 * rng.normal(size=n)
        parts = [build_partition(x[:, i], "equidistant", 12) for i in range(3)]
        ref = SobolAccumulator(parts).ingest(x, y).finalize()
        for batch in (37, 500, 4_999):
            acc = SobolAccumulator(parts)
            for lo in range(0, n, batch):
                acc.ingest(x[lo : lo + batch], y[lo : lo + batch])
            got = acc.finalize()
            assert np.abs(got.s - ref.s).max() < 1e-10

    def test_snapshot_matches_fresh_run_over_prefix(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(3_000, 2))
        y = np.square(x[:, 0]) + x[:, 1]
        parts = [build_partition(x[:500, i], "quantile", 8) for i in range(2)]
        acc = SobolAccumulator(parts)
        acc.ingest(x[:1_500], y[:1_500])
        snapshot = acc.finalize()
        acc.ingest(x[1_500:], y[1_500:])
        fresh = SobolAccumulator(parts).ingest(x[:1_500], y[:1_500]).finalize()
        np.testing.assert_array_equal(snapshot.s, fresh.s)
        assert acc.finalize().n == 3_000

    def test_shard_merge_matches_sequential(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(4_000, 2))
        y = x[:, 0] * x[:, 1]
        parts = [build_partition(x[:400, i], "equidistant", 10) for i in range(2)]
        seq = SobolAccumulator(parts).ingest(x, y).finalize()
        shard_a = SobolAccumulator(parts).ingest(x[:2_500], y[:2_500])
        shard_b = SobolAccumulator(parts).ingest(x[2_500:], y[2_500:])
        merged = shard_a.merge(shard_b).finalize()
        assert np.abs(merged.s - seq.s).max() < 1e-10

    def test_merge_rejects_different_partitions(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(100, 1))
        y = rng.normal(size=100)
        a = SobolAccumulator.initialize(x, y, m=4)
        b = SobolAccumulator.initialize(x * 2, y, m=4)
        with pytest.raises(DataError):
            a.merge(b)


class TestStatisticalInvariants:
    def test_dummy_input_replicate_mean_is_null(self):
        from sobolstream.models import evaluate, polynomial, sample_inputs

        spec = polynomial("uniform")
        reps, n = 100, 10_000
        s3 = np.empty(reps)
        for r in range(reps):
            x = sample_inputs(spec, n, 600 + r)
            s3[r] = all_at_once(x, evaluate(spec, x), scheme="equidistant", m=50).s[2]
        assert abs(s3.mean()) < 4 * s3.std(ddof=1) / np.sqrt(reps)

    def test_uniform_inputs_make_schemes_agree(self):
        from sobolstream.models import evaluate, polynomial, sample_inputs

        spec = polynomial("uniform")
        reps, n = 50, 10_000
        diff = np.empty((reps, 3))
        spread = np.empty((reps, 3))
        for r in range(reps):
            x = sample_inputs(spec, n, 700 + r)
            y = evaluate(spec, x)
            q = all_at_once(x, y, scheme="quantile", m=50).s
            e = all_at_once(x, y, scheme="equidistant", m=50).s
            diff[r] = q - e
            spread[r] = q
        sem = spread.std(axis=0, ddof=1) / np.sqrt(reps)
        assert (np.abs(diff.mean(axis=0)) < 4 * sem).all()


class TestStatePersistence:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(1_000, 3))
        y = np.square(x).sum(axis=1)
        acc = SobolAccumulator.initialize(x, y, scheme="quantile", m=9)
        path = tmp_path / "state.json"
        acc.save_state(path)
        back = SobolAccumulator.load_state(path)
        np.testing.assert_array_equal(acc._counts, back._counts)
        np.testing.assert_array_equal(acc._means, back._means)
        np.testing.assert_array_equal(acc._uvs, back._uvs)
        assert acc.total_moments == back.total_moments
        for p, q in zip(acc.partitions, back.partitions):
            np.testing.assert_array_equal(p.interior_edges, q.interior_edges)

    def test_resume_equals_uninterrupted(self, tmp_path):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(2_000, 2))
        y = x[:, 0] - np.square(x[:, 1])
        acc = SobolAccumulator.initialize(x[:800], y[:800], m=8)
        acc.save_state(tmp_path / "mid.json")
        resumed = SobolAccumulator.load_state(tmp_path / "mid.json")
        acc.ingest(x[800:], y[800:])
        resumed.ingest(x[800:], y[800:])
        np.testing.assert_array_equal(acc.finalize().s, resumed.finalize().s)

    def test_rejects_foreign_payload(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(DataError):
            SobolAccumulator.load_state(path)


class TestSklearnInterface:
    def test_fit_sets_attributes(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(5_000, 3))
        y = 2 * x[:, 0] + x[:, 1]
        est = SobolIndexEstimator(bins=20).fit(x, y)
        assert est.n_features_in_ == 3
        assert est.n_samples_seen_ == 5_000
        assert est.indices_.shape == (3,)
        assert est.indices_[0] > est.indices_[1] > est.indices_[2] - 0.05
        assert est.total_variance_ == pytest.approx(np.var(y, ddof=1), rel=1e-12)

    def test_partial_fit_streams(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(3_000, 2))
        y = np.square(x[:, 0])
        est = SobolIndexEstimator(bins=10)
        for lo in range(0, 3_000, 500):
            est.partial_fit(x[lo : lo + 500], y[lo : lo + 500])
        assert est.n_samples_seen_ == 3_000
        ref = SobolIndexEstimator(bins=10)
        ref.partial_fit(x[:500], y[:500])
        ref.partial_fit(x[500:], y[500:])
        np.testing.assert_allclose(est.indices_, ref.indices_, atol=1e-10)

    def test_fit_resets_previous_state(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(1_000, 2))
        y = x[:, 0]
        est = SobolIndexEstimator(bins=8).fit(x, y)
        est.fit(x, y)
        assert est.n_samples_seen_ == 1_000

    def test_get_params_and_clone(self):
        est = SobolIndexEstimator(bins=32, scheme="kde", truncation=(0.01, 0.99))
        params = est.get_params()
        assert params == {"bins": 32, "scheme": "kde", "truncation": (0.01, 0.99)}
        twin = clone(est)
        assert twin.get_params() == params

    def test_zero_variance_raises_on_fit_not_partial_fit(self):
        x = np.arange(10.0).reshape(-1, 1)
        with pytest.raises(ZeroVarianceError):
            SobolIndexEstimator(bins=2).fit(x, np.ones(10))
        est = SobolIndexEstimator(bins=2)
        est.partial_fit(x, np.ones(10))  # degenerate so far: no attributes yet
        assert not hasattr(est, "indices_")
        with pytest.raises(ZeroVarianceError):
            est.result()
        est.partial_fit(x, np.arange(10.0))
        assert hasattr(est, "indices_")

    def test_result_requires_fit(self):
        with pytest.raises(InsufficientDataError):
            SobolIndexEstimator().result()


class TestMemoryShape:
    def test_state_size_independent_of_samples(self):
        rng = np.random.default_rng(14)
        d, m = 25, 10
        x0 = rng.normal(size=(200, d))
        acc = SobolAccumulator.initialize(x0, rng.normal(size=200), m=m)
        footprint = lambda a: (
            a._counts.nbytes + a._means.nbytes + a._uvs.nbytes
            + sum(e.nbytes for e in a._edges)
        )
        before = footprint(acc)
        cells_before = sum(len(r["cells"]["n"]) for r in acc.to_state()["inputs"])
        for _ in range(20):
            acc.ingest(rng.normal(size=(1_000, d)), rng.normal(size=1_000))
        assert footprint(acc) == before
        assert sum(len(r["cells"]["n"]) for r in acc.to_state()["inputs"]) == cells_before
        assert before <= d * m * 3 * 8 + d * (m - 1) * 8
