from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracescope import (
    EmptyTensorError,
    ShapeError,
    StatsAccumulator,
    merge,
    per_neuron_stats,
    summarize,
    zscore,
)
from oracles import assert_stats_close, two_pass_stats


class TestSummarize:
    def test_constant_input(self):
        stats = summarize(np.array([5.0, 5.0, 5.0, 5.0]))
        assert stats.mean == 5.0
        assert stats.std == 0.0
        assert stats.min == 5.0
        assert stats.max == 5.0
        assert stats.frac_zero == 0.0

    def test_simple_sequence(self):
        # frozen from the two-pass oracle: mean 2.5, population std sqrt(5/4),
        # abs_mean 2.5, l2 sqrt(30)
        stats = summarize(np.array([1.0, 2.0, 3.0, 4.0]))
        assert stats.mean == pytest.approx(2.5, abs=1e-12)
        assert stats.std == pytest.approx(1.118033988749895, abs=1e-12)
        assert stats.abs_mean == pytest.approx(2.5, abs=1e-12)
        assert stats.l2_norm == pytest.approx(5.477225575051661, abs=1e-12)
        assert_stats_close(stats, two_pass_stats([1.0, 2.0, 3.0, 4.0]))

    def test_nan_excluded_from_moments(self):
        # frozen from the oracle after filtering non-finite values
        stats = summarize(np.array([0.0, float("nan"), 2.0]))
        assert stats.count == 3
        assert stats.count_nan == 1
        assert stats.mean == pytest.approx(1.0)
        assert stats.frac_zero == pytest.approx(0.5)

    def test_inf_counted_separately(self):
        stats = summarize(np.array([1.0, float("inf"), float("-inf"), 3.0]))
        assert stats.count_inf == 2
        assert stats.mean == pytest.approx(2.0)
        assert stats.max == 3.0

    def test_all_non_finite(self):
        stats = summarize(np.array([float("nan"), float("inf")]))
        assert stats.finite_count == 0
        assert math.isnan(stats.mean)
        assert stats.l2_norm == 0.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyTensorError):
            summarize(np.array([]))

    def test_matches_oracle_on_random_tensors(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            values = rng.uniform(-1e6, 1e6, size=rng.integers(1, 400))
            values *= 10.0 ** rng.integers(-6, 1, size=values.size)
            assert_stats_close(summarize(values), two_pass_stats(values))

    @given(st.lists(st.floats(allow_nan=True, allow_infinity=True, width=32),
                    min_size=1, max_size=200))
    @settings(max_examples=150, deadline=None)
    def test_one_pass_agrees_with_two_pass(self, values):
        assert_stats_close(summarize(np.array(values, dtype=np.float64)),
                           two_pass_stats(values))

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=2, max_size=80),
           st.randoms(use_true_random=False))
    @settings(max_examples=100, deadline=None)
    def test_permutation_invariance(self, values, rnd):
        baseline = summarize(np.array(values))
        shuffled = list(values)
        rnd.shuffle(shuffled)
        other = summarize(np.array(shuffled))
        assert baseline.count == other.count
        assert baseline.min == other.min
        assert baseline.max == other.max
        assert baseline.count_nan == other.count_nan
        for name in ("mean", "std", "abs_mean", "l2_norm", "frac_zero"):
            a, b = getattr(baseline, name), getattr(other, name)
            assert abs(a - b) <= 1e-9 * (1.0 + abs(b))

    def test_chunked_accumulation_matches_single_shot(self):
        rng = np.random.default_rng(3)
        values = rng.normal(scale=100.0, size=200_000)
        acc = StatsAccumulator()
        for start in range(0, values.size, 977):
            acc.update(values[start:start + 977])
        assert_stats_close(acc.finalize(), two_pass_stats(values))


class TestMerge:
    def test_merge_equals_direct(self):
        a = summarize(np.array([1.0, 2.0]))
        b = summarize(np.array([3.0, 4.0]))
        merged = merge(a, b)
        assert_stats_close(merged, two_pass_stats([1.0, 2.0, 3.0, 4.0]))

    def test_merge_doubles_count_on_disjoint_copy(self):
        a = summarize(np.array([1.0, 2.0, 3.0]))
        merged = merge(a, a)  # a disjoint copy of identical values
        assert merged.count == 6
        assert merged.mean == pytest.approx(a.mean)

    def test_commutative(self):
        a = summarize(np.array([1.0, 2.0]))
        b = summarize(np.array([3.0, 4.0]))
        assert merge(a, b) == merge(b, a)

    def test_merge_with_all_nan_side(self):
        a = summarize(np.array([float("nan")]))
        b = summarize(np.array([1.0, 3.0]))
        merged = merge(a, b)
        assert merged.count == 3
        assert merged.count_nan == 1
        assert merged.mean == pytest.approx(2.0)

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
                    min_size=2, max_size=120),
           st.integers(min_value=1, max_value=119))
    @settings(max_examples=150, deadline=None)
    def test_merge_random_splits(self, values, cut):
        cut = min(cut, len(values) - 1)
        left = summarize(np.array(values[:cut]))
        right = summarize(np.array(values[cut:]))
        merged = merge(left, right)
        assert_stats_close(merged, two_pass_stats(values), rel=1e-9)


class TestPerNeuron:
    def test_two_column_example(self):
        # frozen via the per-column two-pass oracle
        stats = per_neuron_stats(np.array([[1.0, 10.0], [3.0, 20.0]]))
        assert stats[0].mean == pytest.approx(2.0)
        assert stats[0].std == pytest.approx(1.0)
        assert stats[1].mean == pytest.approx(15.0)
        assert stats[1].std == pytest.approx(5.0)

    def test_singleton_batch(self):
        stats = per_neuron_stats(np.array([[4.0, -2.0, 0.0]]))
        assert all(s.std == 0.0 for s in stats)
        assert [s.mean for s in stats] == [4.0, -2.0, 0.0]

    def test_all_zero(self):
        stats = per_neuron_stats(np.zeros((4, 3)))
        assert all(s.frac_zero == 1.0 for s in stats)

    def test_columns_match_summarize(self):
        rng = np.random.default_rng(5)
        values = rng.normal(size=(17, 9))
        values[3, 2] = np.nan
        values[5, 0] = np.inf
        stats = per_neuron_stats(values)
        for j in range(values.shape[1]):
            expected = two_pass_stats(values[:, j])
            assert_stats_close(stats[j], expected)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            per_neuron_stats(np.zeros(5))


class TestZscore:
    def test_outlier_column(self):
        # batch column [0,0,0,10]: mean 2.5, std sqrt(75/4); z = 7.5/std = sqrt(3)
        stats = per_neuron_stats(np.array([[0.0], [0.0], [0.0], [10.0]]))
        z = zscore(np.array([10.0]), stats)
        assert stats[0].mean == pytest.approx(2.5)
        assert stats[0].std == pytest.approx(4.330127018922193)
        assert z[0] == pytest.approx(1.7320508075688772)

    def test_sample_at_mean(self):
        stats = per_neuron_stats(np.array([[1.0], [3.0]]))
        assert zscore(np.array([2.0]), stats)[0] == 0.0

    def test_degenerate_constant_column(self):
        stats = per_neuron_stats(np.array([[5.0], [5.0]]))
        z = zscore(np.array([7.0]), stats)
        assert math.isinf(z[0]) and z[0] > 0
        z = zscore(np.array([3.0]), stats)
        assert math.isinf(z[0]) and z[0] < 0
        assert zscore(np.array([5.0]), stats)[0] == 0.0

    def test_length_mismatch(self):
        stats = per_neuron_stats(np.ones((2, 2)))
        with pytest.raises(ShapeError):
            zscore(np.array([1.0]), stats)

    @given(st.integers(min_value=2, max_value=24), st.integers(min_value=1, max_value=8),
           st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_batch_zscores_average_to_zero(self, batch, features, seed):
        rng = np.random.default_rng(seed)
        values = rng.normal(scale=10.0, size=(batch, features))
        stats = per_neuron_stats(values)
        zs = np.stack([zscore(values[i], stats) for i in range(batch)])
        finite_cols = [j for j in range(features) if np.all(np.isfinite(zs[:, j]))]
        for j in finite_cols:
            assert abs(zs[:, j].mean()) < 1e-9
