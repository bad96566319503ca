"""Streaming, mergeable batch statistics and z-score outlier measures.

All moments accumulate in float64 regardless of the input dtype.  Non-finite
elements never poison a moment: they are counted separately and excluded from
mean/std/min/max/abs_mean/l2.  Standard deviation is the population standard
deviation, so a singleton batch yields std 0 rather than an undefined value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyTensorError, ShapeError
from .model import TensorStats

_CHUNK = 1 << 16


@dataclass
class StatsAccumulator:
    """Mutable single-pass accumulator; feed chunks, then ``finalize()``.

    Chunks combine through the pairwise update for the running mean and the
    running sum of squared deviations, so accumulators for disjoint slices of
    one tensor can be merged in any order.
    """

    count: int = 0
    count_nan: int = 0
    count_inf: int = 0
    zero_count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    abs_sum: float = 0.0
    sq_sum: float = 0.0
    min: float = math.inf
    max: float = -math.inf

    @property
    def finite_count(self) -> int:
        return self.count - self.count_nan - self.count_inf

    def update(self, values: np.ndarray) -> "StatsAccumulator":
        values = np.asarray(values, dtype=np.float64).ravel()
        for start in range(0, values.size, _CHUNK):
            self._update_chunk(values[start:start + _CHUNK])
        return self

    def _update_chunk(self, chunk: np.ndarray) -> None:
        n = chunk.size
        if n == 0:
            return
        self.count += n
        nan_count = int(np.isnan(chunk).sum())
        inf_count = int(np.isinf(chunk).sum())
        self.count_nan += nan_count
        self.count_inf += inf_count
        if nan_count or inf_count:
            finite = chunk[np.isfinite(chunk)]
        else:
            finite = chunk
        k = finite.size
        if k == 0:
            return
        self.zero_count += int((finite == 0.0).sum())
        self.abs_sum += float(np.abs(finite).sum())
        self.sq_sum += float((finite * finite).sum())
        self.min = min(self.min, float(finite.min()))
        self.max = max(self.max, float(finite.max()))
        chunk_mean = float(finite.mean())
        chunk_m2 = float(((finite - chunk_mean) ** 2).sum())
        self._combine_moments(k, chunk_mean, chunk_m2)

    def _combine_moments(self, k: int, other_mean: float, other_m2: float) -> None:
        prior = self.finite_count - k
        if prior == 0:
            self.mean = other_mean
            self.m2 = other_m2
            return
        total = prior + k
        delta = other_mean - self.mean
        self.mean += delta * k / total
        self.m2 += other_m2 + delta * delta * prior * k / total

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        if other.count == 0:
            return self
        own_finite = self.finite_count
        self.count += other.count
        self.count_nan += other.count_nan
        self.count_inf += other.count_inf
        self.zero_count += other.zero_count
        self.abs_sum += other.abs_sum
        self.sq_sum += other.sq_sum
        if other.finite_count:
            self.min = min(self.min, other.min)
            self.max = max(self.max, other.max)
            if own_finite == 0:
                self.mean, self.m2 = other.mean, other.m2
            else:
                total = own_finite + other.finite_count
                delta = other.mean - self.mean
                self.mean += delta * other.finite_count / total
                self.m2 += other.m2 + delta * delta * own_finite * other.finite_count / total
        return self

    def finalize(self) -> TensorStats:
        if self.count == 0:
            raise EmptyTensorError("cannot summarize zero elements")
        k = self.finite_count
        if k == 0:
            nan = float("nan")
            return TensorStats(count=self.count, mean=nan, std=nan, abs_mean=nan,
                               min=nan, max=nan, l2_norm=0.0, frac_zero=0.0,
                               count_nan=self.count_nan, count_inf=self.count_inf)
        return TensorStats(
            count=self.count,
            mean=self.mean,
            std=math.sqrt(max(self.m2, 0.0) / k),
            abs_mean=self.abs_sum / k,
            min=self.min,
            max=self.max,
            l2_norm=math.sqrt(self.sq_sum),
            frac_zero=self.zero_count / k,
            count_nan=self.count_nan,
            count_inf=self.count_inf,
        )


def summarize(values: np.ndarray) -> TensorStats:
    """Single-pass summary statistics over all elements of ``values``."""
    values = np.asarray(values)
    if values.size == 0:
        raise EmptyTensorError("cannot summarize an empty tensor")
    return StatsAccumulator().update(values).finalize()


def merge(a: TensorStats, b: TensorStats) -> TensorStats:
    """Combine stats of two disjoint element sets of the same tensor.

    Equals ``summarize`` over the concatenation up to floating tolerance;
    counters, min/max, and l2 combine exactly.  Disjointness is the caller's
    responsibility; it cannot be checked from the summaries alone.
    """
    return _as_accumulator(a).merge(_as_accumulator(b)).finalize()


def _as_accumulator(stats: TensorStats) -> StatsAccumulator:
    k = stats.finite_count
    acc = StatsAccumulator(count=stats.count, count_nan=stats.count_nan,
                           count_inf=stats.count_inf)
    if k > 0:
        acc.zero_count = round(stats.frac_zero * k)
        acc.mean = stats.mean
        acc.m2 = stats.std * stats.std * k
        acc.abs_sum = stats.abs_mean * k
        acc.sq_sum = stats.l2_norm * stats.l2_norm
        acc.min = stats.min
        acc.max = stats.max
    return acc


def per_neuron_stats(values: np.ndarray) -> tuple[TensorStats, ...]:
    """Per-feature statistics over the batch axis of a (batch, features) array.

    Column ``j`` of the result equals ``summarize(values[:, j])``.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"expected a 2-D (batch, features) array, got shape {values.shape}")
    b, d = values.shape
    if b < 1 or d < 1:
        raise EmptyTensorError("per_neuron_stats requires at least a 1x1 array")

    finite = np.isfinite(values)
    nan_counts = np.isnan(values).sum(axis=0)
    inf_counts = np.isinf(values).sum(axis=0)
    finite_counts = finite.sum(axis=0)
    safe_counts = np.maximum(finite_counts, 1)

    masked = np.where(finite, values, 0.0)
    col_sum = masked.sum(axis=0)
    col_mean = col_sum / safe_counts
    deviations = np.where(finite, values - col_mean, 0.0)
    col_m2 = (deviations * deviations).sum(axis=0)
    col_std = np.sqrt(np.maximum(col_m2, 0.0) / safe_counts)
    col_abs = np.abs(masked).sum(axis=0) / safe_counts
    col_sq = (masked * masked).sum(axis=0)
    col_l2 = np.sqrt(col_sq)
    col_min = np.where(finite, values, math.inf).min(axis=0)
    col_max = np.where(finite, values, -math.inf).max(axis=0)
    zeros = (masked == 0.0) & finite
    col_zero_frac = zeros.sum(axis=0) / safe_counts

    nan = float("nan")
    out = []
    for j in range(d):
        k = int(finite_counts[j])
        if k == 0:
            out.append(TensorStats(count=b, mean=nan, std=nan, abs_mean=nan,
                                   min=nan, max=nan, l2_norm=0.0, frac_zero=0.0,
                                   count_nan=int(nan_counts[j]),
                                   count_inf=int(inf_counts[j])))
        else:
            out.append(TensorStats(count=b,
                                   mean=float(col_mean[j]),
                                   std=float(col_std[j]),
                                   abs_mean=float(col_abs[j]),
                                   min=float(col_min[j]),
                                   max=float(col_max[j]),
                                   l2_norm=float(col_l2[j]),
                                   frac_zero=float(col_zero_frac[j]),
                                   count_nan=int(nan_counts[j]),
                                   count_inf=int(inf_counts[j])))
    return tuple(out)


def zscore(sample_row: np.ndarray, neuron_stats: tuple[TensorStats, ...]) -> np.ndarray:
    """Z-score of one batch row against its batch's per-neuron mean and std.

    Where a neuron's batch column is constant (std 0) the z-score is 0 if the
    sample matches the mean, otherwise a signed infinity marking a degenerate
    deviation.  NaN inputs and all-non-finite columns yield NaN.
    """
    row = np.asarray(sample_row, dtype=np.float64).ravel()
    if row.size != len(neuron_stats):
        raise ShapeError(
            f"sample row has {row.size} values but {len(neuron_stats)} neuron stats given")
    for stats in neuron_stats:
        if stats.count < 1:
            raise EmptyTensorError("neuron stats must cover at least one element")
    out = np.empty(row.size, dtype=np.float64)
    for j, stats in enumerate(neuron_stats):
        x = row[j]
        if math.isnan(x) or math.isnan(stats.mean):
            out[j] = math.nan
        elif stats.std > 0.0:
            out[j] = (x - stats.mean) / stats.std
        elif x == stats.mean:
            out[j] = 0.0
        else:
            out[j] = math.copysign(math.inf, x - stats.mean)
    return out
