"""Mergeable first/second-moment accumulators.

A :class:`RunningMoments` value holds a sample count, the running mean, and
the unscaled variance (the sum of squared deviations from the current mean).
Two accumulators built from disjoint sample sets can be merged with the
pairwise update rule

    n  = n1 + n2
    d  = mean2 - mean1
    mean = mean1 + (n2 / n) * d
    uv   = uv1 + uv2 + (n1 * n2 / n) * d**2

which is associative and commutative up to floating-point roundoff, so
reduction trees over batches give the same result as sequential folding.
Vectorized twins of the scalar operations (:func:`batch_moments_by_bin`,
:func:`merge_moment_arrays`) back the binned estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import as_float_vector


@dataclass(frozen=True)
class RunningMoments:
    """Count, running mean, and unscaled variance of a sample set.

    The canonical empty state ``RunningMoments()`` is ``(0, 0.0, 0.0)`` and
    acts as a two-sided identity under :meth:`merge`.
    """

    n: int = 0
    mean: float = 0.0
    uv: float = 0.0

    @classmethod
    def from_values(cls, values) -> "RunningMoments":
        """Exact two-pass moments of a batch of values.

        An empty batch returns the canonical empty state. Non-finite values
        are rejected with :class:`~sobolstream.errors.DataError`.
        """
        arr = as_float_vector(values, "values")
        if arr.size == 0:
            return cls()
        mean = float(arr.mean())
        uv = float(np.square(arr - mean).sum())
        return cls(n=int(arr.size), mean=mean, uv=uv)

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        """Moments of the union of the two underlying (disjoint) sample sets."""
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + (other.n / n) * delta
        uv = self.uv + other.uv + (self.n * other.n / n) * delta * delta
        return RunningMoments(n=n, mean=mean, uv=uv)

    def sample_variance(self) -> float:
        """Bessel-corrected variance ``uv / (n - 1)``; zero when ``n < 2``.

        The ``n < 2`` convention keeps binned estimators uniform: bins holding
        zero or one sample contribute no within-bin variance.
        """
        if self.n < 2:
            return 0.0
        return self.uv / (self.n - 1)


def batch_moments_by_bin(
    bin_idx: np.ndarray, y: np.ndarray, n_bins: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two-pass moments of ``y`` grouped by bin index.

    Returns ``(counts, means, uvs)`` arrays of length ``n_bins``. Empty bins
    get the canonical empty state ``(0, 0.0, 0.0)``.
    """
    counts = np.bincount(bin_idx, minlength=n_bins).astype(np.int64)
    sums = np.bincount(bin_idx, weights=y, minlength=n_bins)
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    dev2 = np.square(y - means[bin_idx])
    uvs = np.bincount(bin_idx, weights=dev2, minlength=n_bins)
    uvs[counts == 0] = 0.0
    return counts, means, uvs


def merge_moment_arrays(
    n1: np.ndarray,
    mean1: np.ndarray,
    uv1: np.ndarray,
    n2: np.ndarray,
    mean2: np.ndarray,
    uv2: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Elementwise pairwise merge of two moment-array triples.

    Cells where both operands are empty stay at the canonical empty state.
    Matches :meth:`RunningMoments.merge` cell by cell.
    """
    n = n1 + n2
    nonempty = n > 0
    delta = mean2 - mean1
    frac2 = np.divide(n2, n, out=np.zeros(np.shape(n), dtype=np.float64), where=nonempty)
    mean = np.where(nonempty, mean1 + frac2 * delta, 0.0)
    # With one empty operand the canonical zeros make the cross term vanish.
    cross = np.divide(
        n1 * n2, n, out=np.zeros(np.shape(n), dtype=np.float64), where=nonempty
    )
    uv = np.where(nonempty, uv1 + uv2 + cross * delta * delta, 0.0)
    return n, mean, uv


def sample_variance_arrays(counts: np.ndarray, uvs: np.ndarray) -> np.ndarray:
    """Vectorized Bessel-corrected variance; zero where ``counts < 2``."""
    out = np.zeros_like(uvs, dtype=np.float64)
    np.divide(uvs, counts - 1, out=out, where=counts >= 2)
    return out
