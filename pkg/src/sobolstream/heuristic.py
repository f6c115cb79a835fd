"""Noise-threshold heuristic for screening out insignificant indices.

Estimated first-order indices for inputs with no real influence scatter
around zero, going negative about half the time. Reflecting the negative
estimates across the origin gives a symmetric, mean-zero sample of that
noise distribution; its standard deviation sets a threshold (``k`` sigma,
``k = 4`` by default) below which an index cannot be distinguished from
zero at the current sample size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoNegativeIndicesError
from .validation import as_float_vector

SIGMA_CONVENTION = "symmetrized-negatives, mean fixed at zero, divisor 2m-1"


@dataclass(frozen=True)
class NoiseThreshold:
    """Noise scale estimate and the screening cutoff derived from it."""

    sigma: float
    k: float
    threshold: float
    n_negative: int


@dataclass(frozen=True)
class FilterResult:
    """Indices that clear the threshold, largest first."""

    significant: list
    threshold: NoiseThreshold
    explained_sum: float


def noise_sigma(indices, k: float = 4.0) -> NoiseThreshold:
    """Noise standard deviation from negative indices reflected across zero.

    With ``m`` strictly negative values, the symmetrized set has ``2m``
    members and mean exactly zero by construction, so
    ``sigma = sqrt(sum(x^2) / (2m - 1))`` over the symmetrized set.
    Raises :class:`NoNegativeIndicesError` when no index is negative.
    """
    arr = as_float_vector(indices, "indices")
    neg = arr[arr < 0.0]
    m = neg.size
    if m == 0:
        raise NoNegativeIndicesError(
            "no negative indices: the zero-index noise level cannot be "
            "estimated from this collection"
        )
    sigma = float(np.sqrt(2.0 * np.square(neg).sum() / (2 * m - 1)))
    return NoiseThreshold(sigma=sigma, k=float(k), threshold=float(k) * sigma, n_negative=m)


def filter_indices(indices, k: float = 4.0) -> FilterResult:
    """Split indices into significant and noise-level, largest first.

    Returns the entries strictly above the ``k * sigma`` threshold as
    ``(input position, value)`` pairs in descending value order, together
    with the threshold and the sum of the significant values (an estimate
    of the variance fraction they jointly explain).
    """
    arr = as_float_vector(indices, "indices")
    threshold = noise_sigma(arr, k)
    keep = np.flatnonzero(arr > threshold.threshold)
    order = keep[np.argsort(arr[keep])[::-1]]
    significant = [(int(i), float(arr[i])) for i in order]
    return FilterResult(
        significant=significant,
        threshold=threshold,
        explained_sum=float(arr[order].sum()) if order.size else 0.0,
    )
