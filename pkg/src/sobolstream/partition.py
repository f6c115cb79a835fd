"""Input-space partitions: interior bin edges plus implicit infinite outer edges.

Three construction schemes are provided:

* ``quantile`` — equiprobable bins from sample quantiles (interpolated
  inverted-CDF definition, Hyndman & Fan's definition 4);
* ``kde`` — equiprobable bins by inverting a Gaussian-KDE approximation of
  the CDF;
* ``equidistant`` — equal-width bins over the (optionally truncated) sample
  range.

Bins follow the left-closed convention ``[a_k, a_{k+1})`` with the outermost
edges at -inf and +inf, so every finite value maps to exactly one bin and
values outside the initial sample range land in the outermost bins.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gaussian_kde

from .errors import (
    DegeneratePartitionError,
    DegeneratePartitionWarning,
    ParameterError,
)
from .validation import as_float_vector

SCHEMES = ("quantile", "kde", "equidistant")

KDE_GRID_POINTS = 4096
KDE_GRID_PAD_BANDWIDTHS = 3.0


@dataclass(frozen=True)
class Partition:
    """Ordered interior bin edges with implicit infinite outer edges.

    ``m_effective`` can be smaller than the requested bin count when
    duplicate edges were collapsed during construction.
    """

    interior_edges: np.ndarray
    scheme: str
    m_requested: int
    collapsed: bool = field(default=False)

    def __post_init__(self):
        edges = np.array(self.interior_edges, dtype=np.float64)
        edges.flags.writeable = False
        object.__setattr__(self, "interior_edges", edges)
        if edges.ndim != 1:
            raise ParameterError("interior_edges must be one-dimensional")
        if edges.size and not np.isfinite(edges).all():
            raise ParameterError("interior edges must be finite")
        if edges.size > 1 and not (np.diff(edges) > 0).all():
            raise ParameterError("interior edges must be strictly increasing")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}")

    @property
    def m_effective(self) -> int:
        return self.interior_edges.size + 1

    def assign(self, values) -> np.ndarray:
        """Map each finite value to its 0-based bin index.

        Values are assigned with the left-closed convention: value ``v``
        lands in bin ``k`` iff ``edges[k-1] <= v < edges[k]``, with the
        outer edges at -inf/+inf, so assignment is total over finite reals.
        """
        arr = as_float_vector(values, "values")
        return np.searchsorted(self.interior_edges, arr, side="right")


def assign_bins(partition: Partition, values) -> np.ndarray:
    """Functional alias for :meth:`Partition.assign`."""
    return partition.assign(values)


def _check_init_samples(init_samples, m: int) -> np.ndarray:
    if m < 2:
        raise ParameterError(f"bin count must be at least 2, got {m}")
    samples = as_float_vector(init_samples, "init_samples", allow_empty=False)
    return samples


def _collapse_duplicates(edges: np.ndarray, scheme: str) -> tuple[np.ndarray, bool]:
    unique = np.unique(edges)
    if unique.size == edges.size:
        return edges, False
    warnings.warn(
        f"{scheme} partition: {edges.size - unique.size} duplicate interior "
        f"edge(s) collapsed; effective bin count reduced to {unique.size + 1}",
        DegeneratePartitionWarning,
        stacklevel=3,
    )
    return unique, True


def quantile_edges(init_samples, m: int) -> Partition:
    """Equiprobable partition from interpolated inverted-CDF sample quantiles.

    Interior edge ``k`` (k = 1..m-1) is the sample quantile at ``k/m``:
    with ``h = n*k/m``, the edge interpolates linearly between the order
    statistics around position ``h`` (clamping to the extremes). Repeated
    sample values can make several quantiles coincide; duplicate edges are
    collapsed into one, shrinking ``m_effective``, with a warning.
    """
    samples = _check_init_samples(init_samples, m)
    if samples.min() == samples.max():
        raise DegeneratePartitionError(
            "all initial samples are identical; no valid interior edge exists"
        )
    levels = np.arange(1, m) / m
    edges = np.quantile(samples, levels, method="interpolated_inverted_cdf")
    edges, collapsed = _collapse_duplicates(edges, "quantile")
    return Partition(edges, "quantile", m, collapsed)


def kde_edges(init_samples, m: int) -> Partition:
    """Equiprobable partition by inverting a Gaussian-KDE CDF approximation.

    The density uses Scott's-rule bandwidth ``std(samples) * n**(-1/5)`` and
    is evaluated on a uniform 4096-point grid padded by three bandwidths
    beyond the sample range; the CDF comes from trapezoid integration and is
    inverted by linear interpolation at the levels ``k/m``.
    """
    samples = _check_init_samples(init_samples, m)
    if np.unique(samples).size < 2:
        raise DegeneratePartitionError(
            "KDE partition needs at least two distinct sample values"
        )
    n = samples.size
    bandwidth = float(samples.std(ddof=1)) * n ** (-1.0 / 5.0)
    pad = KDE_GRID_PAD_BANDWIDTHS * bandwidth
    grid = np.linspace(samples.min() - pad, samples.max() + pad, KDE_GRID_POINTS)
    density = gaussian_kde(samples)(grid)
    dx = grid[1] - grid[0]
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * dx)))
    cdf /= cdf[-1]
    levels = np.arange(1, m) / m
    edges = np.interp(levels, cdf, grid)
    edges, collapsed = _collapse_duplicates(edges, "kde")
    return Partition(edges, "kde", m, collapsed)


def equidistant_edges(init_samples, m: int, truncation=None) -> Partition:
    """Equal-width partition over the sample range.

    With ``lo``/``hi`` the sample minimum/maximum (or their quantiles at the
    ``truncation = (lo_level, hi_level)`` pair when given, useful for laws
    with unbounded support), interior edge ``k`` is ``lo + k*(hi-lo)/m``.
    """
    samples = _check_init_samples(init_samples, m)
    if truncation is not None:
        lo_level, hi_level = truncation
        if not (0.0 <= lo_level < hi_level <= 1.0):
            raise ParameterError(
                f"truncation levels must satisfy 0 <= lo < hi <= 1, got {truncation}"
            )
        lo, hi = np.quantile(
            samples, [lo_level, hi_level], method="interpolated_inverted_cdf"
        )
    else:
        lo, hi = samples.min(), samples.max()
    if not lo < hi:
        raise DegeneratePartitionError(
            f"degenerate range [{lo}, {hi}]: equidistant partition undefined"
        )
    edges = lo + np.arange(1, m) * ((hi - lo) / m)
    return Partition(edges, "equidistant", m)


def build_partition(init_samples, scheme: str, m: int, truncation=None) -> Partition:
    """Dispatch to the edge builder for ``scheme``."""
    if scheme == "quantile":
        return quantile_edges(init_samples, m)
    if scheme == "kde":
        return kde_edges(init_samples, m)
    if scheme == "equidistant":
        return equidistant_edges(init_samples, m, truncation)
    raise ParameterError(f"unknown scheme {scheme!r}")
