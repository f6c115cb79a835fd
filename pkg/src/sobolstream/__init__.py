"""Streaming given-data estimation of first-order Sobol' sensitivity indices.

The package computes variance-based first-order sensitivity indices from an
unstructured set of input-output samples, processed either all at once or in
batches of any size with O(d * bins) memory. Bin weights are tracked
explicitly, so equiprobable, KDE-based, and equidistant partitions are all
supported, including inputs whose distributions carry point masses.
"""

from .errors import (
    DataError,
    DegeneratePartitionError,
    DegeneratePartitionWarning,
    InsufficientDataError,
    NoClosedFormError,
    NoNegativeIndicesError,
    ParameterError,
    SobolStreamError,
    ZeroVarianceError,
)
from .estimator import SobolAccumulator, SobolIndexEstimator, SobolResult, all_at_once
from .heuristic import FilterResult, NoiseThreshold, filter_indices, noise_sigma
from .partition import (
    Partition,
    assign_bins,
    build_partition,
    equidistant_edges,
    kde_edges,
    quantile_edges,
)
from .streamstats import RunningMoments

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "DegeneratePartitionError",
    "DegeneratePartitionWarning",
    "FilterResult",
    "InsufficientDataError",
    "NoClosedFormError",
    "NoNegativeIndicesError",
    "NoiseThreshold",
    "ParameterError",
    "Partition",
    "RunningMoments",
    "SobolAccumulator",
    "SobolIndexEstimator",
    "SobolResult",
    "SobolStreamError",
    "ZeroVarianceError",
    "all_at_once",
    "assign_bins",
    "build_partition",
    "equidistant_edges",
    "filter_indices",
    "kde_edges",
    "noise_sigma",
    "quantile_edges",
]
