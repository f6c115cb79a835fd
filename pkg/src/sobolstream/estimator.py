"""Streaming given-data estimation of first-order Sobol' indices.

The estimator partitions each input's axis into bins, maintains mergeable
running moments of the output within every bin (plus one global accumulator),
and finalizes the index for input ``i`` as

    S_i = 1 - EV_i / V,   EV_i = sum_k s2(bin k) * n_k / N,

where ``s2`` is the Bessel-corrected within-bin variance, ``n_k / N`` the
empirical bin probability, and ``V`` the variance over all outputs. Because
bin weights are carried explicitly, the partition does not need to be
equiprobable, and bins left empty or nearly empty simply contribute nothing.

State grows as O(d * bins) regardless of how many samples are ingested; raw
samples are never retained. Finalization is non-destructive, so intermediate
snapshots along a stream are cheap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .errors import (
    DataError,
    DegeneratePartitionError,
    InsufficientDataError,
    ParameterError,
    SobolStreamError,
    ZeroVarianceError,
)
from .partition import Partition, build_partition
from .streamstats import (
    RunningMoments,
    batch_moments_by_bin,
    merge_moment_arrays,
    sample_variance_arrays,
)
from .validation import check_xy

# Bin assignment for a batch switches between a per-column loop (few, large
# columns) and one broadcast comparison against a padded edge matrix (many,
# small columns, where per-column call overhead would dominate).
_BROADCAST_MAX_ELEMENTS = 30_000_000
_BROADCAST_MIN_COLUMNS = 32


@dataclass(frozen=True)
class SobolResult:
    """Finalized first-order indices and the statistics behind them."""

    s: np.ndarray
    ev: np.ndarray
    bin_counts: list
    total_variance: float
    n: int
    bins: np.ndarray
    scheme: str
    m_requested: int
    init_ingested: bool = field(default=True)

    @property
    def d(self) -> int:
        return self.s.size

    def to_dict(self, include_bin_counts: bool = False) -> dict:
        """JSON-ready summary; full per-input bin counts only on request."""
        per_input = []
        for i in range(self.d):
            counts = np.asarray(self.bin_counts[i])
            entry = {
                "index": i,
                "s": float(self.s[i]),
                "ev": float(self.ev[i]),
                "bin_counts_summary": {
                    "m_effective": int(self.bins[i]),
                    "min": int(counts.min()),
                    "max": int(counts.max()),
                    "mean": float(counts.mean()),
                },
            }
            if include_bin_counts:
                entry["bin_counts"] = [int(c) for c in counts]
            per_input.append(entry)
        return {
            "total_variance": float(self.total_variance),
            "n": int(self.n),
            "scheme": self.scheme,
            "bins_requested": int(self.m_requested),
            "init_ingested": bool(self.init_ingested),
            "per_input": per_input,
        }


class SobolAccumulator:
    """Per-input binned running moments plus one global accumulator.

    Partitions are frozen at construction; every ingested batch updates the
    d x M grid of moment triples and the global output moments. Ingestion
    order and batch boundaries do not matter beyond floating-point roundoff.

    One writer at a time; accumulators built over disjoint shards with
    identical partitions can be combined with :meth:`merge`.
    """

    def __init__(self, partitions: list):
        if not partitions:
            raise ParameterError("at least one input partition is required")
        self.partitions = list(partitions)
        self._edges = [p.interior_edges for p in self.partitions]
        d = len(self.partitions)
        self._m_eff = np.array([p.m_effective for p in self.partitions], dtype=np.int64)
        m_max = int(self._m_eff.max())
        # Edge matrix padded with +inf supports the broadcast assignment path.
        self._edge_matrix = np.full((d, m_max - 1 if m_max > 1 else 0), np.inf)
        for i, e in enumerate(self._edges):
            self._edge_matrix[i, : e.size] = e
        self._m_max = m_max
        self._counts = np.zeros((d, m_max), dtype=np.int64)
        self._means = np.zeros((d, m_max), dtype=np.float64)
        self._uvs = np.zeros((d, m_max), dtype=np.float64)
        self._total = RunningMoments()

    # -- construction ------------------------------------------------------

    @classmethod
    def initialize(
        cls,
        init_x,
        init_y,
        scheme: str = "equidistant",
        m: int = 50,
        truncation=None,
    ) -> "SobolAccumulator":
        """Build per-input partitions from an initial batch and ingest it.

        The initial samples count toward the statistics (``n_seen`` equals
        the number of rows given), so a run where the initial set is the full
        sample set is exactly the all-at-once computation.
        """
        x, y = check_xy(init_x, init_y)
        if x.shape[0] < 2:
            raise InsufficientDataError(
                f"need at least 2 initialization rows, got {x.shape[0]}"
            )
        partitions = _build_partitions(x, scheme, m, truncation)
        acc = cls(partitions)
        acc._ingest_validated(x, y)
        return acc

    @property
    def d(self) -> int:
        return len(self.partitions)

    @property
    def n_seen(self) -> int:
        return self._total.n

    @property
    def scheme(self) -> str:
        return self.partitions[0].scheme

    @property
    def m_requested(self) -> int:
        return self.partitions[0].m_requested

    # -- ingestion ---------------------------------------------------------

    def ingest(self, x, y) -> "SobolAccumulator":
        """Fold a batch of samples into the binned statistics.

        Empty batches are no-ops. Returns ``self`` for chaining.
        """
        x, y = check_xy(x, y)
        if x.shape[1] != self.d:
            raise DataError(f"batch has {x.shape[1]} columns, expected {self.d}")
        return self._ingest_validated(x, y)

    def _ingest_validated(self, x: np.ndarray, y: np.ndarray) -> "SobolAccumulator":
        b = x.shape[0]
        if b == 0:
            return self
        self._total = self._total.merge(RunningMoments.from_values(y))
        if self.d >= _BROADCAST_MIN_COLUMNS and b * self._edge_matrix.size <= _BROADCAST_MAX_ELEMENTS:
            self._ingest_broadcast(x, y)
        else:
            self._ingest_per_column(x, y)
        return self

    def _ingest_per_column(self, x: np.ndarray, y: np.ndarray) -> None:
        for i in range(self.d):
            idx = np.searchsorted(self._edges[i], x[:, i], side="right")
            counts, means, uvs = batch_moments_by_bin(idx, y, self._m_max)
            n, mean, uv = merge_moment_arrays(
                self._counts[i], self._means[i], self._uvs[i], counts, means, uvs
            )
            self._counts[i], self._means[i], self._uvs[i] = n, mean, uv

    def _ingest_broadcast(self, x: np.ndarray, y: np.ndarray) -> None:
        b, d = x.shape
        m_max = self._m_max
        idx = (x[:, :, None] >= self._edge_matrix[None, :, :]).sum(axis=2)
        flat = (idx + np.arange(d, dtype=np.int64) * m_max).ravel()
        size = d * m_max
        y_rep = np.repeat(y, d)
        counts = np.bincount(flat, minlength=size).reshape(d, m_max).astype(np.int64)
        sums = np.bincount(flat, weights=y_rep, minlength=size).reshape(d, m_max)
        means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        dev2 = np.square(y_rep - means.ravel()[flat])
        uvs = np.bincount(flat, weights=dev2, minlength=size).reshape(d, m_max)
        uvs[counts == 0] = 0.0
        n, mean, uv = merge_moment_arrays(
            self._counts, self._means, self._uvs, counts, means, uvs
        )
        self._counts, self._means, self._uvs = n, mean, uv

    def merge(self, other: "SobolAccumulator") -> "SobolAccumulator":
        """Combine with an accumulator built over a disjoint shard.

        Both accumulators must share identical partitions; the merge is the
        cell-wise pairwise moment combination.
        """
        if other.d != self.d or other._m_max != self._m_max:
            raise DataError("cannot merge accumulators with different layouts")
        for a, b in zip(self._edges, other._edges):
            if a.size != b.size or not np.array_equal(a, b):
                raise DataError("cannot merge accumulators with different partitions")
        n, mean, uv = merge_moment_arrays(
            self._counts, self._means, self._uvs,
            other._counts, other._means, other._uvs,
        )
        self._counts, self._means, self._uvs = n, mean, uv
        self._total = self._total.merge(other._total)
        return self

    # -- finalization ------------------------------------------------------

    def finalize(self) -> SobolResult:
        """Snapshot the current indices without disturbing the accumulator."""
        n = self.n_seen
        if n < 2:
            raise InsufficientDataError(f"need at least 2 samples, have {n}")
        vhat = self._total.sample_variance()
        if vhat <= 0.0:
            raise ZeroVarianceError(
                "total output variance is zero; indices are undefined"
            )
        within = sample_variance_arrays(self._counts, self._uvs)
        ev = (within * self._counts).sum(axis=1) / n
        s = 1.0 - ev / vhat
        bin_counts = [self._counts[i, : self._m_eff[i]].copy() for i in range(self.d)]
        return SobolResult(
            s=s,
            ev=ev,
            bin_counts=bin_counts,
            total_variance=vhat,
            n=n,
            bins=self._m_eff.copy(),
            scheme=self.scheme,
            m_requested=self.m_requested,
        )

    # -- inspection and persistence ----------------------------------------

    def bin_moments(self, i: int) -> list:
        """Per-bin :class:`RunningMoments` for input ``i`` (effective bins only)."""
        return [
            RunningMoments(
                int(self._counts[i, k]),
                float(self._means[i, k]),
                float(self._uvs[i, k]),
            )
            for k in range(self._m_eff[i])
        ]

    @property
    def total_moments(self) -> RunningMoments:
        return self._total

    def to_state(self) -> dict:
        """Self-describing snapshot sufficient to resume ingestion elsewhere."""
        inputs = []
        for i, p in enumerate(self.partitions):
            m = int(self._m_eff[i])
            inputs.append(
                {
                    "edges": [float(e) for e in p.interior_edges],
                    "collapsed": bool(p.collapsed),
                    "cells": {
                        "n": [int(v) for v in self._counts[i, :m]],
                        "mean": [float(v) for v in self._means[i, :m]],
                        "uv": [float(v) for v in self._uvs[i, :m]],
                    },
                }
            )
        return {
            "format": "sobolstream-accumulator",
            "version": 1,
            "scheme": self.scheme,
            "m_requested": int(self.m_requested),
            "n_seen": int(self.n_seen),
            "total": {
                "n": int(self._total.n),
                "mean": float(self._total.mean),
                "uv": float(self._total.uv),
            },
            "inputs": inputs,
        }

    @classmethod
    def from_state(cls, state: dict) -> "SobolAccumulator":
        if state.get("format") != "sobolstream-accumulator":
            raise DataError("not an accumulator snapshot")
        if state.get("version") != 1:
            raise DataError(f"unsupported snapshot version {state.get('version')!r}")
        partitions = [
            Partition(
                np.asarray(rec["edges"], dtype=np.float64),
                state["scheme"],
                int(state["m_requested"]),
                bool(rec.get("collapsed", False)),
            )
            for rec in state["inputs"]
        ]
        acc = cls(partitions)
        for i, rec in enumerate(state["inputs"]):
            cells = rec["cells"]
            m = len(cells["n"])
            acc._counts[i, :m] = np.asarray(cells["n"], dtype=np.int64)
            acc._means[i, :m] = np.asarray(cells["mean"], dtype=np.float64)
            acc._uvs[i, :m] = np.asarray(cells["uv"], dtype=np.float64)
        total = state["total"]
        acc._total = RunningMoments(int(total["n"]), float(total["mean"]), float(total["uv"]))
        return acc

    def save_state(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_state()))

    @classmethod
    def load_state(cls, path) -> "SobolAccumulator":
        return cls.from_state(json.loads(Path(path).read_text()))


def _tag_input(i: int, err: SobolStreamError) -> SobolStreamError:
    return type(err)(f"input {i}: {err}")


def _build_partitions(x: np.ndarray, scheme: str, m: int, truncation) -> list:
    """Per-column partitions, vectorized across columns where the scheme allows."""
    d = x.shape[1]
    if scheme == "equidistant" and truncation is None:
        lo, hi = x.min(axis=0), x.max(axis=0)
        return _equidistant_from_bounds(lo, hi, m)
    if scheme == "equidistant":
        lo_level, hi_level = truncation
        if not (0.0 <= lo_level < hi_level <= 1.0):
            raise ParameterError(
                f"truncation levels must satisfy 0 <= lo < hi <= 1, got {truncation}"
            )
        lo, hi = np.quantile(
            x, [lo_level, hi_level], axis=0, method="interpolated_inverted_cdf"
        )
        return _equidistant_from_bounds(lo, hi, m)
    if scheme == "quantile":
        if m < 2:
            raise ParameterError(f"bin count must be at least 2, got {m}")
        levels = np.arange(1, m) / m
        edge_matrix = np.quantile(x, levels, axis=0, method="interpolated_inverted_cdf")
        partitions = []
        for i in range(d):
            col = edge_matrix[:, i]
            if (np.diff(col) > 0).all():
                partitions.append(Partition(col, "quantile", m))
            else:
                try:
                    partitions.append(build_partition(x[:, i], "quantile", m))
                except SobolStreamError as err:
                    raise _tag_input(i, err) from err
        return partitions
    partitions = []
    for i in range(d):
        try:
            partitions.append(build_partition(x[:, i], scheme, m, truncation))
        except SobolStreamError as err:
            raise _tag_input(i, err) from err
    return partitions


def _equidistant_from_bounds(lo: np.ndarray, hi: np.ndarray, m: int) -> list:
    if m < 2:
        raise ParameterError(f"bin count must be at least 2, got {m}")
    degenerate = ~(lo < hi)
    if degenerate.any():
        i = int(np.flatnonzero(degenerate)[0])
        raise _tag_input(
            i,
            DegeneratePartitionError(
                f"degenerate range [{lo[i]}, {hi[i]}]: equidistant partition undefined"
            ),
        )
    steps = np.arange(1, m, dtype=np.float64)
    edge_matrix = lo[None, :] + steps[:, None] * ((hi - lo) / m)[None, :]
    return [Partition(edge_matrix[:, i], "equidistant", m) for i in range(lo.size)]


def all_at_once(x, y, scheme: str = "equidistant", m: int = 50, truncation=None) -> SobolResult:
    """Indices from the full sample set in one pass (partition from all rows)."""
    return SobolAccumulator.initialize(x, y, scheme=scheme, m=m, truncation=truncation).finalize()


class SobolIndexEstimator(BaseEstimator):
    """First-order Sobol' index estimator with a scikit-learn interface.

    ``fit(X, y)`` performs the all-at-once computation; ``partial_fit(X, y)``
    streams batches, building the per-input partitions from the first batch
    and folding every batch (including the first) into O(d * bins) running
    statistics. Estimates refresh after every call and never retain samples.

    Parameters
    ----------
    bins : int, default=50
        Requested number of bins per input. The effective number can be
        smaller for inputs whose quantile edges collapse (repeated values).
    scheme : {"equidistant", "quantile", "kde"}, default="equidistant"
        Partitioning scheme. ``quantile`` and ``kde`` target equiprobable
        bins; ``equidistant`` splits the observed range evenly and is robust
        to point masses in the input distribution.
    truncation : tuple of (float, float), optional
        Quantile levels used to truncate the range of the equidistant
        scheme, e.g. ``(1e-4, 1 - 1e-4)`` for laws with unbounded support.

    Attributes
    ----------
    indices_ : ndarray of shape (d,)
        First-order index estimate per input. May be slightly negative for
        inputs with no influence (statistical noise).
    ev_ : ndarray of shape (d,)
        Weighted mean within-bin output variance per input (the numerator
        of the subtracted ratio).
    total_variance_ : float
        Bessel-corrected variance of all outputs seen.
    bin_counts_ : list of ndarray
        Per-input sample counts per bin.
    m_effective_ : ndarray of shape (d,)
        Effective bin count per input after duplicate-edge collapse.
    n_samples_seen_ : int
        Number of samples ingested so far.
    n_features_in_ : int
        Number of inputs.
    result_ : SobolResult
        Full finalized result snapshot.
    accumulator_ : SobolAccumulator
        Live streaming state (partitions plus moment grid).
    """

    def __init__(self, bins: int = 50, scheme: str = "equidistant", truncation=None):
        self.bins = bins
        self.scheme = scheme
        self.truncation = truncation

    def fit(self, X, y) -> "SobolIndexEstimator":
        """All-at-once estimation: partitions and statistics from all rows."""
        self.accumulator_ = SobolAccumulator.initialize(
            X, y, scheme=self.scheme, m=self.bins, truncation=self.truncation
        )
        self.n_features_in_ = self.accumulator_.d
        self._refresh(strict=True)
        return self

    def partial_fit(self, X, y) -> "SobolIndexEstimator":
        """Streaming estimation: first batch defines the partitions."""
        if not hasattr(self, "accumulator_"):
            self.accumulator_ = SobolAccumulator.initialize(
                X, y, scheme=self.scheme, m=self.bins, truncation=self.truncation
            )
            self.n_features_in_ = self.accumulator_.d
        else:
            self.accumulator_.ingest(X, y)
        self._refresh(strict=False)
        return self

    def result(self) -> SobolResult:
        """Finalized snapshot; raises if the stream is still degenerate."""
        if not hasattr(self, "accumulator_"):
            raise InsufficientDataError("estimator has not been fitted")
        return self.accumulator_.finalize()

    def _refresh(self, strict: bool) -> None:
        try:
            result = self.accumulator_.finalize()
        except (InsufficientDataError, ZeroVarianceError):
            if strict:
                raise
            return
        self.result_ = result
        self.indices_ = result.s
        self.ev_ = result.ev
        self.total_variance_ = result.total_variance
        self.bin_counts_ = result.bin_counts
        self.m_effective_ = result.bins
        self.n_samples_seen_ = result.n
