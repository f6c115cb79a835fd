"""Sample-stream readers and writers for the command-line driver.

Two on-disk formats carry input-output samples, both laid out one row per
sample with the ``d`` input columns followed by the single output column:

* CSV with a header row. Convenient, but parsing dominates runtime for
  wide inputs.
* ``f64le``: a 16-byte header (8-byte magic ``SOBLF64\\0``, little-endian
  uint32 version, little-endian uint32 d) followed by row-major
  little-endian float64 records of ``d + 1`` values each. At 10^4-plus
  inputs per row this is the only format that keeps ingestion I/O-bound.

Readers yield ``(x, y)`` batches of at most ``batch_size`` rows so callers
never hold the full sample set.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .models import ModelSampleStream, ModelSpec

F64LE_MAGIC = b"SOBLF64\x00"
F64LE_VERSION = 1
_HEADER = struct.Struct("<8sII")


def write_f64le(path, x, y) -> None:
    """Write paired samples to the binary format."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise DataError("write_f64le needs an (n, d) matrix and a length-n vector")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(F64LE_MAGIC, F64LE_VERSION, x.shape[1]))
        rows = np.empty((x.shape[0], x.shape[1] + 1), dtype="<f8")
        rows[:, :-1] = x
        rows[:, -1] = y
        fh.write(rows.tobytes())


def write_csv(path, x, y, input_names=None) -> None:
    """Write paired samples as CSV with a header row."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise DataError("write_csv needs an (n, d) matrix and a length-n vector")
    names = input_names or [f"x{i}" for i in range(x.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["y"])
        for row, out in zip(x, y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(out))])


class CsvSampleReader:
    """Streams (x, y) batches from a headered CSV file."""

    def __init__(self, path):
        self.path = Path(path)
        with open(self.path, newline="") as fh:
            header = next(csv.reader(fh), None)
        if not header or len(header) < 2:
            raise DataError(f"{self.path}: need a header with at least two columns")
        self.d = len(header) - 1

    def iter_batches(self, batch_size: int):
        with open(self.path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows, row_no = [], 1
            for record in reader:
                row_no += 1
                if not record:
                    continue
                if len(record) != self.d + 1:
                    raise DataError(
                        f"{self.path}: row {row_no} has {len(record)} fields, "
                        f"expected {self.d + 1}"
                    )
                try:
                    rows.append([float(v) for v in record])
                except ValueError as err:
                    raise DataError(f"{self.path}: row {row_no}: {err}") from err
                if len(rows) == batch_size:
                    yield self._emit(rows, row_no)
                    rows = []
            if rows:
                yield self._emit(rows, row_no)

    def _emit(self, rows, row_no):
        block = np.asarray(rows, dtype=np.float64)
        if not np.isfinite(block).all():
            raise DataError(f"{self.path}: non-finite value at or before row {row_no}")
        return block[:, :-1], block[:, -1]


class F64leSampleReader:
    """Streams (x, y) batches from the binary format."""

    def __init__(self, path):
        self.path = Path(path)
        with open(self.path, "rb") as fh:
            raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise DataError(f"{self.path}: truncated header")
        magic, version, d = _HEADER.unpack(raw)
        if magic != F64LE_MAGIC:
            raise DataError(f"{self.path}: bad magic {magic!r}")
        if version != F64LE_VERSION:
            raise DataError(f"{self.path}: unsupported version {version}")
        if d < 1:
            raise DataError(f"{self.path}: header declares {d} inputs")
        self.d = d

    def iter_batches(self, batch_size: int):
        width = self.d + 1
        with open(self.path, "rb") as fh:
            fh.seek(_HEADER.size)
            row = 0
            while True:
                block = np.fromfile(fh, dtype="<f8", count=batch_size * width)
                if block.size == 0:
                    return
                if block.size % width:
                    raise DataError(
                        f"{self.path}: trailing {block.size % width} values after "
                        f"row {row + block.size // width}"
                    )
                block = block.reshape(-1, width)
                row += block.shape[0]
                if not np.isfinite(block).all():
                    raise DataError(
                        f"{self.path}: non-finite value at or before row {row}"
                    )
                yield block[:, :-1], block[:, -1]


class ModelSampleReader:
    """Streams (x, y) batches generated from a built-in model."""

    def __init__(self, spec: ModelSpec, n: int, seed: int):
        self.spec = spec
        self.n = int(n)
        self.seed = int(seed)
        self.d = spec.d

    def iter_batches(self, batch_size: int):
        stream = ModelSampleStream(self.spec, self.seed)
        remaining = self.n
        while remaining > 0:
            b = min(batch_size, remaining)
            yield stream.next_batch(b)
            remaining -= b
