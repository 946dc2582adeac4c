"""The fixed sparse random influence matrix Q, with w = Q @ v.

Q has m rows (network weights) and n columns (trainable probabilities).
Each row stores exactly ``d`` nonzeros at distinct, sorted columns, with
values drawn from N(0, 6 / (d * fan_in[i])).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, EmptyShapeError, InvalidDegreeError
from .rng import SeedSpec, as_seed, box_muller

DUMP_MAGIC = b"ZQMX"
DUMP_VERSION = 1
_HEADER = struct.Struct("<4sIQQQQ")


@dataclass(frozen=True, eq=False)
class InfluenceMatrix:
    rows: int
    cols: int
    degree: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    fan_in: np.ndarray
    seed: int = 0
    _csr: sp.csr_matrix = field(init=False, repr=False)
    _csr_t: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("row_offsets", "col_indices", "values", "fan_in"):
            getattr(self, name).setflags(write=False)
        csr = sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.rows, self.cols),
        )
        object.__setattr__(self, "_csr", csr)
        # column-major access for backproject, built once
        object.__setattr__(self, "_csr_t", csr.T.tocsr())

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def nnz(self) -> int:
        return self.rows * self.degree

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.values[lo:hi]

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def column_loads(self) -> np.ndarray:
        """Number of rows referencing each column."""
        return np.bincount(self.col_indices, minlength=self.cols)

    def row_sigma(self) -> np.ndarray:
        return np.sqrt(6.0 / (self.degree * self.fan_in))


def _floyd_sample(rng: np.random.Generator, m: int, n: int, d: int) -> np.ndarray:
    # Floyd's algorithm, vectorised across rows: d draws per row.
    out = np.empty((m, d), dtype=np.int64)
    for k, j in enumerate(range(n - d, n)):
        t = rng.integers(0, j + 1, size=m)
        if k:
            seen = (out[:, :k] == t[:, None]).any(axis=1)
            t = np.where(seen, j, t)
        out[:, k] = t
    out.sort(axis=1)
    return out


def generate(arch_fan_ins, n: int, d: int, seed) -> InfluenceMatrix:
    """Build Q for weights with the given fan-ins.

    Column sets and values both come from the ``matrix`` stream of ``seed``,
    so any party holding the seed regenerates Q bit-for-bit.
    """
    fan_in = np.asarray(arch_fan_ins, dtype=np.int64).ravel()
    m = fan_in.size
    if m == 0 or n <= 0:
        raise EmptyShapeError(f"influence matrix shape ({m}, {n}) is empty")
    if not 1 <= d <= n:
        raise InvalidDegreeError(f"degree d={d} must satisfy 1 <= d <= n={n}")
    if np.any(fan_in < 1):
        raise InvalidDegreeError("every fan-in must be >= 1")
    seed = as_seed(seed)
    rng = seed.matrix()
    cols = _floyd_sample(rng, m, n, d)
    sigma = np.sqrt(6.0 / (d * fan_in))
    values = box_muller(rng, m * d).reshape(m, d) * sigma[:, None]
    index_dtype = np.int32 if n < 2**31 else np.int64
    return InfluenceMatrix(
        rows=m,
        cols=n,
        degree=d,
        row_offsets=np.arange(0, m * d + 1, d, dtype=np.int64),
        col_indices=cols.ravel().astype(index_dtype),
        values=values.ravel(),
        fan_in=fan_in.astype(np.int32),
        seed=seed.master_seed,
    )


def expand(Q: InfluenceMatrix, v) -> np.ndarray:
    """w = Q @ v. ``v`` may be a vector of length n or an (n, k) batch."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != Q.cols:
        raise DimensionError(f"expected leading dimension {Q.cols}, got {v.shape[0]}")
    return Q._csr @ v


def backproject(Q: InfluenceMatrix, grad_w, p) -> np.ndarray:
    """Pull a weight gradient back onto the scores.

    Transpose-apply of Q, zeroed where the clip is saturated (p in {0, 1}).
    """
    grad_w = np.asarray(grad_w, dtype=np.float64)
    p = np.asarray(p)
    if grad_w.shape != (Q.rows,):
        raise DimensionError(f"grad_w must have length {Q.rows}, got {grad_w.shape}")
    if p.shape != (Q.cols,):
        raise DimensionError(f"p must have length {Q.cols}, got {p.shape}")
    g = Q._csr_t @ grad_w
    g[(p <= 0.0) | (p >= 1.0)] = 0.0
    return g


def count_empty_columns(Q: InfluenceMatrix) -> int:
    return int(np.count_nonzero(Q.column_loads() == 0))


def dump(Q: InfluenceMatrix, path) -> None:
    """Write Q as: header, offsets <i8, indices <i4/<i8, values <f8, fan-in <i4."""
    header = _HEADER.pack(DUMP_MAGIC, DUMP_VERSION, Q.rows, Q.cols, Q.degree, Q.seed)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(Q.row_offsets.astype("<i8").tobytes())
        fh.write(Q.col_indices.astype("<i8" if Q.cols >= 2**31 else "<i4").tobytes())
        fh.write(Q.values.astype("<f8").tobytes())
        fh.write(Q.fan_in.astype("<i4").tobytes())


def load(path) -> InfluenceMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated influence-matrix dump")
    magic, version, m, n, d, seed = _HEADER.unpack_from(raw, 0)
    if magic != DUMP_MAGIC or version != DUMP_VERSION:
        raise ValueError(f"not an influence-matrix dump (magic={magic!r}, version={version})")
    idx_type = "<i8" if n >= 2**31 else "<i4"
    pos = _HEADER.size
    sizes = [("<i8", m + 1), (idx_type, m * d), ("<f8", m * d), ("<i4", m)]
    arrays = []
    for dtype, count in sizes:
        nbytes = np.dtype(dtype).itemsize * count
        if pos + nbytes > len(raw):
            raise ValueError("truncated influence-matrix dump")
        arrays.append(np.frombuffer(raw, dtype=dtype, count=count, offset=pos).copy())
        pos += nbytes
    offsets, cols, values, fan_in = arrays
    return InfluenceMatrix(
        rows=m, cols=n, degree=d,
        row_offsets=offsets.astype(np.int64),
        col_indices=cols.astype(np.int32 if n < 2**31 else np.int64),
        values=values.astype(np.float64),
        fan_in=fan_in.astype(np.int32),
        seed=seed,
    )


__all__ = [
    "InfluenceMatrix", "SeedSpec", "generate", "expand", "backproject",
    "count_empty_columns", "dump", "load",
]
