"""Measurement bases for single-pixel acquisition.

The shipped fast basis is a symmetric, pixel-scrambled Walsh-Hadamard
matrix ``B[i, j] = H[p(i), p(j)]`` where ``H`` is the Sylvester-ordered
Hadamard matrix and ``p`` a random permutation that fixes index 0.  It has
+/-1 entries, ``B @ B == n * I``, an O(n log n) in-place butterfly, and row 0
is the all-ones (DC) row.  Masks look like scrambled noise rather than
blocky Walsh patterns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np

__all__ = [
    "MeasurementBasis",
    "MaskSchedule",
    "DmdMaskPair",
    "fwht",
    "fwht_blocked",
    "fast_transform",
    "row",
    "dense_matrix",
    "to_dmd",
    "mutual_incoherence",
    "select_rows",
    "SubsampledOperator",
]


def fwht(x, axis=-1):
    """Unnormalized Walsh-Hadamard transform in natural (Sylvester) order.

    Works on a copy; the butterfly itself runs in place on that copy, one
    temporary of size n/2 per stage.  Length along `axis` must be a power of
    two.
    """
    a = np.array(x, dtype=float, copy=True)
    a = np.moveaxis(a, axis, -1)
    n = a.shape[-1]
    if n & (n - 1) or n == 0:
        raise ValueError(f"transform length must be a power of two, got {n}")
    lead = a.shape[:-1]
    h = 1
    while h < n:
        v = a.reshape(lead + (n // (2 * h), 2, h))
        lo = v[..., 0, :]
        hi = v[..., 1, :]
        tmp = lo + hi
        np.subtract(lo, hi, out=hi)
        lo[...] = tmp
        h *= 2
    return np.moveaxis(a, -1, axis)


_MAX_BLOCK_BITS = 6


@lru_cache(maxsize=None)
def _hadamard(bits: int) -> np.ndarray:
    h = np.ones((1, 1))
    for _ in range(bits):
        h = np.block([[h, h], [h, -h]])
    h.setflags(write=False)
    return h


def fwht_blocked(x) -> np.ndarray:
    """Walsh-Hadamard transform along the last axis via Kronecker blocks.

    Uses ``H_n = H_a (x) H_b (x) ...`` with dense factors of at most 64
    points applied by matmul.  Same result as :func:`fwht`; still O(n log n)
    (one factor per six bits), but far fewer interpreter round trips.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n & (n - 1) or n == 0:
        raise ValueError(f"transform length must be a power of two, got {n}")
    bits = n.bit_length() - 1
    nblocks = max(1, -(-bits // _MAX_BLOCK_BITS))
    chunks = [bits // nblocks + (1 if k < bits % nblocks else 0) for k in range(nblocks)]
    lead = x.shape[:-1]
    a = x.reshape(lead + tuple(1 << c for c in chunks))
    if len(chunks) == 1:
        return a @ _hadamard(chunks[0])
    if len(chunks) == 2:
        return (_hadamard(chunks[0]) @ a @ _hadamard(chunks[1])).reshape(lead + (n,))
    for k, c in enumerate(chunks):
        ax = len(lead) + k
        a = np.moveaxis(np.moveaxis(a, ax, -1) @ _hadamard(c), -1, ax)
    return a.reshape(lead + (n,))


@dataclass(frozen=True)
class MeasurementBasis:
    """An implicit n x n measurement basis.

    Parameters
    ----------
    n : int
        Signal dimension (pixel count).  Must be a power of two for
        ``kind='fast_binary'``.
    kind : {'fast_binary', 'raster'}
        ``fast_binary`` is the scrambled Hadamard basis; ``raster`` is the
        identity (one pixel per mask).
    permutation_seed : int
        Seed of the pixel scrambling permutation.
    """

    n: int
    kind: Literal["fast_binary", "raster"] = "fast_binary"
    permutation_seed: int = 0
    perm: np.ndarray = field(init=False, repr=False, compare=False)
    inverse_perm: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("fast_binary", "raster"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("basis dimension must be positive")
        if self.kind == "fast_binary":
            if self.n & (self.n - 1):
                raise ValueError(f"fast_binary basis needs a power-of-two n, got {self.n}")
            rng = np.random.default_rng(self.permutation_seed)
            perm = np.concatenate(([0], 1 + rng.permutation(self.n - 1)))
        else:
            perm = np.arange(self.n)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(self.n)
        perm.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "inverse_perm", inv)


def fast_transform(basis: MeasurementBasis, x) -> np.ndarray:
    """All inner products ``<row(i), x>``, i.e. ``B @ x``, in O(n log n).

    Accepts a trailing batch: `x` may have shape ``(n,)`` or ``(..., n)``.
    Applying it twice returns ``n * x``.
    """
    if basis.kind != "fast_binary":
        raise ValueError("fast_transform requires a fast_binary basis")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != basis.n:
        raise ValueError(f"expected trailing length {basis.n}, got {x.shape[-1]}")
    return fwht_blocked(x[..., basis.inverse_perm])[..., basis.perm]


def row(basis: MeasurementBasis, i: int) -> np.ndarray:
    """Row `i` of the basis: +/-1 entries for fast_binary, 0/1 canonical for raster."""
    if not 0 <= i < basis.n:
        raise IndexError(f"row index {i} out of range for n={basis.n}")
    if basis.kind == "raster":
        r = np.zeros(basis.n)
        r[i] = 1.0
        return r
    e = np.zeros(basis.n)
    e[i] = 1.0
    return fast_transform(basis, e)


def dense_matrix(basis: MeasurementBasis) -> np.ndarray:
    """Explicit n x n matrix.  Testing and small-n analysis only."""
    if basis.kind == "raster":
        return np.eye(basis.n)
    return fast_transform(basis, np.eye(basis.n))


@dataclass(frozen=True)
class MaskSchedule:
    """Which basis rows are displayed, and how many pulses each one gets."""

    basis: MeasurementBasis
    selected_rows: tuple
    repeats: int = 1

    def __post_init__(self):
        rows = tuple(int(r) for r in self.selected_rows)
        if len(set(rows)) != len(rows):
            raise ValueError("selected rows must be distinct")
        if any(r < 0 or r >= self.basis.n for r in rows):
            raise ValueError("selected row index out of range")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        object.__setattr__(self, "selected_rows", rows)

    @property
    def m(self) -> int:
        return len(self.selected_rows)

    def __len__(self):
        return self.m

    def subset(self, m: int) -> "MaskSchedule":
        """The first `m` masks of this schedule."""
        if not 1 <= m <= self.m:
            raise ValueError(f"cannot take {m} masks from a schedule of {self.m}")
        return MaskSchedule(self.basis, self.selected_rows[:m], self.repeats)


@dataclass(frozen=True)
class DmdMaskPair:
    positive: np.ndarray
    negative: np.ndarray


def to_dmd(r, width: int, height: int) -> DmdMaskPair:
    """Realize a basis row as a binary DMD pattern and its complement.

    +/-1 rows map through ``(r + 1) / 2``; 0/1 rows (raster) are used as is.
    Images are row-major with shape ``(height, width)``.
    """
    r = np.asarray(r)
    if r.size != width * height:
        raise ValueError(f"row of length {r.size} does not fit a {width}x{height} mask")
    if np.all((r == 0) | (r == 1)) and not np.all(r == 1):
        pos = r.astype(np.uint8)
    elif np.all(np.abs(r) == 1):
        pos = ((r + 1) // 2).astype(np.uint8)
    else:
        raise ValueError("mask rows must be +/-1 or 0/1")
    pos = pos.reshape(height, width)
    return DmdMaskPair(positive=pos, negative=(1 - pos).astype(np.uint8))


def mutual_incoherence(A, B, atol=1e-9) -> float:
    """``sqrt(n) * max |<a_i, b_j>|`` over rows of two orthonormal bases."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise ValueError("bases must be square arrays of the same size")
    for name, M in (("A", A), ("B", B)):
        norms = np.linalg.norm(M, axis=1)
        if np.max(np.abs(norms - 1.0)) > atol:
            raise ValueError(f"basis {name} rows are not unit length")
    n = A.shape[0]
    return float(np.sqrt(n) * np.max(np.abs(A @ B.T)))


def select_rows(basis: MeasurementBasis, m: int, rng_seed: int, repeats: int = 1) -> MaskSchedule:
    """Draw `m` distinct rows uniformly without replacement.

    For a fast_binary basis the DC row 0 is excluded unless all rows are
    requested.  The draw order is kept, so ``schedule.subset(k)`` is itself a
    uniform random k-subset.
    """
    n = basis.n
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(rng_seed)
    if m == n:
        rows = np.arange(n)
    elif basis.kind == "fast_binary":
        rows = 1 + rng.choice(n - 1, size=m, replace=False)
    else:
        rows = rng.choice(n, size=m, replace=False)
    return MaskSchedule(basis, tuple(rows.tolist()), repeats)


class SubsampledOperator:
    """Measurement operator ``A = S B`` built from selected rows of a fast basis.

    Never materializes A.  ``A @ A.T == n * I`` because basis rows are
    orthogonal.
    """

    def __init__(self, schedule: MaskSchedule):
        if schedule.basis.kind != "fast_binary":
            raise ValueError("SubsampledOperator needs a fast_binary basis")
        self.schedule = schedule
        self.basis = schedule.basis
        self.rows = np.asarray(schedule.selected_rows, dtype=np.intp)
        self.n = schedule.basis.n
        self.m = len(self.rows)

    def forward(self, x):
        return fast_transform(self.basis, np.ravel(x))[self.rows]

    def adjoint(self, y):
        full = np.zeros(self.n)
        full[self.rows] = y
        # B is symmetric
        return fast_transform(self.basis, full)
