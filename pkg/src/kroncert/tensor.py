"""Sparse order-k tensors, flattenings, and capped multiset index bases.

The certificate pipelines juggle three views of the same object: a sparse
entry map for an order-k tensor over symbols ``{0, ..., dim-1}``, a matrix
flattening that groups the leading half of the indices against the trailing
half, and a compressed coordinate system indexed by multisets for vectors
that are invariant under permuting index positions.  The compression scales
each multiset coordinate by the square root of its orbit size, which makes
it an isometry onto the permutation-symmetric subspace; operator norms
computed in compressed coordinates therefore agree with their full-space
values exactly.

All indices are 0-based in memory.  The on-disk formats in
:mod:`kroncert.serialize` are 1-based.
"""
from __future__ import annotations

import dataclasses
import math
from collections import Counter
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .errors import ResourceLimitError

__all__ = [
    "MAX_FULL_DIM",
    "Tensor",
    "FlatMatrix",
    "MultisetBasis",
    "asymmetrize",
    "flatten_even",
    "slice_matrix",
    "multiset_basis",
    "gaussian_symmetric_tensor",
    "encode_index",
    "decode_index",
]

# Enumerating [dim]^length costs memory linear in dim**length; refuse beyond this.
MAX_FULL_DIM = 2_000_000


def encode_index(key: tuple[int, ...], dim: int) -> int:
    """Pack a symbol tuple into a flat index, first symbol most significant."""
    out = 0
    for s in key:
        out = out * dim + s
    return out


def decode_index(flat: int, dim: int, length: int) -> tuple[int, ...]:
    out = []
    for _ in range(length):
        flat, r = divmod(flat, dim)
        out.append(r)
    return tuple(reversed(out))


@dataclasses.dataclass(frozen=True)
class Tensor:
    """Sparse order-k tensor over ``{0, ..., dim-1}^order``.

    ``entries`` maps index tuples to coefficients; absent tuples are zero.
    ``symmetric`` promises invariance under permuting index positions and is
    verified at construction.  ``lexfirst`` marks tensors whose support is
    restricted to non-decreasing tuples (the output of :func:`asymmetrize`).
    """

    order: int
    dim: int
    entries: Mapping[tuple[int, ...], float]
    symmetric: bool = False
    lexfirst: bool = False

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError(f"tensor order must be >= 1, got {self.order}")
        if self.dim < 1:
            raise ValueError(f"tensor dim must be >= 1, got {self.dim}")
        for key in self.entries:
            if len(key) != self.order:
                raise ValueError(f"entry index {key!r} does not have order {self.order}")
            if any(not (0 <= s < self.dim) for s in key):
                raise ValueError(f"entry index {key!r} out of range for dim {self.dim}")
        if self.lexfirst and any(tuple(sorted(k)) != k for k in self.entries):
            raise ValueError("lexfirst tensor has support off the sorted tuples")
        if self.symmetric:
            self._check_symmetric()

    def _check_symmetric(self) -> None:
        canon: dict[tuple[int, ...], float] = {}
        support = Counter()
        for key, val in self.entries.items():
            c = tuple(sorted(key))
            if canon.setdefault(c, val) != val:
                raise ValueError(f"symmetric flag violated at orbit of {c!r}")
            support[c] += 1
        for c, seen in support.items():
            if seen != _orbit_size(c):
                raise ValueError(f"symmetric tensor misses arrangements of {c!r}")

    @property
    def nnz(self) -> int:
        return len(self.entries)

    def inner_power(self, x: np.ndarray) -> float:
        """Exact pairing <T, x^{ox order}> = sum_S T_S prod_t x[S_t]."""
        if not self.entries:
            return 0.0
        idx = np.asarray(list(self.entries.keys()), dtype=np.int64)
        val = np.asarray(list(self.entries.values()), dtype=np.float64)
        prods = np.prod(np.asarray(x, dtype=np.float64)[idx], axis=1)
        return float(math.fsum(val * prods))

    def to_dense(self, *, max_entries: int = MAX_FULL_DIM) -> np.ndarray:
        size = self.dim**self.order
        if size > max_entries:
            raise ResourceLimitError(f"dense tensor would hold {size} entries (budget {max_entries})")
        out = np.zeros([self.dim] * self.order)
        for key, val in self.entries.items():
            out[key] = val
        return out


def _orbit_size(key: tuple[int, ...]) -> int:
    """Number of distinct arrangements of the multiset ``key``."""
    denom = 1
    for c in Counter(key).values():
        denom *= math.factorial(c)
    return math.factorial(len(key)) // denom


def asymmetrize(tensor: Tensor) -> Tensor:
    """Collapse a symmetric tensor onto its sorted orbit representatives.

    The value at a non-decreasing tuple S is the sum of the tensor over the
    distinct arrangements of S, so ``<x^{ox k}, asymmetrize(T)> ==
    <x^{ox k}, T>`` for every x.  Input must be symmetric (rejected
    otherwise); exact cancellations are dropped from the support.
    """
    if not tensor.symmetric:
        tensor._check_symmetric()
    acc: dict[tuple[int, ...], float] = {}
    for key, val in tensor.entries.items():
        c = tuple(sorted(key))
        acc[c] = acc.get(c, 0.0) + val
    entries = {k: v for k, v in acc.items() if v != 0.0}
    return Tensor(tensor.order, tensor.dim, entries, symmetric=False, lexfirst=True)


@dataclasses.dataclass(frozen=True)
class FlatMatrix:
    """Matrix view of a flattened tensor with packed row/column index maps.

    Rows pack ``row_order`` symbols and columns ``col_order`` symbols of the
    same alphabet ``{0, ..., dim-1}``, first symbol most significant.
    """

    dim: int
    row_order: int
    col_order: int
    data: sp.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def to_dense(self) -> np.ndarray:
        return self.data.toarray()


def _entries_to_csr(
    items: list[tuple[int, int, float]], rows: int, cols: int
) -> sp.csr_matrix:
    if not items:
        return sp.csr_matrix((rows, cols))
    r, c, v = zip(*items)
    mat = sp.coo_matrix(
        (np.asarray(v, dtype=np.float64), (np.asarray(r), np.asarray(c))),
        shape=(rows, cols),
    )
    return mat.tocsr()


def flatten_even(tensor: Tensor) -> FlatMatrix:
    """Flatten an even-order tensor, leading half vs trailing half.

    M[(s_1..s_h), (s_{h+1}..s_k)] = T_{(s_1..s_k)} with h = order/2.
    """
    if tensor.order % 2 != 0:
        raise ValueError(f"flatten_even needs even order, got {tensor.order}")
    half = tensor.order // 2
    side = tensor.dim**half
    items = [
        (encode_index(key[:half], tensor.dim), encode_index(key[half:], tensor.dim), val)
        for key, val in tensor.entries.items()
    ]
    return FlatMatrix(tensor.dim, half, half, _entries_to_csr(items, side, side))


def slice_matrix(tensor: Tensor, index: int, position: int) -> FlatMatrix:
    """Fix one index of an odd-order tensor and flatten the remainder.

    The surviving order-(k-1) tensor keeps the original index order with
    ``position`` removed, then splits evenly into row and column halves.
    """
    if tensor.order % 2 != 1 or tensor.order < 3:
        raise ValueError(f"slice_matrix needs odd order >= 3, got {tensor.order}")
    if not (0 <= position < tensor.order):
        raise ValueError(f"position {position} out of range")
    if not (0 <= index < tensor.dim):
        raise ValueError(f"index {index} out of range for dim {tensor.dim}")
    half = (tensor.order - 1) // 2
    side = tensor.dim**half
    items = []
    for key, val in tensor.entries.items():
        if key[position] != index:
            continue
        rest = key[:position] + key[position + 1 :]
        items.append(
            (encode_index(rest[:half], tensor.dim), encode_index(rest[half:], tensor.dim), val)
        )
    return FlatMatrix(tensor.dim, half, half, _entries_to_csr(items, side, side))


def _orbit_structure(
    dim: int, length: int, max_full_dim: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Group all of [dim]^length by sorted content.

    Returns (canonical tuples, inverse map from flat index to canonical row,
    orbit sizes).  Flat indices are big-endian per :func:`encode_index`.
    """
    full = dim**length
    if full > max_full_dim:
        raise ResourceLimitError(
            f"enumerating [{dim}]^{length} needs {full} tuples (budget {max_full_dim})"
        )
    if dim > 127:
        raise ResourceLimitError(f"alphabet size {dim} exceeds the int8 digit packing")
    idx = np.arange(full, dtype=np.int64)
    weights = dim ** np.arange(length - 1, -1, -1, dtype=np.int64)
    digits = ((idx[:, None] // weights) % dim).astype(np.int8)
    digits.sort(axis=1)
    uniq, inverse, counts = np.unique(digits, axis=0, return_inverse=True, return_counts=True)
    return uniq.astype(np.int64), inverse.reshape(-1), counts.astype(np.int64)


@dataclasses.dataclass
class MultisetBasis:
    """Canonical basis for the cap-restricted permutation-symmetric subspace.

    Basis elements are non-decreasing ``length``-tuples over
    ``{0, ..., dim-1}`` in lexicographic order, keeping only tuples in which
    no symbol repeats more than ``cap`` times (``cap=None`` means unbounded).
    ``lift`` embeds compressed coordinates into [dim]^length with weight
    orbit_size^{-1/2} on each arrangement; ``compress`` is its transpose, so
    lift(compress(v)) averages v over each surviving orbit and zeroes the
    capped-out tuples.
    """

    dim: int
    length: int
    cap: int | None
    tuples: np.ndarray
    orbit_sizes: np.ndarray
    _lift: sp.csr_matrix
    _compress: sp.csr_matrix
    _positions: dict[tuple[int, ...], int] | None = None

    @property
    def size(self) -> int:
        return int(self.tuples.shape[0])

    @property
    def full_dim(self) -> int:
        return self.dim**self.length

    def lift(self, vec: np.ndarray) -> np.ndarray:
        return self._lift @ vec

    def compress(self, vec: np.ndarray) -> np.ndarray:
        return self._compress @ vec

    def position(self, key: tuple[int, ...]) -> int:
        if self._positions is None:
            self._positions = {tuple(map(int, t)): i for i, t in enumerate(self.tuples)}
        return self._positions[tuple(key)]

    def unit(self, key: tuple[int, ...]) -> np.ndarray:
        out = np.zeros(self.size)
        out[self.position(key)] = 1.0
        return out


def multiset_basis(
    dim: int, length: int, cap: int | None = None, *, max_full_dim: int = MAX_FULL_DIM
) -> MultisetBasis:
    if length < 1:
        raise ValueError(f"basis length must be >= 1, got {length}")
    if cap is not None and cap < 0:
        raise ValueError(f"cap must be >= 0 or None, got {cap}")
    uniq, inverse, counts = _orbit_structure(dim, length, max_full_dim)
    if cap is not None and cap < length:
        hist = np.zeros((uniq.shape[0], dim), dtype=np.int64)
        np.add.at(hist, (np.arange(uniq.shape[0])[:, None], uniq), 1)
        keep = hist.max(axis=1) <= cap
    else:
        keep = np.ones(uniq.shape[0], dtype=bool)
    remap = np.full(uniq.shape[0], -1, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    tuples = uniq[keep]
    orbit_sizes = counts[keep]

    new_inverse = remap[inverse]
    live = new_inverse >= 0
    rows = np.nonzero(live)[0]
    cols = new_inverse[live]
    vals = 1.0 / np.sqrt(orbit_sizes[cols].astype(np.float64))
    lift = sp.csr_matrix(
        (vals, (rows, cols)), shape=(dim**length, int(keep.sum()))
    )
    return MultisetBasis(
        dim=dim,
        length=length,
        cap=cap,
        tuples=tuples,
        orbit_sizes=orbit_sizes,
        _lift=lift,
        _compress=lift.T.tocsr(),
    )


def gaussian_symmetric_tensor(
    dim: int, order: int, seed: int, *, max_full_dim: int = MAX_FULL_DIM
) -> Tensor:
    """Sample a dense symmetric tensor with standard Gaussian orbit structure.

    Each orbit takes the mean of iid N(0,1) draws over its arrangements, and
    every arrangement stores that exact float so the symmetric flag holds
    bit-for-bit.
    """
    uniq, inverse, counts = _orbit_structure(dim, order, max_full_dim)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    flat = rng.standard_normal(dim**order)
    orbit_mean = np.bincount(inverse, weights=flat) / counts
    sym = orbit_mean[inverse]
    weights = dim ** np.arange(order - 1, -1, -1, dtype=np.int64)
    entries: dict[tuple[int, ...], float] = {}
    for i, v in enumerate(sym):
        key = tuple(int((i // w) % dim) for w in weights)
        entries[key] = float(v)
    return Tensor(order, dim, entries, symmetric=True)
