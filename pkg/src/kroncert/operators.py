"""Symmetrized Kronecker-power certificate operators.

Each operator realizes, in compressed multiset coordinates, the matrix

    mask . sym . (block)^{kron level} . sym . mask

where ``block`` is a flattening-derived base matrix, ``sym`` averages over
all permutations of the ``level * block_symbols`` index symbols, and
``mask`` zeroes rows and columns whose symbol multiset repeats any symbol
more than ``cap`` times.  The compression is an isometry on the masked
symmetric subspace, so compressed operator norms equal full-space values.

Four kinds are built here:

* ``even-tensor``: block = flatten of the asymmetrized tensor.
* ``odd-tensor``: block = sum over first-index slices s of (s kron s) with
  the squared-entry pattern removed; the certificate additionally carries
  the worst per-position slice energy.
* ``even-xor``: block = flatten of the summed clause-sign tensor, no
  asymmetrization.
* ``odd-xor``: blocks indexed by the shared last-position variable; when
  the cap is below the level the center variables are enumerated
  explicitly so their multiset obeys the cap, otherwise the sum collapses
  to a single Kronecker block.
"""
from __future__ import annotations

import dataclasses
import itertools
from collections import Counter

import numpy as np
import scipy.sparse as sp

from .errors import ResourceLimitError
from .tensor import (
    MAX_FULL_DIM,
    MultisetBasis,
    Tensor,
    asymmetrize,
    flatten_even,
    multiset_basis,
    slice_matrix,
)

__all__ = [
    "OddCorrection",
    "CertificateOperator",
    "build_even_tensor_certificate",
    "build_odd_tensor_certificate",
    "build_even_xor_certificate",
    "build_odd_xor_certificate",
    "tensor_certificate",
]

MAX_CENTER_TUPLES = 20_000
MAX_DENSE_ENTRIES = 4_000_000


@dataclasses.dataclass(frozen=True)
class OddCorrection:
    """Additive data the odd pipelines need next to the operator norm.

    ``max_slice_energy`` is max over matrix positions of the summed squared
    slice entries.  For XOR instances ``clause_count`` and ``pair_count``
    carry m and the number of ordered clause pairs sharing their
    last-position variable.
    """

    max_slice_energy: float
    clause_count: int = 0
    pair_count: int = 0


@dataclasses.dataclass
class CertificateOperator:
    kind: str
    level: int
    arity: int
    dim: int
    cap: int | None
    block_symbols: int
    basis: MultisetBasis
    base: sp.csr_matrix | None
    base_t: sp.csr_matrix | None
    center_blocks: list[sp.csr_matrix] | None = None
    center_blocks_t: list[sp.csr_matrix] | None = None
    correction: OddCorrection | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.basis.size, self.basis.size)

    @property
    def row_basis(self) -> MultisetBasis:
        return self.basis

    @property
    def col_basis(self) -> MultisetBasis:
        return self.basis

    @property
    def block_dim(self) -> int:
        return self.dim**self.block_symbols

    def apply(self, vec: np.ndarray, transpose: bool = False) -> np.ndarray:
        """Matrix-vector (or matrix-block) product in compressed coordinates.

        Implemented as compress(base^{kron level} @ lift(vec)) without ever
        materializing the full-space matrix.
        """
        vec = np.asarray(vec, dtype=np.float64)
        single = vec.ndim == 1
        if single:
            vec = vec[:, None]
        if vec.shape[0] != self.basis.size:
            raise ValueError(f"expected leading dimension {self.basis.size}, got {vec.shape[0]}")
        full = self.basis.lift(vec)
        if self.center_blocks is None:
            block = self.base_t if transpose else self.base
            out_full = _kron_block_apply([block] * self.level, full, self.block_dim)
        else:
            blocks = self.center_blocks_t if transpose else self.center_blocks
            out_full = np.zeros_like(full)
            for centers in _capped_center_tuples(self.dim, self.level, self.cap):
                mats = [blocks[u] for u in centers]
                out_full += _kron_block_apply(mats, full, self.block_dim)
        out = self.basis.compress(out_full)
        return out[:, 0] if single else out

    def materialize_dense(
        self, max_entries: int = MAX_DENSE_ENTRIES, batch: int = 512
    ) -> np.ndarray:
        """Dense compressed matrix; intended for oracles and small certified paths."""
        rows, cols = self.shape
        if rows * cols > max_entries:
            raise ResourceLimitError(
                f"materializing {rows}x{cols} exceeds the {max_entries}-entry budget"
            )
        out = np.empty((rows, cols))
        for start in range(0, cols, batch):
            stop = min(start + batch, cols)
            block = np.zeros((cols, stop - start))
            block[np.arange(start, stop), np.arange(stop - start)] = 1.0
            out[:, start:stop] = self.apply(block)
        return out


def _kron_block_apply(mats: list, w: np.ndarray, block_dim: int) -> np.ndarray:
    """Apply kron(mats[0], ..., mats[-1]) to a batch of full-space vectors."""
    d = len(mats)
    b = w.shape[1]
    if d == 1:
        return mats[0] @ w
    for mat in mats:
        y = mat @ w.reshape(block_dim, -1)
        y = y.reshape([block_dim] * d + [b])
        y = np.moveaxis(y, 0, d - 1)
        w = np.ascontiguousarray(y).reshape(block_dim**d, b)
    return w


def _capped_center_tuples(dim: int, level: int, cap: int | None):
    out = []
    for centers in itertools.product(range(dim), repeat=level):
        if cap is not None and max(Counter(centers).values()) > cap:
            continue
        out.append(centers)
        if len(out) > MAX_CENTER_TUPLES:
            raise ResourceLimitError(
                f"explicit center enumeration exceeds {MAX_CENTER_TUPLES} tuples"
            )
    return out


def _pair_block(slices: list[sp.csr_matrix]) -> sp.csr_matrix:
    """sum_u (slice_u kron slice_u) with the squared-entry pattern removed.

    The removed entries are the positions ((a,a),(c,c)) that carry
    sum_u slice_u[a,c]^2, i.e. both Kronecker factors reading the same
    (row, column) cell of the base slice.
    """
    side = slices[0].shape[0]
    acc = sp.csr_matrix((side * side, side * side))
    energy = sp.csr_matrix((side, side))
    for s in slices:
        if s.nnz == 0:
            continue
        acc = acc + sp.kron(s, s, format="csr")
        energy = energy + s.multiply(s)
    energy = energy.tocoo()
    if energy.nnz:
        squares = sp.coo_matrix(
            (energy.data, (energy.row * (side + 1), energy.col * (side + 1))),
            shape=(side * side, side * side),
        )
        acc = (acc - squares.tocsr()).tocsr()
        acc.eliminate_zeros()
    return acc


def _slice_energy(slices: list[sp.csr_matrix]) -> float:
    acc = sp.csr_matrix(slices[0].shape)
    for s in slices:
        acc = acc + s.multiply(s)
    return float(acc.max()) if acc.nnz else 0.0


def _clause_tensor(instance) -> Tensor:
    entries: dict[tuple[int, ...], float] = {}
    for key, sign in instance.clauses:
        key = tuple(key)
        entries[key] = entries.get(key, 0.0) + float(sign)
    entries = {k: v for k, v in entries.items() if v != 0.0}
    return Tensor(instance.arity, instance.num_vars, entries)


def _assemble(
    kind: str,
    base: sp.csr_matrix | None,
    dim: int,
    arity: int,
    level: int,
    cap: int | None,
    block_symbols: int,
    correction: OddCorrection | None = None,
    center_blocks: list[sp.csr_matrix] | None = None,
    max_full_dim: int = MAX_FULL_DIM,
) -> CertificateOperator:
    if level < 1:
        raise ValueError(f"certificate level must be >= 1, got {level}")
    basis = multiset_basis(dim, level * block_symbols, cap, max_full_dim=max_full_dim)
    return CertificateOperator(
        kind=kind,
        level=level,
        arity=arity,
        dim=dim,
        cap=cap,
        block_symbols=block_symbols,
        basis=basis,
        base=base,
        base_t=base.T.tocsr() if base is not None else None,
        center_blocks=center_blocks,
        center_blocks_t=[b.T.tocsr() for b in center_blocks] if center_blocks else None,
        correction=correction,
    )


def build_even_tensor_certificate(
    tensor: Tensor, level: int, cap: int | None = None, *, max_full_dim: int = MAX_FULL_DIM
) -> CertificateOperator:
    """Certificate operator for an even-order tensor.

    The tensor is asymmetrized first, so the certified value bounds the
    original power pairing.  With ``cap=None`` the operator norm to the
    1/level certifies the injective norm; a finite cap restricts to the
    capped symmetric subspace (used by the XOR chain, not for norm bounds).
    """
    if tensor.order % 2 != 0 or tensor.order < 2:
        raise ValueError(f"even certificate needs even order >= 2, got {tensor.order}")
    flat = flatten_even(asymmetrize(tensor))
    return _assemble(
        "even-tensor",
        flat.data,
        tensor.dim,
        tensor.order,
        level,
        cap,
        tensor.order // 2,
        max_full_dim=max_full_dim,
    )


def build_odd_tensor_certificate(
    tensor: Tensor, level: int, cap: int | None = None, *, max_full_dim: int = MAX_FULL_DIM
) -> CertificateOperator:
    """Certificate operator for an odd-order tensor.

    Slices the asymmetrized tensor on its first index, pairs each slice
    with itself, removes the squared-entry pattern, and certifies via
    (norm^{1/level} + max_slice_energy)^{1/2}; see
    :func:`tensor_certificate`.
    """
    if tensor.order % 2 != 1 or tensor.order < 3:
        raise ValueError(f"odd certificate needs odd order >= 3, got {tensor.order}")
    half = (tensor.order - 1) // 2
    asym = asymmetrize(tensor)
    slices = [slice_matrix(asym, i, 0).data for i in range(tensor.dim)]
    base = _pair_block(slices)
    correction = OddCorrection(max_slice_energy=_slice_energy(slices))
    return _assemble(
        "odd-tensor",
        base,
        tensor.dim,
        tensor.order,
        level,
        cap,
        2 * half,
        correction=correction,
        max_full_dim=max_full_dim,
    )


def build_even_xor_certificate(
    instance, level: int, cap: int | None = None, *, max_full_dim: int = MAX_FULL_DIM
) -> CertificateOperator:
    """Certificate operator for an even-arity XOR instance.

    The clause-sign tensor is flattened directly (no asymmetrization:
    the refutation chain needs the clause-level quadratic form intact).
    """
    if instance.arity % 2 != 0 or instance.arity < 2:
        raise ValueError(f"even XOR certificate needs even arity, got {instance.arity}")
    flat = flatten_even(_clause_tensor(instance))
    return _assemble(
        "even-xor",
        flat.data,
        instance.num_vars,
        instance.arity,
        level,
        cap,
        instance.arity // 2,
        max_full_dim=max_full_dim,
    )


def build_odd_xor_certificate(
    instance, level: int, cap: int | None = None, *, max_full_dim: int = MAX_FULL_DIM
) -> CertificateOperator:
    """Pair certificate operator for an odd-arity XOR instance.

    Slices the clause-sign tensor on the last position (the shared
    variable of a clause pair).  When ``level <= cap`` every center tuple
    obeys the cap, so the sum over centers collapses to the Kronecker
    power of a single block; otherwise centers are enumerated explicitly.
    """
    if instance.arity % 2 != 1 or instance.arity < 3:
        raise ValueError(f"odd XOR certificate needs odd arity >= 3, got {instance.arity}")
    k = instance.arity
    n = instance.num_vars
    half = (k - 1) // 2
    tensor = _clause_tensor(instance)
    slices = [slice_matrix(tensor, u, k - 1).data for u in range(n)]
    per_center = [_pair_block([slices[u]]) for u in range(n)]

    last_count = Counter(key[-1] for key, _ in instance.clauses)
    pair_count = sum(c * (c - 1) for c in last_count.values())
    correction = OddCorrection(
        max_slice_energy=_slice_energy(slices),
        clause_count=len(instance.clauses),
        pair_count=pair_count,
    )

    if cap is None or level <= cap:
        base = sp.csr_matrix((per_center[0].shape if n else (1, 1)))
        for blk in per_center:
            base = base + blk
        return _assemble(
            "odd-xor", base.tocsr(), n, k, level, cap, 2 * half,
            correction=correction, max_full_dim=max_full_dim,
        )
    return _assemble(
        "odd-xor", None, n, k, level, cap, 2 * half,
        correction=correction, center_blocks=per_center, max_full_dim=max_full_dim,
    )


def tensor_certificate(norm_value: float, level: int, correction: OddCorrection | None) -> float:
    """Combine an operator norm with the odd-order correction into a bound
    on the injective norm: norm^{1/level} for even order, else
    (norm^{1/level} + max_slice_energy)^{1/2}."""
    root = norm_value ** (1.0 / level)
    if correction is None:
        return root
    return (root + correction.max_slice_energy) ** 0.5
