"""Certificate operators against explicit full-space constructions."""
from __future__ import annotations

import dataclasses
import itertools

import numpy as np
import pytest

import oracles
from kroncert.errors import ResourceLimitError
from kroncert.operators import (
    CertificateOperator,
    build_even_tensor_certificate,
    build_even_xor_certificate,
    build_odd_tensor_certificate,
    build_odd_xor_certificate,
    tensor_certificate,
)
from kroncert.tensor import Tensor


@dataclasses.dataclass(frozen=True)
class FakeInstance:
    num_vars: int
    arity: int
    clauses: tuple


def random_tensor(rng, dim, order, nnz):
    entries = {}
    for _ in range(nnz):
        key = tuple(sorted(int(s) for s in rng.integers(0, dim, order)))
        val = float(rng.standard_normal())
        for arr in set(itertools.permutations(key)):
            entries[arr] = val
    return Tensor(order, dim, entries, symmetric=True)


def random_instance(rng, num_vars, arity, m):
    clauses = []
    for _ in range(m):
        key = tuple(int(s) for s in rng.integers(0, num_vars, arity))
        clauses.append((key, int(rng.integers(0, 2)) * 2 - 1))
    return FakeInstance(num_vars, arity, tuple(clauses))


def compressed_oracle(op: CertificateOperator, full_matrix: np.ndarray) -> np.ndarray:
    lift = op.basis._lift.toarray()
    return lift.T @ full_matrix @ lift


def oracle_even_tensor(tensor: Tensor, level, cap):
    entries = oracles.naive_asymmetrize(dict(tensor.entries))
    base = oracles.dense_flatten(entries, tensor.dim, tensor.order)
    return oracles.dense_certificate(base, tensor.dim, tensor.order // 2, level, cap)


def oracle_odd_tensor(tensor: Tensor, level, cap):
    entries = oracles.naive_asymmetrize(dict(tensor.entries))
    slices = [
        oracles.dense_slice(entries, tensor.dim, tensor.order, i, 0) for i in range(tensor.dim)
    ]
    base = oracles.dense_pair_block(slices)
    return oracles.dense_certificate(base, tensor.dim, tensor.order - 1, level, cap)


def oracle_even_xor(inst, level, cap):
    entries = {}
    for key, sign in inst.clauses:
        entries[key] = entries.get(key, 0.0) + sign
    base = oracles.dense_flatten(entries, inst.num_vars, inst.arity)
    return oracles.dense_certificate(base, inst.num_vars, inst.arity // 2, level, cap)


def oracle_odd_xor(inst, level, cap):
    entries = {}
    for key, sign in inst.clauses:
        entries[key] = entries.get(key, 0.0) + sign
    return oracles.dense_odd_xor_gamma(entries, inst.num_vars, inst.arity, level, cap)


def assert_matches_oracle(op: CertificateOperator, full: np.ndarray, rng):
    got = op.materialize_dense()
    want = compressed_oracle(op, full)
    assert np.allclose(got, want, atol=1e-10)
    for _ in range(5):
        v = rng.standard_normal(op.shape[1])
        lifted = op.basis.lift(v)
        expect = op.basis.compress(full @ lifted)
        assert np.allclose(op.apply(v), expect, atol=1e-10)
        expect_t = op.basis.compress(full.T @ lifted)
        assert np.allclose(op.apply(v, transpose=True), expect_t, atol=1e-10)


@pytest.mark.parametrize("level", [1, 2])
@pytest.mark.parametrize("cap", [None, 1, 2])
def test_even_tensor_certificate_matches_dense(level, cap):
    rng = np.random.default_rng(10 * level + (cap or 0))
    t = random_tensor(rng, 3, 2, 6)
    op = build_even_tensor_certificate(t, level, cap)
    assert op.kind == "even-tensor"
    assert_matches_oracle(op, oracle_even_tensor(t, level, cap), rng)


@pytest.mark.parametrize("level", [1, 2])
@pytest.mark.parametrize("cap", [None, 2])
def test_even_tensor_certificate_order_four(level, cap):
    # includes the dim 3, order 4, level 2 cell checked entry-for-entry
    # against exhaustive permutation averaging on both sides
    rng = np.random.default_rng(20 + level)
    t = random_tensor(rng, 3, 4, 8)
    op = build_even_tensor_certificate(t, level, cap)
    assert_matches_oracle(op, oracle_even_tensor(t, level, cap), rng)


@pytest.mark.parametrize("level", [1, 2])
@pytest.mark.parametrize("cap", [None, 1, 2])
def test_odd_tensor_certificate_matches_dense(level, cap):
    rng = np.random.default_rng(30 * level + (cap or 7))
    t = random_tensor(rng, 3, 3, 8)
    op = build_odd_tensor_certificate(t, level, cap)
    assert op.kind == "odd-tensor"
    assert op.correction is not None
    assert_matches_oracle(op, oracle_odd_tensor(t, level, cap), rng)


@pytest.mark.parametrize("level", [1, 2])
@pytest.mark.parametrize("cap", [None, 1, 2])
def test_even_xor_certificate_matches_dense(level, cap):
    rng = np.random.default_rng(40 * level + (cap or 3))
    inst = random_instance(rng, 3, 2, 5)
    op = build_even_xor_certificate(inst, level, cap)
    assert op.kind == "even-xor"
    assert_matches_oracle(op, oracle_even_xor(inst, level, cap), rng)


@pytest.mark.parametrize("level", [1, 2])
@pytest.mark.parametrize("cap", [None, 2])
def test_even_xor_certificate_arity_four(level, cap):
    rng = np.random.default_rng(50 + level)
    inst = random_instance(rng, 2, 4, 6)
    op = build_even_xor_certificate(inst, level, cap)
    assert_matches_oracle(op, oracle_even_xor(inst, level, cap), rng)


@pytest.mark.parametrize("level,cap", [(1, None), (2, None), (1, 1), (2, 2), (2, 1), (3, 1)])
def test_odd_xor_certificate_matches_dense(level, cap):
    # (2, 1) and (3, 1) force the explicit center-tuple path
    rng = np.random.default_rng(60 * level + (cap or 5))
    inst = random_instance(rng, 3, 3, 6)
    op = build_odd_xor_certificate(inst, level, cap)
    assert op.kind == "odd-xor"
    if cap is not None and level > cap:
        assert op.center_blocks is not None
    else:
        assert op.center_blocks is None
    assert_matches_oracle(op, oracle_odd_xor(inst, level, cap), rng)


def test_odd_xor_pair_counts():
    # two clauses sharing the last variable give both ordered pairs
    inst = FakeInstance(5, 3, (((0, 1, 4), 1), ((2, 3, 4), -1)))
    op = build_odd_xor_certificate(inst, 1)
    assert op.correction.clause_count == 2
    assert op.correction.pair_count == 2

    solo = FakeInstance(5, 3, (((0, 1, 4), 1), ((2, 3, 0), -1)))
    assert build_odd_xor_certificate(solo, 1).correction.pair_count == 0


def test_odd_correction_energy_matches_oracle():
    rng = np.random.default_rng(2)
    inst = random_instance(rng, 3, 3, 7)
    op = build_odd_xor_certificate(inst, 1)
    entries = {}
    for key, sign in inst.clauses:
        entries[key] = entries.get(key, 0.0) + sign
    slices = [oracles.dense_slice(entries, 3, 3, u, 2) for u in range(3)]
    assert op.correction.max_slice_energy == pytest.approx(
        oracles.max_slice_energy(slices), abs=1e-12
    )


def test_batched_apply_matches_single():
    rng = np.random.default_rng(4)
    inst = random_instance(rng, 3, 4, 6)
    op = build_even_xor_certificate(inst, 2, 2)
    block = rng.standard_normal((op.shape[1], 7))
    batched = op.apply(block)
    for j in range(7):
        assert np.allclose(batched[:, j], op.apply(block[:, j]), atol=1e-12)


def test_masking_monotone_in_cap():
    rng = np.random.default_rng(8)
    inst = random_instance(rng, 3, 2, 6)
    norms = []
    for cap in (None, 3, 2, 1):
        op = build_even_xor_certificate(inst, 2, cap)
        norms.append(oracles.svd_norm(op.materialize_dense()))
    for wider, tighter in zip(norms, norms[1:]):
        assert tighter <= wider + 1e-9


def test_xor_relabeling_invariance():
    # clause tensors flatten positionally, so renaming variables conjugates
    # the certificate by a permutation and preserves its norm; the tensor
    # paths go through sorted orbit representatives and lack this symmetry
    rng = np.random.default_rng(12)
    perm = [2, 0, 3, 1]
    odd = random_instance(rng, 4, 3, 7)
    odd_p = FakeInstance(4, 3, tuple((tuple(perm[v] for v in k), s) for k, s in odd.clauses))
    even = random_instance(rng, 4, 2, 7)
    even_p = FakeInstance(4, 2, tuple((tuple(perm[v] for v in k), s) for k, s in even.clauses))
    for build, a_inst, b_inst, cap in (
        (build_odd_xor_certificate, odd, odd_p, None),
        (build_odd_xor_certificate, odd, odd_p, 1),
        (build_even_xor_certificate, even, even_p, None),
        (build_even_xor_certificate, even, even_p, 1),
    ):
        a = oracles.svd_norm(build(a_inst, 2, cap).materialize_dense())
        b = oracles.svd_norm(build(b_inst, 2, cap).materialize_dense())
        assert a == pytest.approx(b, abs=1e-9)


def test_certificate_norm_submultiplicative():
    # ||C_(2)|| <= ||A||^2 since the symmetrizers are contractions
    rng = np.random.default_rng(14)
    t = random_tensor(rng, 3, 2, 6)
    base = oracles.dense_flatten(oracles.naive_asymmetrize(dict(t.entries)), 3, 2)
    base_norm = oracles.svd_norm(base)
    for level in (1, 2):
        op = build_even_tensor_certificate(t, level)
        assert oracles.svd_norm(op.materialize_dense()) <= base_norm**level + 1e-9


def test_empty_instance_gives_zero_operator():
    inst = FakeInstance(4, 2, ())
    op = build_even_xor_certificate(inst, 2)
    assert op.materialize_dense().max() == 0.0
    inst3 = FakeInstance(4, 3, ())
    op3 = build_odd_xor_certificate(inst3, 1)
    assert op3.materialize_dense().max() == 0.0
    assert op3.correction.pair_count == 0


def test_single_clause_arity_two_norm_one():
    inst = FakeInstance(4, 2, (((0, 1), 1),))
    op = build_even_xor_certificate(inst, 1)
    assert oracles.svd_norm(op.materialize_dense()) == pytest.approx(1.0, abs=1e-12)


def test_tensor_certificate_combination():
    assert tensor_certificate(4.0, 2, None) == pytest.approx(2.0)
    from kroncert.operators import OddCorrection

    assert tensor_certificate(4.0, 1, OddCorrection(5.0)) == pytest.approx(3.0)


def test_builder_validation():
    t3 = Tensor(3, 2, {})
    t4 = Tensor(4, 2, {})
    with pytest.raises(ValueError):
        build_even_tensor_certificate(t3, 1)
    with pytest.raises(ValueError):
        build_odd_tensor_certificate(t4, 1)
    with pytest.raises(ValueError):
        build_even_tensor_certificate(t4, 0)
    lopsided = Tensor(2, 3, {(0, 1): 1.0, (1, 0): 2.0})
    with pytest.raises(ValueError):
        build_even_tensor_certificate(lopsided, 1)
    inst = FakeInstance(3, 3, ())
    with pytest.raises(ValueError):
        build_even_xor_certificate(inst, 1)
    with pytest.raises(ValueError):
        build_odd_xor_certificate(FakeInstance(3, 2, ()), 1)


def test_resource_guards():
    rng = np.random.default_rng(1)
    t = random_tensor(rng, 3, 4, 5)
    with pytest.raises(ResourceLimitError):
        build_even_tensor_certificate(t, 2, max_full_dim=50)
    inst = random_instance(rng, 3, 2, 4)
    op = build_even_xor_certificate(inst, 2)
    with pytest.raises(ResourceLimitError):
        op.materialize_dense(max_entries=4)
