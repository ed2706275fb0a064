"""Tensor container, flattenings, and multiset basis behavior."""
from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from kroncert.errors import ResourceLimitError
from kroncert.tensor import (
    Tensor,
    asymmetrize,
    decode_index,
    encode_index,
    flatten_even,
    gaussian_symmetric_tensor,
    multiset_basis,
    slice_matrix,
)


def test_encode_decode_roundtrip():
    for dim, length in [(2, 3), (5, 2), (7, 4)]:
        for flat in range(dim**length):
            key = decode_index(flat, dim, length)
            assert encode_index(key, dim) == flat
            assert oracles.encode(key, dim) == flat


def test_tensor_validation():
    Tensor(2, 3, {(0, 1): 1.0})
    with pytest.raises(ValueError):
        Tensor(2, 3, {(0, 1, 2): 1.0})
    with pytest.raises(ValueError):
        Tensor(2, 3, {(0, 3): 1.0})
    with pytest.raises(ValueError):
        Tensor(0, 3, {})
    with pytest.raises(ValueError):
        Tensor(2, 3, {(1, 0): 1.0}, lexfirst=True)


def test_symmetric_flag_checked():
    Tensor(2, 2, {(0, 1): 2.0, (1, 0): 2.0}, symmetric=True)
    with pytest.raises(ValueError):
        Tensor(2, 2, {(0, 1): 2.0, (1, 0): 3.0}, symmetric=True)
    with pytest.raises(ValueError):
        # missing the (1, 0) arrangement
        Tensor(2, 2, {(0, 1): 2.0}, symmetric=True)


def test_inner_power_matches_naive():
    rng = np.random.default_rng(0)
    for _ in range(10):
        dim, order = 4, 3
        keys = [tuple(rng.integers(0, dim, order)) for _ in range(12)]
        entries = {tuple(int(s) for s in k): float(rng.standard_normal()) for k in keys}
        t = Tensor(order, dim, entries)
        x = rng.standard_normal(dim)
        assert t.inner_power(x) == pytest.approx(
            oracles.naive_inner_power(entries, x), abs=1e-12
        )


def test_asymmetrize_is_orbit_sum():
    # off-diagonal orbits collect one term per distinct arrangement
    t = Tensor(2, 2, {(0, 0): 2.0, (0, 1): 3.0, (1, 0): 3.0}, symmetric=True)
    a = asymmetrize(t)
    assert a.lexfirst
    assert dict(a.entries) == {(0, 0): 2.0, (0, 1): 6.0}


def test_asymmetrize_rejects_non_symmetric_input():
    with pytest.raises(ValueError):
        asymmetrize(Tensor(2, 2, {(0, 1): 1.0, (1, 0): 3.0}))
    with pytest.raises(ValueError):
        asymmetrize(Tensor(2, 2, {(0, 1): 1.0}))


def test_asymmetrize_drops_exact_cancellations():
    t = Tensor(2, 3, {(0, 1): 0.0, (1, 0): 0.0}, symmetric=True)
    assert dict(asymmetrize(t).entries) == {}


def test_asymmetrize_preserves_power_pairing():
    rng = np.random.default_rng(7)
    for order in (2, 3, 4):
        dim = 4
        t = gaussian_symmetric_tensor(dim, order, seed=order)
        a = asymmetrize(t)
        for _ in range(20):
            x = rng.standard_normal(dim)
            assert a.inner_power(x) == pytest.approx(t.inner_power(x), abs=1e-9)


def test_flatten_even_entry_placement():
    t = Tensor(2, 3, {(0, 1): 5.0})
    m = flatten_even(t).to_dense()
    assert m.shape == (3, 3)
    assert m[0, 1] == 5.0
    assert np.count_nonzero(m) == 1

    t4 = Tensor(4, 2, {(0, 1, 1, 0): 7.0})
    m4 = flatten_even(t4).to_dense()
    assert m4.shape == (4, 4)
    assert m4[encode_index((0, 1), 2), encode_index((1, 0), 2)] == 7.0

    with pytest.raises(ValueError):
        flatten_even(Tensor(3, 2, {}))


def test_flatten_matches_oracle_dense():
    rng = np.random.default_rng(3)
    entries = {}
    for _ in range(15):
        entries[tuple(int(s) for s in rng.integers(0, 3, 4))] = float(rng.standard_normal())
    t = Tensor(4, 3, entries)
    assert np.allclose(flatten_even(t).to_dense(), oracles.dense_flatten(entries, 3, 4))


def test_slice_matrix_positions():
    t = Tensor(3, 3, {(1, 0, 2): 4.0})
    last = slice_matrix(t, 2, 2).to_dense()
    assert last[1, 0] == 4.0 and np.count_nonzero(last) == 1
    first = slice_matrix(t, 1, 0).to_dense()
    assert first[0, 2] == 4.0 and np.count_nonzero(first) == 1
    empty = slice_matrix(t, 0, 2).to_dense()
    assert np.count_nonzero(empty) == 0
    with pytest.raises(ValueError):
        slice_matrix(Tensor(4, 2, {}), 0, 0)


def test_slice_matches_oracle():
    rng = np.random.default_rng(11)
    entries = {}
    for _ in range(25):
        entries[tuple(int(s) for s in rng.integers(0, 3, 5))] = float(rng.standard_normal())
    t = Tensor(5, 3, entries)
    for pos in (0, 4):
        for idx in range(3):
            got = slice_matrix(t, idx, pos).to_dense()
            want = oracles.dense_slice(entries, 3, 5, idx, pos)
            assert np.allclose(got, want)


# ---------------------------------------------------------------------------
# multiset basis


def test_multiset_basis_smallest_example():
    b = multiset_basis(2, 2)
    assert [tuple(t) for t in b.tuples] == [(0, 0), (0, 1), (1, 1)]
    assert list(b.orbit_sizes) == [1, 2, 1]


def test_multiset_basis_size_ten_choose():
    b = multiset_basis(10, 4)
    assert b.size == 715
    assert b.size == math.comb(13, 4)


@settings(max_examples=40, deadline=None)
@given(
    dim=st.integers(2, 5),
    length=st.integers(1, 4),
    cap=st.sampled_from([None, 1, 2, 3]),
)
def test_orbit_sizes_sum_to_cap_obeying_tuples(dim, length, cap):
    b = multiset_basis(dim, length, cap)
    brute = 0
    for key in itertools.product(range(dim), repeat=length):
        mult = max(Counter(key).values())
        if cap is None or mult <= cap:
            brute += 1
    assert int(b.orbit_sizes.sum()) == brute
    # canonical tuples are sorted and lex-ordered
    rows = [tuple(t) for t in b.tuples]
    assert rows == sorted(rows)
    assert all(tuple(sorted(r)) == r for r in rows)


def test_lift_compress_is_masked_symmetrizer():
    rng = np.random.default_rng(5)
    for dim, length, cap in [(2, 2, None), (3, 2, None), (2, 3, 2), (3, 3, 1), (2, 4, 2)]:
        b = multiset_basis(dim, length, cap)
        proj = oracles.perm_symmetrizer(dim, length) * oracles.cap_mask(dim, length, cap)[None, :]
        proj = proj * oracles.cap_mask(dim, length, cap)[:, None]
        for _ in range(5):
            v = rng.standard_normal(dim**length)
            assert np.allclose(b.lift(b.compress(v)), proj @ v, atol=1e-12)


def test_lift_compress_unit_vector_example():
    b = multiset_basis(2, 2)
    v = np.zeros(4)
    v[encode_index((0, 1), 2)] = 1.0
    out = b.lift(b.compress(v))
    assert out[encode_index((0, 1), 2)] == pytest.approx(0.5)
    assert out[encode_index((1, 0), 2)] == pytest.approx(0.5)
    assert out[encode_index((0, 0), 2)] == 0.0


def test_lift_is_isometry_and_projector_idempotent():
    rng = np.random.default_rng(9)
    b = multiset_basis(3, 3, 2)
    for _ in range(5):
        w = rng.standard_normal(b.size)
        lifted = b.lift(w)
        assert np.linalg.norm(lifted) == pytest.approx(np.linalg.norm(w), rel=1e-12)
        # applying compress-lift twice changes nothing
        once = b.lift(b.compress(lifted))
        assert np.allclose(once, lifted, atol=1e-12)


def test_basis_position_lookup():
    b = multiset_basis(5, 3, 2)
    for i, t in enumerate(b.tuples):
        assert b.position(tuple(int(s) for s in t)) == i
    u = b.unit(tuple(int(s) for s in b.tuples[3]))
    assert u[3] == 1.0 and u.sum() == 1.0


def test_resource_guards():
    with pytest.raises(ResourceLimitError):
        multiset_basis(30, 6)
    with pytest.raises(ResourceLimitError):
        Tensor(8, 10, {}).to_dense(max_entries=10**6)


# ---------------------------------------------------------------------------
# gaussian sampler


def test_gaussian_tensor_symmetric_and_deterministic():
    t1 = gaussian_symmetric_tensor(4, 3, seed=42)
    t2 = gaussian_symmetric_tensor(4, 3, seed=42)
    t3 = gaussian_symmetric_tensor(4, 3, seed=43)
    assert t1.symmetric
    assert dict(t1.entries) == dict(t2.entries)
    assert dict(t1.entries) != dict(t3.entries)
    # exact equality across arrangements, not just approximate
    for key, val in t1.entries.items():
        assert t1.entries[tuple(sorted(key))] == val


def test_gaussian_tensor_orbit_means():
    t = gaussian_symmetric_tensor(3, 2, seed=1)
    dense = t.to_dense()
    assert np.allclose(dense, dense.T)
