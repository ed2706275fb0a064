"""Predicate expansions, margin programs, and CSP-to-XOR refutation."""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

import oracles
from kroncert.csp import (
    CspInstance,
    Predicate,
    WeightedXor,
    as_xor_instance,
    decompose,
    default_split_count,
    evaluate_csp,
    fourier,
    predicate_by_name,
    refute_csp,
    sample_csp,
    split_unweighted,
    twise_margin_lp,
)


def random_csp(pred, num_vars, count, rng):
    clauses = []
    for _ in range(count):
        key = tuple(int(v) for v in rng.integers(0, num_vars, pred.arity))
        pattern = tuple(int(s) for s in rng.integers(0, 2, pred.arity) * 2 - 1)
        clauses.append((key, pattern))
    return CspInstance(num_vars, pred, tuple(clauses))


def weighted_value(psi, x):
    total = 0
    for label, c in psi.weights.items():
        prod = c
        for v in label:
            prod *= x[v]
        total += prod
    return total


# ---------------------------------------------------------------------------
# predicates and Fourier expansions


def test_builtin_tables():
    assert predicate_by_name("kSAT", 3).bitstring() == "01111111"
    assert predicate_by_name("kXOR", 2).bitstring() == "1001"
    assert predicate_by_name("NAE", 2).bitstring() == "0110"
    # strict majority: ties lose
    assert predicate_by_name("Majority", 2).bitstring() == "0001"
    assert predicate_by_name("Majority", 3).bitstring() == "00010111"


def test_predicate_validation():
    with pytest.raises(ValueError):
        Predicate(2, (0, 1, 1))
    with pytest.raises(ValueError):
        Predicate(2, (0, 1, 2, 1))
    with pytest.raises(ValueError):
        Predicate(0, ())
    with pytest.raises(ValueError):
        predicate_by_name("kX0R", 3)


def test_predicate_value_matches_table():
    pred = predicate_by_name("Majority", 3)
    for i in range(8):
        z = oracles.zbits(i, 3)
        assert pred.value(z) == pred.table[i]


def test_fourier_constant():
    fe = fourier(Predicate(2, (1, 1, 1, 1)))
    assert fe.head() == 1
    assert all(c == 0 for s, c in fe.coefficients.items() if s)


def test_fourier_single_variable_indicator():
    fe = fourier(Predicate(1, (0, 1)))
    assert fe.coefficients == {(): Fraction(1, 2), (0,): Fraction(1, 2)}


def test_fourier_matches_oracle():
    rng = np.random.default_rng(7)
    tables = [tuple(predicate_by_name("kSAT", 3).table)]
    for k in (2, 3, 5):
        tables.append(tuple(int(b) for b in rng.integers(0, 2, 2**k)))
    for table in tables:
        k = len(table).bit_length() - 1
        fe = fourier(Predicate(k, table))
        assert dict(fe.coefficients) == oracles.naive_fourier(list(table), k)


def test_fourier_reconstructs_and_parseval():
    rng = np.random.default_rng(11)
    for k in (2, 4):
        table = tuple(int(b) for b in rng.integers(0, 2, 2**k))
        fe = fourier(Predicate(k, table))
        for i in range(2**k):
            assert fe.reconstruct(i) == table[i]
        # 0/1 tables: sum of squared coefficients equals the mean
        assert sum(c * c for c in fe.coefficients.values()) == Fraction(sum(table), 2**k)


# ---------------------------------------------------------------------------
# t-wise margin program


def test_margin_constant_predicate_is_zero():
    tm = twise_margin_lp(Predicate(2, (1, 1, 1, 1)), 1)
    assert tm.margin == 0


def test_margin_single_variable_indicator():
    tm = twise_margin_lp(Predicate(1, (0, 1)), 1)
    assert tm.margin == Fraction(1, 2)
    assert tm.coefficients == {(0,): Fraction(1, 2)}


@pytest.mark.parametrize(
    "name,k,degree",
    [("kSAT", 3, 2), ("kSAT", 3, 3), ("kXOR", 2, 1), ("NAE", 3, 1), ("Majority", 3, 2)],
)
def test_margin_equals_dual_oracle(name, k, degree):
    pred = predicate_by_name(name, k)
    tm = twise_margin_lp(pred, degree)
    assert tm.margin == 1 - oracles.margin_oracle(list(pred.table), k, degree)


def test_margin_certificate_inequalities():
    pred = predicate_by_name("Majority", 3)
    tm = twise_margin_lp(pred, 2)
    for i in range(8):
        z = oracles.zbits(i, 3)
        q = sum(c * oracles.chi(s, z) for s, c in tm.coefficients.items())
        assert pred.table[i] <= (1 - tm.margin) + q
    assert all(len(s) <= 2 for s in tm.coefficients)


def test_margin_degree_validation():
    pred = predicate_by_name("kSAT", 3)
    with pytest.raises(ValueError):
        twise_margin_lp(pred, 0)
    with pytest.raises(ValueError):
        twise_margin_lp(pred, 4)


# ---------------------------------------------------------------------------
# sampling and evaluation


def test_sampler_deterministic():
    pred = predicate_by_name("kSAT", 3)
    a = sample_csp(pred, 9, 0.05, seed=3)
    b = sample_csp(pred, 9, 0.05, seed=3)
    assert a.clauses == b.clauses
    assert sample_csp(pred, 9, 0.05, seed=4).clauses != a.clauses
    assert a.prob == 0.05 and a.seed == 3


def test_sampler_edge_probabilities():
    pred = predicate_by_name("kXOR", 2)
    assert sample_csp(pred, 6, 0.0, seed=0).clause_count == 0
    full = sample_csp(pred, 2, 1.0, seed=0)
    assert [key for key, _ in full.clauses] == list(itertools.product(range(2), repeat=2))


def test_evaluate_empty_is_one():
    pred = predicate_by_name("kSAT", 3)
    inst = CspInstance(4, pred, ())
    assert evaluate_csp(inst, np.ones(4, dtype=int)) == 1.0


def test_evaluate_matches_oracle():
    rng = np.random.default_rng(23)
    pred = predicate_by_name("NAE", 3)
    inst = random_csp(pred, 8, 30, rng)
    clauses = [(list(k), list(p)) for k, p in inst.clauses]
    for _ in range(10):
        x = rng.integers(0, 2, 8) * 2 - 1
        expected = oracles.naive_csp_fraction(8, list(pred.table), 3, clauses, x)
        assert evaluate_csp(inst, x) == expected


def test_evaluate_uniform_mean_near_head():
    pred = predicate_by_name("Majority", 3)
    inst = sample_csp(pred, 10, 0.04, seed=9)
    rng = np.random.default_rng(1)
    draws = 4000
    vals = [evaluate_csp(inst, rng.integers(0, 2, 10) * 2 - 1) for _ in range(draws)]
    mean = float(np.mean(vals))
    stderr = float(np.std(vals)) / math.sqrt(draws)
    assert abs(mean - float(pred.mean)) <= 3 * stderr + 1e-9


def test_global_pattern_flip_invariance():
    rng = np.random.default_rng(31)
    pred = predicate_by_name("kSAT", 3)
    inst = random_csp(pred, 7, 25, rng)
    flipped = CspInstance(
        7, pred, tuple((key, tuple(-s for s in pattern)) for key, pattern in inst.clauses)
    )
    for _ in range(8):
        x = rng.integers(0, 2, 7) * 2 - 1
        assert evaluate_csp(inst, x) == evaluate_csp(flipped, -x)


def test_instance_and_evaluate_validation():
    pred = predicate_by_name("kXOR", 2)
    with pytest.raises(ValueError):
        CspInstance(3, pred, (((0, 3), (1, 1)),))
    with pytest.raises(ValueError):
        CspInstance(3, pred, (((0, 1), (1, 0)),))
    with pytest.raises(ValueError):
        CspInstance(3, pred, (((0, 1, 2), (1, 1, 1)),))
    inst = CspInstance(3, pred, (((0, 1), (1, -1)),))
    with pytest.raises(ValueError):
        evaluate_csp(inst, np.ones(4, dtype=int))
    with pytest.raises(ValueError):
        evaluate_csp(inst, np.array([1, 0, 1]))


# ---------------------------------------------------------------------------
# decomposition and splitting


def test_decompose_empty_instance():
    pred = predicate_by_name("kSAT", 3)
    inst = CspInstance(5, pred, ())
    for psi in decompose(inst, fourier(pred)):
        assert psi.weights == {}


def test_decompose_single_clause():
    pred = predicate_by_name("kXOR", 3)
    inst = CspInstance(6, pred, (((2, 0, 4), (1, -1, -1)),))
    psis = {psi.subset: psi for psi in decompose(inst, fourier(pred))}
    # kXOR expansion has only the full subset
    assert set(psis) == {(0, 1, 2)}
    assert psis[(0, 1, 2)].weights == {(2, 0, 4): 1 * -1 * -1}


def test_decompose_identity_exact():
    rng = np.random.default_rng(41)
    pred = predicate_by_name("kSAT", 3)
    inst = random_csp(pred, 8, 40, rng)
    fe = fourier(pred)
    psis = decompose(inst, fe)
    m = inst.clause_count
    for _ in range(100):
        x = rng.integers(0, 2, 8) * 2 - 1
        lhs = Fraction(round(m * evaluate_csp(inst, x)))
        rhs = m * fe.head() + sum(
            fe.coefficient(psi.subset) * weighted_value(psi, x) for psi in psis
        )
        assert lhs == rhs


def test_decompose_margin_upper_bounds():
    # margin basis gives a pointwise inequality rather than an identity
    rng = np.random.default_rng(43)
    pred = predicate_by_name("Majority", 3)
    tm = twise_margin_lp(pred, 2)
    inst = random_csp(pred, 7, 30, rng)
    psis = decompose(inst, tm)
    m = inst.clause_count
    for _ in range(50):
        x = rng.integers(0, 2, 7) * 2 - 1
        sat = Fraction(round(m * evaluate_csp(inst, x)))
        bound = m * (1 - tm.margin) + sum(
            tm.coefficients[psi.subset] * weighted_value(psi, x) for psi in psis
        )
        assert sat <= bound


def test_split_skip_single_piece_identical():
    psi = WeightedXor(6, (0, 1), {(0, 1): 1, (2, 3): -1, (4, 5): 1})
    direct = as_xor_instance(psi)
    (only,) = split_unweighted(psi, 1, seed=0)
    assert only.clauses == direct.clauses
    assert direct.clause_count == psi.total_weight


def test_split_partitions_exactly():
    rng = np.random.default_rng(47)
    weights = {}
    for _ in range(12):
        label = tuple(int(v) for v in rng.integers(0, 9, 2))
        weights[label] = int(rng.integers(-5, 6))
    weights = {k: v for k, v in weights.items() if v != 0}
    psi = WeightedXor(9, (0, 1), weights)
    subs = split_unweighted(psi, 4, seed=11)
    assert sum(s.clause_count for s in subs) == psi.total_weight
    again = split_unweighted(psi, 4, seed=11)
    assert [s.clauses for s in subs] == [s.clauses for s in again]
    for _ in range(50):
        x = rng.integers(0, 2, 9) * 2 - 1
        direct = weighted_value(psi, x)
        pieces = 0
        for sub in subs:
            for key, sign in sub.clauses:
                pieces += sign * int(x[key[0]]) * int(x[key[1]])
        assert pieces == direct


def test_split_validation_and_empty():
    psi = WeightedXor(4, (0, 1), {})
    assert all(s.clause_count == 0 for s in split_unweighted(psi, 3, seed=0))
    with pytest.raises(ValueError):
        split_unweighted(psi, 0, seed=0)
    assert default_split_count(1) >= 1
    assert default_split_count(150) == math.ceil(math.log(150) ** 2)


# ---------------------------------------------------------------------------
# full refutation


def test_refute_empty_vacuous():
    pred = predicate_by_name("kSAT", 3)
    rep = refute_csp(CspInstance(5, pred, ()), level=1)
    assert rep.upper == 1.0 and rep.vacuous and rep.subsets == ()


def test_refute_constant_predicate():
    inst = CspInstance(5, Predicate(2, (1, 1, 1, 1)), (((0, 1), (1, 1)),))
    rep = refute_csp(inst, level=1)
    assert rep.upper == 1.0 and rep.vacuous and rep.subsets == ()
    assert rep.head == 1.0


def test_refute_zero_margin_short_circuits():
    # 3-OR supports a pairwise-uniform distribution, so degree 2 gives no margin
    pred = predicate_by_name("kSAT", 3)
    inst = sample_csp(pred, 8, 0.05, seed=2)
    rep = refute_csp(inst, level=1, margin_degree=2)
    assert rep.basis == "margin" and rep.margin == 0.0
    assert rep.upper == 1.0 and rep.subsets == ()


def test_refute_xor_predicate_soundness():
    # brute-force comparison at the example density
    pred = predicate_by_name("kXOR", 2)
    table = list(pred.table)
    for seed in range(30):
        inst = sample_csp(pred, 12, 0.3, seed=seed)
        rep = refute_csp(inst, level=1, seed=0)
        clauses = [(list(k), list(p)) for k, p in inst.clauses]
        best, _ = oracles.naive_csp_opt(12, table, 2, clauses)
        assert rep.upper >= best - 1e-12
        assert 0.0 <= rep.upper <= 1.0


def test_refute_xor_predicate_usefulness():
    # at this density the certified bound separates from 1 in most seeds
    pred = predicate_by_name("kXOR", 2)
    hits = 0
    for seed in range(30):
        inst = sample_csp(pred, 12, 0.7, seed=seed)
        rep = refute_csp(inst, level=1, seed=0)
        hits += rep.upper <= 0.85
    assert hits >= 24


def test_refute_three_sat_soundness():
    pred = predicate_by_name("kSAT", 3)
    table = list(pred.table)
    for seed in range(10):
        inst = sample_csp(pred, 10, 0.08, seed=seed)
        rep = refute_csp(inst, level=1, seed=0)
        clauses = [(list(k), list(p)) for k, p in inst.clauses]
        best, _ = oracles.naive_csp_opt(10, table, 3, clauses)
        assert rep.upper >= best - 1e-12


def test_refute_margin_basis_report():
    pred = predicate_by_name("kSAT", 3)
    inst = sample_csp(pred, 10, 0.08, seed=5)
    rep = refute_csp(inst, level=1, margin_degree=3, seed=0)
    assert rep.basis == "margin" and rep.margin_degree == 3
    assert rep.margin == pytest.approx(0.125)
    assert rep.head == pytest.approx(0.875)
    assert rep.upper >= rep.head


def test_refute_split_path_and_gamma():
    # duplicate clauses force |c_L| > 1 and the split route
    pred = predicate_by_name("kXOR", 2)
    clause = ((0, 1), (1, 1))
    inst = CspInstance(6, pred, (clause,) * 3 + (((2, 3), (1, -1)),))
    rep = refute_csp(inst, level=1, split_count=2, seed=0)
    (cert,) = rep.subsets
    assert cert.method == "split-refute"
    assert cert.max_abs == 3 and cert.weight == 4
    assert sum(s[0] for s in cert.sub_stats) == 4
    assert 0.0 <= cert.gamma <= cert.weight / inst.clause_count + 1e-12


def test_refute_singleton_degree_bound():
    # 1-SAT style predicate: only singleton subsets appear
    pred = Predicate(1, (0, 1))
    inst = CspInstance(8, pred, (((3,), (1,)), ((5,), (-1,)), ((3,), (1,))))
    rep = refute_csp(inst, level=1)
    (cert,) = rep.subsets
    assert cert.method == "degree-bound"
    assert cert.gamma == pytest.approx(min(1.0, 8 * 2 / 3))
    assert rep.upper == 1.0  # n*max|c|/m saturates here


def test_refute_deterministic_and_provenance():
    pred = predicate_by_name("kSAT", 3)
    inst = sample_csp(pred, 9, 0.06, seed=13)
    a = refute_csp(inst, level=1, seed=4)
    b = refute_csp(inst, level=1, seed=4)
    assert a.upper == b.upper
    assert [c.gamma for c in a.subsets] == [c.gamma for c in b.subsets]
    assert a.provenance["p"] == 0.06 and a.provenance["seed"] == 13
    assert a.provenance["master_seed"] == 4
    for cert in a.subsets:
        assert (cert.case is None) == (inst.prob is None)


def test_refute_case_note_absent_without_prob():
    pred = predicate_by_name("kXOR", 2)
    inst = CspInstance(5, pred, (((0, 1), (1, 1)), ((2, 3), (1, -1))))
    rep = refute_csp(inst, level=1)
    assert all(cert.case is None for cert in rep.subsets)


def test_refute_bound_never_exceeds_one():
    rng = np.random.default_rng(59)
    pred = predicate_by_name("NAE", 3)
    inst = random_csp(pred, 9, 50, rng)
    rep = refute_csp(inst, level=1, seed=0)
    assert 0.0 <= rep.upper <= 1.0
    assert rep.raw_bound >= rep.upper - 1e-12
