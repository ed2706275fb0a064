"""Boolean-predicate CSP refutation by reduction to weighted XOR instances.

A predicate on k sign variables expands over the parity basis; each
subset S of positions turns the clause list into a weighted |S|-XOR
instance whose integer coefficients sum the clause pattern signs.  The
certified bound is

    head + sum_{S nonzero} |coef(S)| * gamma_S,        clamped to [0, 1],

with head the constant coefficient (or 1 - margin when a low-degree
supporting margin is requested), gamma_S a certified bound on
|Psi_S(x)|/m: a degree argument for singletons, otherwise a split into
unweighted sub-instances each handed to the XOR refuter.  Sign
conventions: pattern bit (k-1-j) of a truth-table index set means
variable j equals +1; clause evaluation reads P(x_I * sigma).
"""
from __future__ import annotations

import concurrent.futures
import dataclasses
import itertools
import math
import time
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import ResourceLimitError
from .spectral import SpectralConfig
from .xorsat import SCHEMA_VERSION, XorInstance, refute

__all__ = [
    "Predicate",
    "FourierExpansion",
    "TwiseMargin",
    "CspInstance",
    "WeightedXor",
    "SubsetCertificate",
    "CspReport",
    "predicate_by_name",
    "fourier",
    "twise_margin_lp",
    "sample_csp",
    "evaluate_csp",
    "decompose",
    "as_xor_instance",
    "split_unweighted",
    "default_split_count",
    "refute_csp",
]

BUILTIN_PREDICATES = ("kSAT", "kXOR", "NAE", "Majority")

_SAMPLE_BLOCK = 1 << 18
_MAX_SAMPLE_SPACE = 100_000_000


def _signs_of_index(index: int, arity: int) -> tuple[int, ...]:
    """Variable j is +1 iff bit (arity-1-j) of the table index is set."""
    return tuple(1 if index >> (arity - 1 - j) & 1 else -1 for j in range(arity))


def _index_of_signs(signs: Sequence[int]) -> int:
    idx = 0
    for value in signs:
        idx = idx << 1 | (value > 0)
    return idx


@dataclasses.dataclass(frozen=True)
class Predicate:
    """Boolean predicate as a truth table over sign patterns."""

    arity: int
    table: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.arity < 1:
            raise ValueError(f"predicate arity must be >= 1, got {self.arity}")
        object.__setattr__(self, "table", tuple(int(b) for b in self.table))
        if len(self.table) != 2**self.arity:
            raise ValueError(
                f"truth table needs {2 ** self.arity} entries, got {len(self.table)}"
            )
        if any(b not in (0, 1) for b in self.table):
            raise ValueError("truth table entries must be 0 or 1")

    def value(self, signs: Sequence[int]) -> int:
        return self.table[_index_of_signs(signs)]

    @property
    def mean(self) -> Fraction:
        return Fraction(sum(self.table), 2**self.arity)

    def bitstring(self) -> str:
        return "".join(str(b) for b in self.table)


def predicate_by_name(name: str, arity: int) -> Predicate:
    """Builtins: kSAT (any literal true), kXOR (even number of -1s),
    NAE (not all equal), Majority (strictly more +1s)."""
    if arity < 1:
        raise ValueError(f"predicate arity must be >= 1, got {arity}")
    size = 2**arity
    if name == "kSAT":
        table = tuple(0 if i == 0 else 1 for i in range(size))
    elif name == "kXOR":
        table = tuple(1 if (arity - i.bit_count()) % 2 == 0 else 0 for i in range(size))
    elif name == "NAE":
        table = tuple(0 if i in (0, size - 1) else 1 for i in range(size))
    elif name == "Majority":
        table = tuple(1 if 2 * i.bit_count() > arity else 0 for i in range(size))
    else:
        raise ValueError(f"unknown predicate {name!r}; builtins: {BUILTIN_PREDICATES}")
    return Predicate(arity, table)


def _chi(subset: tuple[int, ...], index: int, arity: int) -> int:
    flips = sum(1 for j in subset if not index >> (arity - 1 - j) & 1)
    return -1 if flips % 2 else 1


@dataclasses.dataclass(frozen=True)
class FourierExpansion:
    """Exact parity-basis coefficients of a predicate (dyadic rationals)."""

    arity: int
    coefficients: Mapping[tuple[int, ...], Fraction]

    def coefficient(self, subset: Sequence[int]) -> Fraction:
        return self.coefficients.get(tuple(subset), Fraction(0))

    def head(self) -> Fraction:
        return self.coefficient(())

    def term_coefficients(self) -> dict[tuple[int, ...], Fraction]:
        return {s: c for s, c in self.coefficients.items() if s and c != 0}

    def reconstruct(self, index: int) -> Fraction:
        return sum(
            (c * _chi(s, index, self.arity) for s, c in self.coefficients.items()),
            Fraction(0),
        )


def fourier(pred: Predicate) -> FourierExpansion:
    """Full exact transform: coef(S) = 2^-k sum_z P(z) chi_S(z)."""
    k = pred.arity
    coeffs: dict[tuple[int, ...], Fraction] = {}
    for size in range(k + 1):
        for subset in itertools.combinations(range(k), size):
            acc = sum(pred.table[i] * _chi(subset, i, k) for i in range(2**k))
            coeffs[subset] = Fraction(acc, 2**k)
    return FourierExpansion(k, coeffs)


@dataclasses.dataclass(frozen=True)
class TwiseMargin:
    """Maximal margin delta with P(z) <= (1-delta) + Q(z), deg Q <= degree.

    Q has zero constant term, so 1 - delta caps the satisfied fraction
    whenever every Psi_S value of Q's support is certified negligible.
    """

    degree: int
    margin: Fraction
    coefficients: Mapping[tuple[int, ...], Fraction]

    def head(self) -> Fraction:
        return 1 - self.margin

    def term_coefficients(self) -> dict[tuple[int, ...], Fraction]:
        return {s: c for s, c in self.coefficients.items() if c != 0}


def _simplex_max(
    objective: list[Fraction], rows: list[list[Fraction]], rhs: list[Fraction]
) -> tuple[Fraction, list[Fraction]]:
    """Maximize objective.x over rows.x <= rhs, x >= 0, assuming rhs >= 0.

    Exact rational tableau simplex from the slack basis, Bland's rule, so
    termination is guaranteed and the optimum carries no roundoff.
    """
    num_rows, num_vars = len(rows), len(objective)
    tableau = [row[:] + [Fraction(0)] * num_rows + [rhs[i]] for i, row in enumerate(rows)]
    for i in range(num_rows):
        tableau[i][num_vars + i] = Fraction(1)
    cost = [-c for c in objective] + [Fraction(0)] * (num_rows + 1)
    basis = list(range(num_vars, num_vars + num_rows))
    while True:
        enter = next((j for j, c in enumerate(cost[:-1]) if c < 0), None)
        if enter is None:
            break
        candidates = [
            (tableau[i][-1] / tableau[i][enter], basis[i], i)
            for i in range(num_rows)
            if tableau[i][enter] > 0
        ]
        if not candidates:
            raise RuntimeError("margin program is unbounded; malformed constraint system")
        _, _, leave = min(candidates)
        pivot = tableau[leave][enter]
        tableau[leave] = [v / pivot for v in tableau[leave]]
        for i in range(num_rows):
            if i != leave and tableau[i][enter]:
                f = tableau[i][enter]
                tableau[i] = [a - f * b for a, b in zip(tableau[i], tableau[leave])]
        if cost[enter]:
            f = cost[enter]
            cost = [a - f * b for a, b in zip(cost, tableau[leave])]
        basis[leave] = enter
    solution = [Fraction(0)] * num_vars
    for i, b in enumerate(basis):
        if b < num_vars:
            solution[b] = tableau[i][-1]
    value = sum((c * v for c, v in zip(objective, solution)), Fraction(0))
    return value, solution


def twise_margin_lp(pred: Predicate, degree: int) -> TwiseMargin:
    """Largest delta with P(z) <= (1-delta) + Q(z) for zero-mean Q of low degree.

    delta is 0 exactly when the predicate supports a distribution with
    uniform degree-<=t marginals.  Solved exactly; free coefficients are
    split into positive and negative parts.
    """
    k = pred.arity
    if not 1 <= degree <= k:
        raise ValueError(f"degree must lie in [1, {k}], got {degree}")
    subsets = [
        s for size in range(1, degree + 1) for s in itertools.combinations(range(k), size)
    ]
    num_subsets = len(subsets)
    rows = []
    rhs = []
    for i in range(2**k):
        chis = [Fraction(_chi(s, i, k)) for s in subsets]
        rows.append([Fraction(1)] + [-c for c in chis] + chis)
        rhs.append(Fraction(1 - pred.table[i]))
    objective = [Fraction(1)] + [Fraction(0)] * (2 * num_subsets)
    value, solution = _simplex_max(objective, rows, rhs)
    coeffs = {
        s: solution[1 + idx] - solution[1 + num_subsets + idx]
        for idx, s in enumerate(subsets)
    }
    return TwiseMargin(degree, value, coeffs)


@dataclasses.dataclass(frozen=True)
class CspInstance:
    """Clause list of (variable tuple, negation pattern) under one predicate."""

    num_vars: int
    predicate: Predicate
    clauses: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    prob: float | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "clauses",
            tuple(
                (tuple(int(v) for v in key), tuple(int(s) for s in pattern))
                for key, pattern in self.clauses
            ),
        )
        if self.num_vars < 1:
            raise ValueError(f"num_vars must be >= 1, got {self.num_vars}")
        k = self.predicate.arity
        for key, pattern in self.clauses:
            if len(key) != k or len(pattern) != k:
                raise ValueError(f"clause {key!r}/{pattern!r} does not match arity {k}")
            if any(not 0 <= v < self.num_vars for v in key):
                raise ValueError(f"clause {key!r} out of range for {self.num_vars} variables")
            if any(s not in (-1, 1) for s in pattern):
                raise ValueError("negation patterns must be ±1 vectors")

    @property
    def clause_count(self) -> int:
        return len(self.clauses)


def sample_csp(pred: Predicate, num_vars: int, prob: float, seed: int) -> CspInstance:
    """Include each ordered tuple with probability prob, uniform ±1 pattern."""
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {prob}")
    if num_vars < 1:
        raise ValueError(f"num_vars must be >= 1, got {num_vars}")
    k = pred.arity
    total = num_vars**k
    if total > _MAX_SAMPLE_SPACE:
        raise ResourceLimitError(
            f"sampling over {total} ordered tuples exceeds the {_MAX_SAMPLE_SPACE} budget"
        )
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    shape = (num_vars,) * k
    clauses: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    for start in range(0, total, _SAMPLE_BLOCK):
        stop = min(start + _SAMPLE_BLOCK, total)
        kept = np.nonzero(rng.random(stop - start) < prob)[0]
        if kept.size == 0:
            continue
        patterns = rng.integers(0, 2, (kept.size, k)) * 2 - 1
        coords = np.unravel_index(kept + start, shape)
        for i in range(kept.size):
            key = tuple(int(coords[pos][i]) for pos in range(k))
            clauses.append((key, tuple(int(s) for s in patterns[i])))
    return CspInstance(num_vars, pred, tuple(clauses), prob=prob, seed=seed)


def evaluate_csp(inst: CspInstance, assignment) -> float:
    """Fraction of clauses with P(x_I * sigma) = 1; empty instances count as 1."""
    x = np.asarray(assignment)
    if x.shape != (inst.num_vars,):
        raise ValueError(f"assignment must have length {inst.num_vars}, got shape {x.shape}")
    if not np.all(np.abs(x) == 1):
        raise ValueError("assignment entries must be ±1")
    if not inst.clauses:
        return 1.0
    k = inst.predicate.arity
    keys = np.array([key for key, _ in inst.clauses], dtype=np.intp)
    patterns = np.array([pattern for _, pattern in inst.clauses])
    signs = x[keys] * patterns
    weights = 1 << np.arange(k - 1, -1, -1)
    indices = ((signs > 0) * weights).sum(axis=1)
    table = np.array(inst.predicate.table)
    return float(np.count_nonzero(table[indices])) / inst.clause_count


@dataclasses.dataclass(frozen=True)
class WeightedXor:
    """Integer-weighted parity polynomial collected from one position subset."""

    num_vars: int
    subset: tuple[int, ...]
    weights: Mapping[tuple[int, ...], int]

    @property
    def arity(self) -> int:
        return len(self.subset)

    @property
    def total_weight(self) -> int:
        return sum(abs(c) for c in self.weights.values())

    @property
    def max_abs(self) -> int:
        return max((abs(c) for c in self.weights.values()), default=0)


def decompose(inst: CspInstance, expansion) -> list[WeightedXor]:
    """One weighted XOR polynomial per nonzero-coefficient subset.

    c_L sums, over clauses whose S-positions spell L, the product of the
    clause pattern entries on S; exact identity on every assignment:
    m*P(x) = m*head + sum_S coef(S) * Psi_S(x).
    """
    out = []
    for subset in sorted(expansion.term_coefficients()):
        acc: dict[tuple[int, ...], int] = {}
        for key, pattern in inst.clauses:
            label = tuple(key[j] for j in subset)
            sign = 1
            for j in subset:
                sign *= pattern[j]
            acc[label] = acc.get(label, 0) + sign
        weights = {label: c for label, c in acc.items() if c != 0}
        out.append(WeightedXor(inst.num_vars, subset, weights))
    return out


def as_xor_instance(psi: WeightedXor) -> XorInstance:
    """Unweighted expansion: |c_L| identical clauses of sign sgn(c_L)."""
    clauses = []
    for label in sorted(psi.weights):
        c = psi.weights[label]
        sign = 1 if c > 0 else -1
        clauses.extend((label, sign) for _ in range(abs(c)))
    return XorInstance(psi.num_vars, psi.arity, tuple(clauses))


def default_split_count(num_vars: int) -> int:
    """ceil(ln^2 n), at least 1."""
    return max(1, math.ceil(math.log(max(num_vars, 2)) ** 2))


def split_unweighted(psi: WeightedXor, pieces: int, seed) -> list[XorInstance]:
    """Assign each coefficient unit to a uniform sub-instance, sign preserved.

    The signed sub-instance polynomials sum to the weighted polynomial
    exactly; deterministic given the seed (labels visited in sorted order).
    """
    if pieces < 1:
        raise ValueError(f"pieces must be >= 1, got {pieces}")
    rng = np.random.default_rng(seed)
    buckets: list[list[tuple[tuple[int, ...], int]]] = [[] for _ in range(pieces)]
    for label in sorted(psi.weights):
        c = psi.weights[label]
        sign = 1 if c > 0 else -1
        for target in rng.integers(0, pieces, abs(c)):
            buckets[int(target)].append((label, sign))
    return [XorInstance(psi.num_vars, psi.arity, tuple(b)) for b in buckets]


@dataclasses.dataclass(frozen=True)
class SubsetCertificate:
    """Certified bound on |Psi_S(x)|/m for one subset, with its inputs."""

    subset: tuple[int, ...]
    coefficient: float
    weight: int
    max_abs: int
    method: str
    gamma: float
    case: str | None
    sub_stats: tuple[tuple[int, float, str], ...]
    elapsed_s: float


@dataclasses.dataclass(frozen=True)
class CspReport:
    """Certified upper bound on the satisfied fraction of a CSP instance."""

    kind: str
    num_vars: int
    arity: int
    predicate: str
    clause_count: int
    level: int | None
    basis: str
    margin_degree: int | None
    margin: float | None
    head: float
    subsets: tuple[SubsetCertificate, ...]
    raw_bound: float
    upper: float
    vacuous: bool
    norm_mode: str
    split_count: int
    timings: Mapping[str, float]
    provenance: Mapping[str, object]
    schema_version: str = SCHEMA_VERSION


def _density_case(prob: float | None, num_vars: int, arity: int, subset_size: int) -> str | None:
    if prob is None:
        return None
    threshold = prob * num_vars ** (arity - subset_size)
    side = ">=" if threshold >= 1.0 else "<"
    return f"p*n^(k-|S|) = {threshold:.3g} {side} 1"


def _deviation(upper: float) -> float:
    return min(1.0, max(0.0, 2.0 * upper - 1.0))


def refute_csp(
    inst: CspInstance,
    level: int | None = None,
    delta: float = 0.25,
    cap: int | None = None,
    config: SpectralConfig | None = None,
    margin_degree: int | None = None,
    seed: int = 0,
    split_count: int | None = None,
    provenance: Mapping[str, object] | None = None,
) -> CspReport:
    """Certified upper bound head + sum |coef(S)|*gamma_S on the satisfied fraction.

    Singleton subsets use the degree bound n*max|c|/m; larger subsets split
    into unweighted pieces (skipped when already unweighted) and take
    gamma_S = (sum m_i / m) * max_i min(1, 2*upper_i - 1) from the XOR
    refuter's two-sided certificates, falling back to the weight bound when
    a sub-certificate is vacuous.  Density case thresholds are recorded per
    subset but never gate execution.
    """
    started = time.perf_counter()
    pred = inst.predicate
    n, m = inst.num_vars, inst.clause_count
    cfg = config or SpectralConfig()
    if margin_degree is None:
        expansion = fourier(pred)
        basis = "fourier"
        margin = None
    else:
        expansion = twise_margin_lp(pred, margin_degree)
        basis = "margin"
        margin = float(expansion.margin)
    head = float(expansion.head())
    pieces = default_split_count(n) if split_count is None else split_count
    if pieces < 1:
        raise ValueError(f"split_count must be >= 1, got {pieces}")
    prov: dict[str, object] = dict(provenance or {})
    prov["master_seed"] = seed
    if inst.prob is not None:
        prov["p"] = inst.prob
    if inst.seed is not None:
        prov["seed"] = inst.seed
    if level is None:
        prov["level_rule"] = "per sub-instance density heuristic"

    def finish(subsets: tuple[SubsetCertificate, ...], raw: float) -> CspReport:
        modes = [s for cert in subsets for (_, _, s) in cert.sub_stats]
        if "heuristic-estimate" in modes:
            norm_mode = "heuristic-estimate"
        elif "certified-trace" in modes:
            norm_mode = "certified-trace"
        else:
            norm_mode = "certified-exact"
        upper = min(1.0, raw)
        return CspReport(
            kind="csp",
            num_vars=n,
            arity=pred.arity,
            predicate=pred.bitstring(),
            clause_count=m,
            level=level,
            basis=basis,
            margin_degree=margin_degree,
            margin=margin,
            head=head,
            subsets=subsets,
            raw_bound=raw,
            upper=upper,
            vacuous=raw >= 1.0,
            norm_mode=norm_mode,
            split_count=pieces,
            timings={"total_s": time.perf_counter() - started},
            provenance=prov,
        )

    if m == 0 or head >= 1.0:
        return finish((), 1.0)

    psis = decompose(inst, expansion)
    coeffs = expansion.term_coefficients()

    def one(args) -> SubsetCertificate:
        idx, psi = args
        t0 = time.perf_counter()
        coef = float(coeffs[psi.subset])
        weight = psi.total_weight
        case = _density_case(inst.prob, n, pred.arity, len(psi.subset))
        if weight == 0:
            return SubsetCertificate(
                psi.subset, coef, 0, 0, "empty", 0.0, case, (), time.perf_counter() - t0
            )
        if len(psi.subset) == 1:
            gamma = min(1.0, n * psi.max_abs / m)
            return SubsetCertificate(
                psi.subset,
                coef,
                weight,
                psi.max_abs,
                "degree-bound",
                gamma,
                case,
                (),
                time.perf_counter() - t0,
            )
        if psi.max_abs <= 1:
            subs = [as_xor_instance(psi)]
            method = "refute-direct"
        else:
            subs = split_unweighted(psi, pieces, np.random.SeedSequence(seed, spawn_key=(idx,)))
            method = "split-refute"
        stats = []
        worst = 0.0
        for sub in subs:
            if sub.clause_count == 0:
                continue
            try:
                rep = refute(sub, level=level, delta=delta, cap=cap, config=cfg)
                stats.append((sub.clause_count, rep.upper, rep.norm_mode))
                worst = max(worst, _deviation(rep.upper))
            except ResourceLimitError:
                # sound degradation: an unavailable sub-certificate keeps
                # only the trivial deviation, never aborts the report
                stats.append((sub.clause_count, 1.0, "resource-limited"))
                worst = 1.0
        gamma = (weight / m) * worst
        return SubsetCertificate(
            psi.subset,
            coef,
            weight,
            psi.max_abs,
            method,
            gamma,
            case,
            tuple(stats),
            time.perf_counter() - t0,
        )

    with concurrent.futures.ThreadPoolExecutor(max_workers=min(4, max(1, len(psis)))) as pool:
        subsets = tuple(pool.map(one, enumerate(psis)))
    raw = head + sum(abs(cert.coefficient) * cert.gamma for cert in subsets)
    return finish(subsets, raw)
