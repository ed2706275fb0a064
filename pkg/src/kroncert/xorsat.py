"""Random k-XOR instances and certified refutation bounds.

An instance is a list of ordered variable tuples with ±1 signs.  The
refuters certify, for all assignments x in {±1}^n, two-sided bounds on
the satisfied fraction: they assemble per-level certificate norms into

    B = [ 2^{-d} sum_{j<=t} C(d,j)
          + sum_{j>t} 2^{-d} C(d,j) n^{e(j)} ||C_(j)|| / count_j ]^{1/d}
        + slack,

with t = floor(delta*d), e(j) the per-level row-symbol count, count_j a
certified lower bound on the number of cap-obeying clause j-tuples, and
slack covering multiplicity-restricted terms.  Even arity uses the
flattened clause tensor directly; odd arity goes through the paired
instance on shared last variables and converts back with a square root.
All assembly arithmetic routes through small pure helpers so a stored
report can be re-derived from its own per-level data.
"""
from __future__ import annotations

import bisect
import concurrent.futures
import dataclasses
import math
import time
from collections import Counter
from fractions import Fraction
from typing import Mapping

import numpy as np

from .errors import ResourceLimitError
from .operators import build_even_xor_certificate, build_odd_xor_certificate
from .spectral import SpectralConfig, certified_norm
from .tensor import Tensor

__all__ = [
    "SCHEMA_VERSION",
    "XorInstance",
    "InstanceStats",
    "LevelCertificate",
    "RefutationReport",
    "default_cap",
    "default_level",
    "sample_instance",
    "instance_tensor",
    "evaluate",
    "instance_stats",
    "build_pair_instance",
    "low_mult_count_lower",
    "cutoff_index",
    "head_term",
    "level_term",
    "epsilon_slack",
    "assemble_bound",
    "convert_pair_bound",
    "refute",
    "refute_even",
    "refute_odd",
]

SCHEMA_VERSION = "1"

# ordered tuples scanned by the sampler, per Bernoulli block
_SAMPLE_BLOCK = 1 << 18
_MAX_SAMPLE_SPACE = 100_000_000


@dataclasses.dataclass(frozen=True)
class XorInstance:
    """k-XOR instance: ordered variable tuples with ±1 parity signs.

    Variables are 0-based.  ``prob``/``seed`` record sampling provenance
    when the instance was generated and stay None for loaded instances.
    """

    num_vars: int
    arity: int
    clauses: tuple[tuple[tuple[int, ...], int], ...]
    prob: float | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "clauses",
            tuple((tuple(int(v) for v in key), int(sign)) for key, sign in self.clauses),
        )
        if self.num_vars < 1:
            raise ValueError(f"num_vars must be >= 1, got {self.num_vars}")
        if self.arity < 1:
            raise ValueError(f"arity must be >= 1, got {self.arity}")
        for key, sign in self.clauses:
            if len(key) != self.arity:
                raise ValueError(f"clause {key!r} does not have arity {self.arity}")
            if any(not 0 <= v < self.num_vars for v in key):
                raise ValueError(f"clause {key!r} out of range for {self.num_vars} variables")
            if sign not in (-1, 1):
                raise ValueError(f"clause sign must be ±1, got {sign!r}")

    @property
    def clause_count(self) -> int:
        return len(self.clauses)


@dataclasses.dataclass(frozen=True)
class InstanceStats:
    """Clause-list summaries feeding the sequential counting bound.

    ``max_var_degree`` counts distinct clauses containing a variable.
    ``side_max_mult`` holds, sorted ascending, each clause's own maximum
    variable multiplicity within a masked side, so the number of clauses
    individually compatible with a cap is a bisect away.  For paired
    instances the sides follow the slice-pair row/column split and
    ``slots_per_clause`` charges the shared center variable as well.
    """

    clause_count: int
    max_var_degree: int
    arity: int
    slots_per_clause: int
    side_slots: int
    side_max_mult: tuple[int, ...]
    paired: bool = False

    def __post_init__(self) -> None:
        if self.max_var_degree > self.clause_count:
            raise ValueError("max_var_degree cannot exceed clause_count")
        if len(self.side_max_mult) != self.clause_count:
            raise ValueError("side_max_mult must list every clause")

    def compliant_count(self, cap: int | None) -> int:
        """Number of clauses whose own side multisets obey the cap."""
        if cap is None:
            return self.clause_count
        return bisect.bisect_right(self.side_max_mult, cap)


@dataclasses.dataclass(frozen=True)
class LevelCertificate:
    """One level of the assembly: certified norm, count bound, term value."""

    level: int
    norm: float
    mode: str
    count_lower: float
    term: float | None
    elapsed_s: float


@dataclasses.dataclass(frozen=True)
class RefutationReport:
    """Self-auditing record of a refutation run.

    Every number that enters the final bound is stored per level, so the
    assembly can be recomputed from the report alone.  For odd arity the
    head/levels/raw fields describe the paired-instance chain and
    ``pair_bound`` is converted into ``upper`` via the square-root step.
    """

    kind: str
    num_vars: int
    arity: int
    clause_count: int
    level: int
    delta: float
    cutoff: int
    entropy: float
    cap: int
    epsilon: float
    max_var_degree: int
    excluded_fraction: float
    head_term: float
    levels: tuple[LevelCertificate, ...]
    raw_bound: float | None
    upper: float
    lower: float
    vacuous: bool
    norm_mode: str
    pair_clause_count: int | None
    pair_degree_max: int | None
    pair_bound: float | None
    timings: Mapping[str, float]
    provenance: Mapping[str, object]
    soundness: Mapping[str, object] | None = None
    schema_version: str = SCHEMA_VERSION


def default_cap(num_vars: int) -> int:
    """Default multiplicity cap: ceil(100 ln n), at least 1."""
    return max(1, math.ceil(100.0 * math.log(max(num_vars, 2))))


def default_level(num_vars: int, arity: int, clause_count: int) -> int:
    """Density-driven level choice sqrt(n)·(m/n)^(-2/(k-2)), clamped to [1, 4]."""
    if arity <= 2 or clause_count == 0:
        return 1
    ratio = clause_count / num_vars
    if ratio <= 1.0:
        return 4
    raw = math.sqrt(num_vars) * ratio ** (-2.0 / (arity - 2))
    return max(1, min(4, round(raw)))


def sample_instance(num_vars: int, arity: int, prob: float, seed: int) -> XorInstance:
    """Keep each ordered tuple independently with probability prob, uniform sign.

    Deterministic given the seed; tuples are visited in flat index order
    in fixed-size blocks, drawing the keep mask and then the kept signs.
    """
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {prob}")
    if num_vars < 1 or arity < 1:
        raise ValueError("num_vars and arity must be >= 1")
    total = num_vars**arity
    if total > _MAX_SAMPLE_SPACE:
        raise ResourceLimitError(
            f"sampling over {total} ordered tuples exceeds the {_MAX_SAMPLE_SPACE} budget"
        )
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    shape = (num_vars,) * arity
    clauses: list[tuple[tuple[int, ...], int]] = []
    for start in range(0, total, _SAMPLE_BLOCK):
        stop = min(start + _SAMPLE_BLOCK, total)
        kept = np.nonzero(rng.random(stop - start) < prob)[0]
        if kept.size == 0:
            continue
        signs = rng.integers(0, 2, kept.size) * 2 - 1
        coords = np.unravel_index(kept + start, shape)
        for i in range(kept.size):
            key = tuple(int(coords[pos][i]) for pos in range(arity))
            clauses.append((key, int(signs[i])))
    return XorInstance(num_vars, arity, tuple(clauses), prob=prob, seed=seed)


def instance_tensor(inst: XorInstance) -> Tensor:
    """Sign tensor with <T, x^{ox k}> = #sat(x) - #unsat(x); duplicates sum."""
    acc: dict[tuple[int, ...], float] = {}
    for key, sign in inst.clauses:
        acc[key] = acc.get(key, 0.0) + sign
    entries = {k: v for k, v in acc.items() if v != 0.0}
    return Tensor(inst.arity, inst.num_vars, entries)


def evaluate(inst: XorInstance, assignment) -> float:
    """Fraction of clauses with prod_i x_i = sign; empty instances count as 1."""
    x = np.asarray(assignment)
    if x.shape != (inst.num_vars,):
        raise ValueError(f"assignment must have length {inst.num_vars}, got shape {x.shape}")
    if not np.all(np.abs(x) == 1):
        raise ValueError("assignment entries must be ±1")
    if not inst.clauses:
        return 1.0
    keys = np.array([key for key, _ in inst.clauses], dtype=np.intp)
    signs = np.array([sign for _, sign in inst.clauses])
    prods = np.prod(x[keys], axis=1)
    return float(np.count_nonzero(prods == signs)) / inst.clause_count


def _degree_max(clauses) -> int:
    degree: Counter = Counter()
    for key, _ in clauses:
        for v in set(key):
            degree[v] += 1
    return max(degree.values(), default=0)


def _side_profile(keys, sides) -> tuple[int, ...]:
    profile = []
    for key in keys:
        worst = 1 if key else 0
        for side in sides:
            counts = Counter(key[p] for p in side)
            worst = max(worst, max(counts.values(), default=0))
        profile.append(worst)
    return tuple(sorted(profile))


def instance_stats(inst: XorInstance) -> InstanceStats:
    """Recompute clause-list statistics; sides are the flattening halves."""
    k = inst.arity
    half = k // 2
    if k % 2 == 0:
        sides = (tuple(range(half)), tuple(range(half, k)))
        side_slots = half
    else:
        # odd direct instances are never masked per se; track the whole tuple
        sides = (tuple(range(k)),)
        side_slots = k
    keys = [key for key, _ in inst.clauses]
    return InstanceStats(
        clause_count=inst.clause_count,
        max_var_degree=_degree_max(inst.clauses),
        arity=k,
        slots_per_clause=k,
        side_slots=side_slots,
        side_max_mult=_side_profile(keys, sides),
    )


def build_pair_instance(inst: XorInstance) -> tuple[XorInstance, InstanceStats]:
    """Pair distinct clauses sharing the last variable into a 2(k-1)-XOR instance.

    Each ordered pair contributes the concatenated first k-1 variables with
    the product sign.  Stats use the slice-pair row/column split (first half
    of each parent clause on the row side) and charge 2k-1 slots per pair
    for the shared center.
    """
    k = inst.arity
    if k % 2 == 0:
        raise ValueError(f"pairing requires odd arity, got {k}")
    if k < 3:
        raise ValueError(f"pairing requires arity >= 3, got {k}")
    kappa = (k - 1) // 2
    by_center: dict[int, list[int]] = {}
    for idx, (key, _) in enumerate(inst.clauses):
        by_center.setdefault(key[-1], []).append(idx)
    paired: list[tuple[tuple[int, ...], int]] = []
    for center in sorted(by_center):
        members = by_center[center]
        for a in members:
            for b in members:
                if a == b:
                    continue
                ka, sa = inst.clauses[a]
                kb, sb = inst.clauses[b]
                paired.append((ka[:-1] + kb[:-1], sa * sb))
    psi = XorInstance(inst.num_vars, 2 * (k - 1), tuple(paired))
    row = tuple(range(kappa)) + tuple(range(2 * kappa, 3 * kappa))
    col = tuple(range(kappa, 2 * kappa)) + tuple(range(3 * kappa, 4 * kappa))
    stats = InstanceStats(
        clause_count=psi.clause_count,
        max_var_degree=_degree_max(psi.clauses),
        arity=psi.arity,
        slots_per_clause=2 * k - 1,
        side_slots=k - 1,
        side_max_mult=_side_profile([key for key, _ in psi.clauses], (row, col)),
        paired=True,
    )
    return psi, stats


def low_mult_count_lower(stats: InstanceStats, j: int, cap: int | None) -> Fraction:
    """Certified lower bound on the number of cap-obeying ordered clause j-tuples.

    When j tuples cannot overflow any side (j·side_slots <= cap) the count
    is exactly m0^j with m0 the individually compliant clauses; otherwise
    the sequential bound prod_t max(0, m0 - t·slots·m_max/cap) applies.
    """
    if j < 1:
        raise ValueError(f"tuple length must be >= 1, got {j}")
    m0 = stats.compliant_count(cap)
    if m0 == 0:
        return Fraction(0)
    if cap is None or j * stats.side_slots <= cap:
        return Fraction(m0**j)
    per_step = Fraction(stats.slots_per_clause * stats.max_var_degree, cap)
    out = Fraction(1)
    for t in range(j):
        factor = max(Fraction(0), Fraction(m0) - t * per_step)
        if factor == 0:
            return Fraction(0)
        out *= factor
    return out


def cutoff_index(level: int, delta: float) -> int:
    """t = floor(delta*level), computed on the exact binary value of delta."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return int(Fraction(delta) * level)


def binary_entropy(delta: float) -> float:
    return float(-delta * math.log2(delta) - (1.0 - delta) * math.log2(1.0 - delta))


def head_term(level: int, cutoff: int) -> float:
    """2^{-d} sum_{j<=t} C(d, j), evaluated exactly then rounded once."""
    total = sum(math.comb(level, j) for j in range(0, cutoff + 1))
    return float(Fraction(total, 2**level))


def level_term(
    level: int, j: int, num_vars: int, block_symbols: int, norm: float, count_lower: float
) -> float | None:
    """2^{-d} C(d,j) n^{j·block_symbols} ||C_(j)|| / count_j; None when count is 0."""
    if count_lower <= 0.0:
        return None
    coeff = Fraction(math.comb(level, j), 2**level) * Fraction(num_vars) ** (j * block_symbols)
    return float(coeff) * norm / count_lower


def epsilon_slack(
    level: int, slots: int, max_degree: int, clause_count: int, num_vars: int
) -> float:
    """Multiplicity-restriction slack d·slots·m_max / (200·m·ln n)."""
    if clause_count == 0:
        return 0.0
    return level * slots * max_degree / (200.0 * clause_count * math.log(max(num_vars, 2)))


def assemble_bound(
    head: float, terms, level: int, slack: float
) -> float | None:
    """(head + sum terms)^{1/d} + slack; None if any term is missing."""
    total = head
    for term in terms:
        if term is None:
            return None
        total += term
    return total ** (1.0 / level) + slack


def convert_pair_bound(
    num_vars: int, clause_count: int, pair_count: int, pair_bound: float
) -> float:
    """Back-conversion 1/2 + sqrt(max(0, n·m + 2n·m'·(B_psi - 1/2))) / (2m)."""
    inner = num_vars * clause_count + 2.0 * num_vars * pair_count * (pair_bound - 0.5)
    return 0.5 + math.sqrt(max(0.0, inner)) / (2.0 * clause_count)


def _certified_mode(levels) -> str:
    modes = {entry.mode for entry in levels}
    if "heuristic-estimate" in modes:
        return "heuristic-estimate"
    if "certified-trace" in modes:
        return "certified-trace"
    return "certified-exact"


def _vacuous_report(
    kind, inst, level, delta, cap, stats, pair, provenance, started, excluded=0.0
) -> RefutationReport:
    pair_m, pair_deg = pair if pair else (None, None)
    return RefutationReport(
        kind=kind,
        num_vars=inst.num_vars,
        arity=inst.arity,
        clause_count=inst.clause_count,
        level=level,
        delta=delta,
        cutoff=cutoff_index(level, delta),
        entropy=binary_entropy(delta),
        cap=cap,
        epsilon=0.0,
        max_var_degree=stats.max_var_degree,
        excluded_fraction=excluded,
        head_term=head_term(level, cutoff_index(level, delta)),
        levels=(),
        raw_bound=None,
        upper=1.0,
        lower=0.0,
        vacuous=True,
        norm_mode="certified-exact",
        pair_clause_count=pair_m,
        pair_degree_max=pair_deg,
        pair_bound=None,
        timings={"total_s": time.perf_counter() - started},
        provenance=provenance,
    )


def _level_entries(builder, inst, levels, cap, stats, config) -> tuple[LevelCertificate, ...]:
    def one(j: int) -> LevelCertificate:
        t0 = time.perf_counter()
        op = builder(inst, j, cap)
        res = certified_norm(op, config)
        count = low_mult_count_lower(stats, j, cap)
        term = level_term(max(levels), j, inst.num_vars, op.block_symbols, res.value, float(count))
        return LevelCertificate(
            level=j,
            norm=res.value,
            mode=res.mode,
            count_lower=float(count),
            term=term,
            elapsed_s=time.perf_counter() - t0,
        )

    # levels are independent; norms run concurrently, results kept in order
    with concurrent.futures.ThreadPoolExecutor(max_workers=min(4, len(levels))) as pool:
        return tuple(pool.map(one, levels))


def _base_provenance(inst: XorInstance, extra: Mapping[str, object] | None = None) -> dict:
    out: dict[str, object] = {"log_base": "natural"}
    if inst.prob is not None:
        out["p"] = inst.prob
    if inst.seed is not None:
        out["seed"] = inst.seed
    if extra:
        out.update(extra)
    return out


def refute_even(
    inst: XorInstance,
    level: int,
    delta: float = 0.25,
    cap: int | None = None,
    config: SpectralConfig | None = None,
    provenance: Mapping[str, object] | None = None,
) -> RefutationReport:
    """Certified two-sided bound on the satisfied fraction for even arity.

    Slack adds the excluded-clause fraction when individual clauses violate
    the cap (impossible at the default cap); the lower bound comes from the
    sign-flipped instance, whose certificate data is identical.
    """
    if inst.arity % 2 != 0:
        raise ValueError(f"refute_even requires even arity, got {inst.arity}")
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    started = time.perf_counter()
    cap = default_cap(inst.num_vars) if cap is None else cap
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    cfg = config or SpectralConfig()
    t = cutoff_index(level, delta)
    stats = instance_stats(inst)
    prov = _base_provenance(inst, provenance)
    if inst.clause_count == 0:
        return _vacuous_report("xor-even", inst, level, delta, cap, stats, None, prov, started)
    m = inst.clause_count
    m0 = stats.compliant_count(cap)
    if m0 == 0:
        return _vacuous_report(
            "xor-even", inst, level, delta, cap, stats, None, prov, started, excluded=1.0
        )
    eps = epsilon_slack(level, inst.arity, stats.max_var_degree, m0, inst.num_vars)
    excluded = (m - m0) / m
    entries = _level_entries(
        build_even_xor_certificate, inst, range(t + 1, level + 1), cap, stats, cfg
    )
    raw = assemble_bound(head_term(level, t), (e.term for e in entries), level, eps + excluded)
    upper = 1.0 if raw is None else min(1.0, raw)
    return RefutationReport(
        kind="xor-even",
        num_vars=inst.num_vars,
        arity=inst.arity,
        clause_count=m,
        level=level,
        delta=delta,
        cutoff=t,
        entropy=binary_entropy(delta),
        cap=cap,
        epsilon=eps,
        max_var_degree=stats.max_var_degree,
        excluded_fraction=excluded,
        head_term=head_term(level, t),
        levels=entries,
        raw_bound=raw,
        upper=upper,
        lower=max(0.0, 1.0 - upper),
        vacuous=raw is None or raw >= 1.0,
        norm_mode=_certified_mode(entries),
        pair_clause_count=None,
        pair_degree_max=None,
        pair_bound=None,
        timings={
            "total_s": time.perf_counter() - started,
            "norms_s": sum(e.elapsed_s for e in entries),
        },
        provenance=prov,
    )


def refute_odd(
    inst: XorInstance,
    level: int,
    delta: float = 0.25,
    cap: int | None = None,
    config: SpectralConfig | None = None,
    provenance: Mapping[str, object] | None = None,
) -> RefutationReport:
    """Certified two-sided bound for odd arity via the paired instance.

    The level chain bounds the paired satisfied fraction; with no pairs the
    conversion collapses to 1/2 + sqrt(n/m)/2, which is vacuous at m <= n.
    Lower bound again via sign flip: pair signs are flip-invariant.
    """
    if inst.arity % 2 != 1:
        raise ValueError(f"refute_odd requires odd arity, got {inst.arity}")
    if inst.arity < 3:
        raise ValueError(f"refute_odd requires arity >= 3, got {inst.arity}")
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    started = time.perf_counter()
    cap = default_cap(inst.num_vars) if cap is None else cap
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    cfg = config or SpectralConfig()
    t = cutoff_index(level, delta)
    prov = _base_provenance(inst, provenance)
    psi, pstats = build_pair_instance(inst)
    if inst.clause_count == 0:
        return _vacuous_report("xor-odd", inst, level, delta, cap, pstats,
                               (0, 0), prov, started)
    m, n = inst.clause_count, inst.num_vars
    mp = pstats.clause_count
    mp0 = pstats.compliant_count(cap)
    entries: tuple[LevelCertificate, ...] = ()
    pair_bound = None
    raw = None
    eps = 0.0
    excluded = 0.0
    if mp > 0 and mp0 > 0:
        eps = epsilon_slack(level, 2 * inst.arity - 1, pstats.max_var_degree, mp0, n)
        excluded = (mp - mp0) / mp
        entries = _level_entries(
            build_odd_xor_certificate, inst, range(t + 1, level + 1), cap, pstats, cfg
        )
        raw = assemble_bound(head_term(level, t), (e.term for e in entries), level, eps + excluded)
        pair_bound = 1.0 if raw is None else min(1.0, raw)
    elif mp > 0:
        pair_bound = 1.0  # every pair violates the cap individually
        excluded = 1.0
    upper_raw = convert_pair_bound(n, m, mp, pair_bound if mp > 0 else 0.0)
    upper = min(1.0, upper_raw)
    return RefutationReport(
        kind="xor-odd",
        num_vars=n,
        arity=inst.arity,
        clause_count=m,
        level=level,
        delta=delta,
        cutoff=t,
        entropy=binary_entropy(delta),
        cap=cap,
        epsilon=eps,
        max_var_degree=_degree_max(inst.clauses),
        excluded_fraction=excluded,
        head_term=head_term(level, t),
        levels=entries,
        raw_bound=raw,
        upper=upper,
        lower=max(0.0, 1.0 - upper),
        vacuous=upper_raw >= 1.0,
        norm_mode=_certified_mode(entries),
        pair_clause_count=mp,
        pair_degree_max=pstats.max_var_degree,
        pair_bound=pair_bound,
        timings={
            "total_s": time.perf_counter() - started,
            "norms_s": sum(e.elapsed_s for e in entries),
        },
        provenance=prov,
    )


def refute(
    inst: XorInstance,
    level: int | None = None,
    delta: float = 0.25,
    cap: int | None = None,
    config: SpectralConfig | None = None,
    provenance: Mapping[str, object] | None = None,
) -> RefutationReport:
    """Dispatch on arity parity; a density heuristic picks the level if unset."""
    extra: dict[str, object] = dict(provenance or {})
    if level is None:
        level = default_level(inst.num_vars, inst.arity, inst.clause_count)
        extra["level_rule"] = "clamp(round(sqrt(n)*(m/n)^(-2/(k-2))), 1, 4)"
        extra["level_chosen"] = level
    if inst.arity % 2 == 0:
        return refute_even(inst, level, delta, cap, config, provenance=extra)
    return refute_odd(inst, level, delta, cap, config, provenance=extra)
