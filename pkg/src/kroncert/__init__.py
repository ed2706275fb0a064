"""Spectral certificates for tensor norms and refutation of random CSPs.

The package certifies upper bounds on injective norms of order-k tensors
and strongly refutes random k-XOR / Boolean k-CSP instances by bounding
the operator norm of symmetrized Kronecker powers of a flattened tensor,
with a level parameter trading runtime against the clause density needed.
"""
from __future__ import annotations

from .csp import (
    BUILTIN_PREDICATES,
    CspInstance,
    CspReport,
    FourierExpansion,
    Predicate,
    SubsetCertificate,
    TwiseMargin,
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
from .errors import ParseError, ResourceLimitError
from .operators import (
    CertificateOperator,
    OddCorrection,
    build_even_tensor_certificate,
    build_even_xor_certificate,
    build_odd_tensor_certificate,
    build_odd_xor_certificate,
    tensor_certificate,
)
from .oracle import (
    BRUTE_FORCE_MAX_VARS,
    AuditCheck,
    AuditVerdict,
    OracleResult,
    audit_report,
    brute_force_opt,
    injective_norm_lower,
)
from .serialize import (
    detect_format,
    dump_csp,
    dump_report,
    dump_tensor,
    dump_xor,
    dump_xor_text,
    load_any,
    load_csp,
    load_report,
    load_tensor,
    load_xor,
    load_xor_text,
    parse_predicate,
    write_atomic,
)
from .spectral import (
    NormResult,
    SpectralConfig,
    certified_norm,
    default_trace_exponent,
    dense_norm,
    power_estimate,
    trace_moment_bound,
)
from .tensor import (
    FlatMatrix,
    MultisetBasis,
    Tensor,
    asymmetrize,
    flatten_even,
    gaussian_symmetric_tensor,
    multiset_basis,
    slice_matrix,
)
from .xorsat import (
    InstanceStats,
    LevelCertificate,
    RefutationReport,
    XorInstance,
    build_pair_instance,
    convert_pair_bound,
    default_cap,
    default_level,
    evaluate,
    instance_stats,
    instance_tensor,
    low_mult_count_lower,
    refute,
    refute_even,
    refute_odd,
    sample_instance,
)

__version__ = "0.1.0"
