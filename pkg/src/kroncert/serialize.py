"""Text and JSON formats for tensors, instances, and reports.

Variable indices are 1-based in every file format and 0-based in memory;
the conversion happens here and nowhere else.  Dumps are canonical
(sorted keys, fixed separators, repr floats) so equal objects serialize
to equal bytes and a dump/load/dump cycle is the identity.
"""
from __future__ import annotations

import dataclasses
import json
import os
import tempfile
from typing import Iterator

import numpy as np

from .csp import CspInstance, CspReport, Predicate, SubsetCertificate, predicate_by_name
from .errors import ParseError
from .tensor import Tensor
from .xorsat import SCHEMA_VERSION, LevelCertificate, RefutationReport, XorInstance

__all__ = [
    "dump_tensor",
    "load_tensor",
    "dump_xor",
    "load_xor",
    "dump_xor_text",
    "load_xor_text",
    "dump_csp",
    "load_csp",
    "dump_report",
    "load_report",
    "detect_format",
    "load_any",
    "write_atomic",
]


def _canonical(record: object) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    raise TypeError(f"{type(value).__name__} is not serializable")


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# tensor text


def dump_tensor(tensor: Tensor) -> str:
    lines = [f"tensor {tensor.order} {tensor.dim}"]
    for key in sorted(tensor.entries):
        idx = " ".join(str(i + 1) for i in key)
        lines.append(f"{idx} {tensor.entries[key]!r}")
    return "\n".join(lines) + "\n"


def load_tensor(text: str) -> Tensor:
    """Parse the tensor text format; symmetric/sorted-support flags are
    re-detected from the entries so round trips preserve them."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("tensor "):
        raise ParseError("tensor file must start with a 'tensor k n' header")
    parts = lines[0].split()
    if len(parts) != 3:
        raise ParseError(f"malformed tensor header {lines[0]!r}")
    try:
        order, dim = int(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ParseError(f"malformed tensor header {lines[0]!r}") from exc
    entries: dict[tuple[int, ...], float] = {}
    for ln in lines[1:]:
        tokens = ln.split()
        if len(tokens) != order + 1:
            raise ParseError(f"tensor line {ln!r} needs {order} indices and a value")
        try:
            key = tuple(int(t) - 1 for t in tokens[:order])
            value = float(tokens[order])
        except ValueError as exc:
            raise ParseError(f"malformed tensor line {ln!r}") from exc
        if any(i < 0 for i in key):
            raise ParseError(f"tensor line {ln!r} has a non-positive index")
        if key in entries:
            raise ParseError(f"duplicate tensor entry {ln!r}")
        entries[key] = value
    for flags in ({"symmetric": True}, {"lexfirst": True}, {}):
        try:
            return Tensor(order, dim, entries, **flags)
        except ValueError:
            continue
    raise ParseError("tensor entries out of range for the declared shape")


# ---------------------------------------------------------------------------
# XOR instances


def dump_xor(inst: XorInstance) -> str:
    header = {
        "type": "xor",
        "k": inst.arity,
        "n": inst.num_vars,
        "p": inst.prob,
        "seed": inst.seed,
    }
    lines = [_canonical(header)]
    for key, sign in inst.clauses:
        lines.append(_canonical({"vars": [v + 1 for v in key], "sign": sign}))
    return "\n".join(lines) + "\n"


def _json_lines(text: str, what: str) -> Iterator[dict]:
    for ln in text.splitlines():
        if not ln.strip():
            continue
        try:
            record = json.loads(ln)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed {what} line {ln!r}") from exc
        if not isinstance(record, dict):
            raise ParseError(f"{what} line {ln!r} is not an object")
        yield record


def _clause_vars(record: dict, arity: int, what: str) -> tuple[int, ...]:
    variables = record.get("vars")
    if not isinstance(variables, list) or len(variables) != arity:
        raise ParseError(f"{what} clause {record!r} needs {arity} variables")
    if any(not isinstance(v, int) or v < 1 for v in variables):
        raise ParseError(f"{what} clause {record!r} has non-positive variables")
    return tuple(v - 1 for v in variables)


def load_xor(text: str) -> XorInstance:
    records = _json_lines(text, "xor")
    try:
        header = next(records)
    except StopIteration:
        raise ParseError("empty xor file") from None
    if header.get("type") != "xor":
        raise ParseError(f"expected an xor header, got {header!r}")
    try:
        arity, num_vars = int(header["k"]), int(header["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"xor header {header!r} needs integer k and n") from exc
    clauses = []
    for record in records:
        key = _clause_vars(record, arity, "xor")
        sign = record.get("sign")
        if sign not in (-1, 1):
            raise ParseError(f"xor clause {record!r} needs sign ±1")
        clauses.append((key, sign))
    try:
        return XorInstance(
            num_vars, arity, tuple(clauses), prob=header.get("p"), seed=header.get("seed")
        )
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def dump_xor_text(inst: XorInstance) -> str:
    lines = []
    for key, sign in inst.clauses:
        idx = " ".join(str(v + 1) for v in key)
        lines.append(f"x {idx} {sign}")
    return "\n".join(lines) + ("\n" if lines else "")


def load_xor_text(text: str, num_vars: int | None = None) -> XorInstance:
    """Parse `x v1 ... vk s` lines; the variable count defaults to the
    largest index seen (the format carries no header)."""
    clauses = []
    arity = None
    for ln in text.splitlines():
        tokens = ln.split()
        if not tokens:
            continue
        if tokens[0] != "x" or len(tokens) < 3:
            raise ParseError(f"malformed xor text line {ln!r}")
        if arity is None:
            arity = len(tokens) - 2
        elif len(tokens) - 2 != arity:
            raise ParseError(f"xor text line {ln!r} changes arity")
        try:
            key = tuple(int(t) - 1 for t in tokens[1:-1])
            sign = int(tokens[-1])
        except ValueError as exc:
            raise ParseError(f"malformed xor text line {ln!r}") from exc
        if any(v < 0 for v in key) or sign not in (-1, 1):
            raise ParseError(f"malformed xor text line {ln!r}")
        clauses.append((key, sign))
    if arity is None:
        raise ParseError("xor text file has no clauses; use the JSON format for headers")
    if num_vars is None:
        num_vars = 1 + max(v for key, _ in clauses for v in key)
    try:
        return XorInstance(num_vars, arity, tuple(clauses))
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


# ---------------------------------------------------------------------------
# CSP instances


def dump_csp(inst: CspInstance) -> str:
    header = {
        "type": "csp",
        "k": inst.predicate.arity,
        "n": inst.num_vars,
        "pred": inst.predicate.bitstring(),
        "p": inst.prob,
        "seed": inst.seed,
    }
    lines = [_canonical(header)]
    for key, pattern in inst.clauses:
        lines.append(_canonical({"vars": [v + 1 for v in key], "neg": list(pattern)}))
    return "\n".join(lines) + "\n"


def parse_predicate(field: str, arity: int) -> Predicate:
    """Accept a 2^k bitstring or a builtin name."""
    if set(field) <= {"0", "1"} and field:
        if len(field) != 2**arity:
            raise ParseError(f"predicate bitstring {field!r} does not have 2^{arity} bits")
        return Predicate(arity, tuple(int(b) for b in field))
    try:
        return predicate_by_name(field, arity)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def load_csp(text: str) -> CspInstance:
    records = _json_lines(text, "csp")
    try:
        header = next(records)
    except StopIteration:
        raise ParseError("empty csp file") from None
    if header.get("type") != "csp":
        raise ParseError(f"expected a csp header, got {header!r}")
    try:
        arity, num_vars = int(header["k"]), int(header["n"])
        pred = parse_predicate(str(header["pred"]), arity)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"csp header {header!r} needs k, n, and pred") from exc
    clauses = []
    for record in records:
        key = _clause_vars(record, arity, "csp")
        pattern = record.get("neg")
        if (
            not isinstance(pattern, list)
            or len(pattern) != arity
            or any(s not in (-1, 1) for s in pattern)
        ):
            raise ParseError(f"csp clause {record!r} needs a ±1 pattern of length {arity}")
        clauses.append((key, tuple(pattern)))
    try:
        return CspInstance(
            num_vars, pred, tuple(clauses), prob=header.get("p"), seed=header.get("seed")
        )
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


# ---------------------------------------------------------------------------
# reports


def dump_report(report: RefutationReport | CspReport) -> str:
    record = dataclasses.asdict(report)
    return json.dumps(record, sort_keys=True, indent=2, default=_json_default) + "\n"


def _tuples(rows, factory):
    out = []
    for row in rows:
        row = dict(row)
        for field, value in row.items():
            if isinstance(value, list):
                row[field] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        out.append(factory(**row))
    return tuple(out)


def load_report(text: str) -> RefutationReport | CspReport:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("report is not valid JSON") from exc
    if not isinstance(record, dict) or "kind" not in record:
        raise ParseError("report JSON must be an object with a 'kind' field")
    version = record.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported report schema version {version!r}")
    kind = record["kind"]
    try:
        if kind in ("xor-even", "xor-odd"):
            record["levels"] = _tuples(record["levels"], LevelCertificate)
            return RefutationReport(**record)
        if kind == "csp":
            record["subsets"] = _tuples(record["subsets"], SubsetCertificate)
            return CspReport(**record)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed {kind} report: {exc}") from exc
    raise ParseError(f"unknown report kind {kind!r}")


# ---------------------------------------------------------------------------
# dispatch


def detect_format(text: str) -> str:
    stripped = text.lstrip()
    if not stripped:
        raise ParseError("empty input")
    if stripped.startswith("tensor "):
        return "tensor"
    if stripped.startswith("x "):
        return "xor-text"
    if stripped.startswith("{"):
        first = stripped.splitlines()[0]
        try:
            record = json.loads(first)
        except json.JSONDecodeError:
            # single indented JSON document
            record = json.loads(stripped) if _is_json(stripped) else None
        if isinstance(record, dict):
            if record.get("type") == "xor":
                return "xor"
            if record.get("type") == "csp":
                return "csp"
            if "kind" in record:
                return "report"
    raise ParseError("unrecognized input format")


def _is_json(text: str) -> bool:
    try:
        json.loads(text)
        return True
    except json.JSONDecodeError:
        return False


def load_any(text: str):
    loader = {
        "tensor": load_tensor,
        "xor": load_xor,
        "xor-text": load_xor_text,
        "csp": load_csp,
        "report": load_report,
    }[detect_format(text)]
    return loader(text)
