"""Command-line surface: instance generation, refutation, oracles, audits,
and density sweeps.

Exit codes: 0 success, 1 vacuous certificate (or failed audit), 2 usage or
input error, 3 resource-budget refusal.  One master ``--seed`` drives every
randomized component; sweep cells derive per-cell seeds from it by index,
and the seed column in the CSV lets any cell be re-run standalone.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import os
import sys
import time
import concurrent.futures

import numpy as np

from . import __version__
from .csp import CspInstance, refute_csp, sample_csp
from .errors import ParseError, ResourceLimitError
from .operators import (
    build_even_tensor_certificate,
    build_odd_tensor_certificate,
    tensor_certificate,
)
from .oracle import audit_report, brute_force_opt
from .serialize import (
    detect_format,
    dump_csp,
    dump_report,
    dump_tensor,
    dump_xor,
    dump_xor_text,
    load_any,
    load_report,
    parse_predicate,
    write_atomic,
)
from .spectral import SpectralConfig, certified_norm
from .tensor import Tensor, gaussian_symmetric_tensor
from .xorsat import XorInstance, refute, sample_instance

EXIT_OK = 0
EXIT_VACUOUS = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3

SWEEP_FIELDS = ("n", "k", "p", "d", "seed", "bound", "opt", "time_ms", "mode")


def _spectral_config(args) -> SpectralConfig:
    mode = getattr(args, "mode", None) or "auto"
    return SpectralConfig(
        mode=mode,
        trace_exponent=getattr(args, "trace_l", None),
        seed=getattr(args, "seed", 0) or 0,
    )


def _cli_provenance(args, command: str) -> dict[str, object]:
    echo = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in ("command", "func") and value is not None
    }
    return {"cli": {"command": command, **echo}, "version": __version__}


def _resolve_prob(args) -> float:
    if (args.p is None) == (getattr(args, "m", None) is None):
        raise ParseError("exactly one of --p and --m is required")
    if args.p is not None:
        return args.p
    total = args.n**args.k
    return min(1.0, args.m / total)


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path) as handle:
        return handle.read()


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen(args) -> int:
    if args.format == "text" and args.type != "xor":
        raise ParseError("--format text is only available for xor instances")
    if args.type == "xor":
        inst = sample_instance(args.n, args.k, _resolve_prob(args), args.seed)
        text = dump_xor_text(inst) if args.format == "text" else dump_xor(inst)
    elif args.type == "csp":
        if not args.pred:
            raise ParseError("--pred is required for csp generation")
        pred = parse_predicate(args.pred, args.k)
        text = dump_csp(sample_csp(pred, args.n, _resolve_prob(args), args.seed))
    else:
        text = dump_tensor(gaussian_symmetric_tensor(args.n, args.k, args.seed))
    _emit(args, text)
    return EXIT_OK


def _load_typed(args, wanted, sample):
    if args.infile and args.n is None:
        inst = load_any(_read_input(args.infile))
        if not isinstance(inst, wanted):
            raise ParseError(f"input is a {type(inst).__name__}, expected {wanted.__name__}")
        return inst
    if args.infile or args.n is None:
        raise ParseError("provide either --in or the sampling flags --n/--k/--p")
    return sample()


def _cmd_refute_xor(args) -> int:
    inst = _load_typed(
        args,
        XorInstance,
        lambda: sample_instance(args.n, args.k, _resolve_prob(args), args.seed),
    )
    report = refute(
        inst,
        level=args.d,
        delta=args.delta,
        cap=args.cap_R,
        config=_spectral_config(args),
        provenance=_cli_provenance(args, "refute-xor"),
    )
    print(f"certified opt(Φ) ≤ {report.upper:.12g} [{report.norm_mode}]")
    if args.out:
        write_atomic(args.out, dump_report(report))
    return EXIT_VACUOUS if report.vacuous else EXIT_OK


def _cmd_refute_csp(args) -> int:
    def sample():
        if not args.pred:
            raise ParseError("--pred is required when sampling a csp instance")
        pred = parse_predicate(args.pred, args.k)
        return sample_csp(pred, args.n, _resolve_prob(args), args.seed)

    inst = _load_typed(args, CspInstance, sample)
    report = refute_csp(
        inst,
        level=args.d,
        delta=args.delta,
        cap=args.cap_R,
        config=_spectral_config(args),
        margin_degree=args.margin_degree,
        seed=args.seed,
        split_count=args.split_count,
        provenance=_cli_provenance(args, "refute-csp"),
    )
    print(f"certified opt(Φ) ≤ {report.upper:.12g} [{report.norm_mode}]")
    if args.out:
        write_atomic(args.out, dump_report(report))
    return EXIT_VACUOUS if report.vacuous else EXIT_OK


def _cmd_tensor_norm(args) -> int:
    if args.gaussian == (args.infile is not None):
        raise ParseError("provide exactly one of --in and --gaussian")
    if args.gaussian:
        if args.n is None or args.k is None:
            raise ParseError("--gaussian needs --n and --k")
        tensor = gaussian_symmetric_tensor(args.n, args.k, args.seed)
    else:
        tensor = load_any(_read_input(args.infile))
        if not isinstance(tensor, Tensor):
            raise ParseError(f"input is a {type(tensor).__name__}, expected a tensor")
        if not tensor.symmetric:
            raise ParseError("tensor-norm certification needs a symmetric tensor")
    level = args.d or 1
    config = _spectral_config(args)
    if tensor.order % 2 == 0:
        op = build_even_tensor_certificate(tensor, level)
    else:
        op = build_odd_tensor_certificate(tensor, level)
    result = certified_norm(op, config)
    bound = tensor_certificate(result.value, level, op.correction)
    print(f"certified ||T||_inj ≤ {bound:.12g} [{result.mode}]")
    if args.out:
        record = {
            "kind": "tensor-norm",
            "order": tensor.order,
            "dim": tensor.dim,
            "level": level,
            "operator_norm": result.value,
            "norm_mode": result.mode,
            "upper": bound,
            "provenance": _cli_provenance(args, "tensor-norm"),
            "schema_version": "1",
        }
        import json

        write_atomic(args.out, json.dumps(record, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    inst = load_any(_read_input(args.infile))
    if not isinstance(inst, (XorInstance, CspInstance)):
        raise ParseError(f"input is a {type(inst).__name__}, expected an instance")
    result = brute_force_opt(inst, workers=args.workers)
    print(
        f"opt(Φ) = {result.best:.12g} (min {result.worst:.12g}) "
        f"over {result.states_visited} assignments"
    )
    if args.out:
        import json

        record = dataclasses.asdict(result)
        write_atomic(args.out, json.dumps(record, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def _cmd_audit(args) -> int:
    report = load_report(_read_input(args.report))
    inst = None
    if args.infile:
        inst = load_any(_read_input(args.infile))
        if not isinstance(inst, (XorInstance, CspInstance)):
            raise ParseError(f"input is a {type(inst).__name__}, expected an instance")
    verdict = audit_report(
        report, inst, brute_force=not args.no_brute_force, workers=args.workers
    )
    for check in verdict.checks:
        print(f"[{'PASS' if check.passed else 'FAIL'}] {check.name}: {check.detail}")
    print(f"audit {'PASS' if verdict.passed else 'FAIL'}")
    return EXIT_OK if verdict.passed else EXIT_VACUOUS


# ---------------------------------------------------------------------------
# sweep


def _parse_grid(text: str, cast) -> list:
    try:
        values = [cast(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ParseError(f"malformed grid {text!r}") from exc
    if not values:
        raise ParseError(f"empty grid {text!r}")
    return values


def _sweep_cell(cell) -> dict:
    (n, k, p, d, seed, delta, cap, mode, trace_l, with_opt) = cell
    config = SpectralConfig(mode=mode, trace_exponent=trace_l, seed=seed)
    started = time.perf_counter()
    inst = sample_instance(n, k, p, seed)
    report = refute(inst, level=d, delta=delta, cap=cap, config=config)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    opt = ""
    if with_opt:
        opt = repr(brute_force_opt(inst).best)
    return {
        "n": n,
        "k": k,
        "p": repr(p),
        "d": report.level,
        "seed": seed,
        "bound": repr(report.upper),
        "opt": opt,
        "time_ms": f"{elapsed_ms:.3f}",
        "mode": report.norm_mode,
    }


def _density_prob(multiplier: float, n: int, k: int, delta: float) -> float:
    # clause density m/n = multiplier * n^{(k/2-1)(1-delta)}, so
    # p = expected m / n^k with m = n * density
    density = multiplier * n ** ((k / 2.0 - 1.0) * (1.0 - delta))
    return min(1.0, density / n ** (k - 1))


def _cmd_sweep(args) -> int:
    if (args.p_grid is None) == (args.density_grid is None):
        raise ParseError("exactly one of --p-grid and --density-grid is required")
    ns = _parse_grid(args.n_grid, int)
    ds = _parse_grid(args.d_grid, int)
    if args.p_grid is not None:
        ps = _parse_grid(args.p_grid, float)
        cells_np = [(n, p) for n in sorted(ns) for p in sorted(ps)]
    else:
        mults = _parse_grid(args.density_grid, float)
        cells_np = [
            (n, _density_prob(mult, n, args.k, args.delta))
            for n in sorted(ns)
            for mult in sorted(mults)
        ]
    coords = [
        (n, p, d, s)
        for (n, p) in cells_np
        for d in sorted(ds)
        for s in range(args.seeds)
    ]
    cells = []
    for index, (n, p, d, s) in enumerate(coords):
        seed = int(np.random.SeedSequence(args.seed, spawn_key=(index,)).generate_state(1)[0])
        cells.append(
            (n, args.k, p, d, seed, args.delta, args.cap_R, args.mode or "auto",
             args.trace_l, args.with_opt)
        )
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(cell) for cell in cells]
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=SWEEP_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    write_atomic(args.out, buffer.getvalue())
    print(f"wrote {len(rows)} cells to {args.out}")
    if not args.no_plot:
        png = os.path.splitext(args.out)[0] + ".png"
        _render_sweep_plot(rows, png)
        print(f"wrote plot to {png}")
    return EXIT_OK


def _render_sweep_plot(rows, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series: dict[tuple[int, int], dict[float, list[float]]] = {}
    for row in rows:
        key = (int(row["n"]), int(row["d"]))
        series.setdefault(key, {}).setdefault(float(row["p"]), []).append(
            float(row["bound"])
        )
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (n, d), points in sorted(series.items()):
        xs = sorted(points)
        ys = [sum(points[x]) / len(points[x]) for x in xs]
        ax.plot(xs, ys, marker="o", label=f"n={n}, d={d}")
    ax.set_xlabel("clause probability p")
    ax.set_ylabel("certified bound (mean over seeds)")
    ax.set_ylim(0.0, 1.05)
    ax.axhline(1.0, color="gray", linewidth=0.8, linestyle="--")
    ax.legend(fontsize=8)
    fig.tight_layout()
    tmp = path + ".part"
    fig.savefig(tmp, dpi=120, format="png")
    os.replace(tmp, path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# parser


def _add_common_refute_flags(sub) -> None:
    sub.add_argument("--in", dest="infile", help="instance file ('-' for stdin)")
    sub.add_argument("--n", type=int, help="variable count (sampling)")
    sub.add_argument("--k", type=int, help="arity (sampling)")
    sub.add_argument("--p", type=float, help="clause probability (sampling)")
    sub.add_argument("--m", type=int, help="expected clause count, alternative to --p")
    sub.add_argument("--d", type=int, help="certificate level (default: density heuristic)")
    sub.add_argument("--delta", type=float, default=0.25, help="cutoff fraction")
    sub.add_argument("--cap-R", dest="cap_R", type=int, help="multiplicity cap")
    sub.add_argument("--trace-l", dest="trace_l", type=int, help="trace bound exponent")
    sub.add_argument("--seed", type=int, default=0, help="master seed")
    sub.add_argument("--mode", choices=("exact", "trace", "heuristic"), help="norm path")
    sub.add_argument("--out", help="report output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kroncert",
        description="Spectral certificates for tensor norms and random CSP refutation.",
    )
    parser.add_argument("--version", action="version", version=f"kroncert {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen", help="sample and write an instance or tensor")
    gen.add_argument("--type", choices=("xor", "csp", "tensor"), required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--k", type=int, required=True)
    gen.add_argument("--p", type=float)
    gen.add_argument("--m", type=int)
    gen.add_argument("--pred", help="csp predicate: builtin name or 2^k bitstring")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--format", choices=("jsonl", "text"), default="jsonl")
    gen.add_argument("--out", help="output path (default stdout)")
    gen.set_defaults(func=_cmd_gen)

    rx = subs.add_parser("refute-xor", help="certify a bound for a k-XOR instance")
    _add_common_refute_flags(rx)
    rx.set_defaults(func=_cmd_refute_xor)

    rc = subs.add_parser("refute-csp", help="certify a bound for a predicate CSP")
    _add_common_refute_flags(rc)
    rc.add_argument("--pred", help="predicate for sampling: builtin name or bitstring")
    rc.add_argument("--margin-degree", dest="margin_degree", type=int,
                    help="use the t-wise margin basis at this degree")
    rc.add_argument("--split-count", dest="split_count", type=int,
                    help="pieces for weighted subsets (default ceil(ln^2 n))")
    rc.set_defaults(func=_cmd_refute_csp)

    tn = subs.add_parser("tensor-norm", help="certify an injective-norm upper bound")
    tn.add_argument("--in", dest="infile", help="tensor file")
    tn.add_argument("--gaussian", action="store_true", help="sample a Gaussian tensor")
    tn.add_argument("--n", type=int, help="dimension (with --gaussian)")
    tn.add_argument("--k", type=int, help="order (with --gaussian)")
    tn.add_argument("--d", type=int, help="certificate level (default 1)")
    tn.add_argument("--trace-l", dest="trace_l", type=int)
    tn.add_argument("--seed", type=int, default=0)
    tn.add_argument("--mode", choices=("exact", "trace", "heuristic"))
    tn.add_argument("--out", help="JSON output path")
    tn.set_defaults(func=_cmd_tensor_norm)

    orc = subs.add_parser("oracle", help="exhaustive optimum of an instance")
    orc.add_argument("--in", dest="infile", required=True)
    orc.add_argument("--workers", type=int, default=1)
    orc.add_argument("--out", help="JSON output path")
    orc.set_defaults(func=_cmd_oracle)

    aud = subs.add_parser("audit", help="recheck a report, optionally against its instance")
    aud.add_argument("--report", required=True)
    aud.add_argument("--in", dest="infile", help="instance file for cross-checks")
    aud.add_argument("--no-brute-force", dest="no_brute_force", action="store_true")
    aud.add_argument("--workers", type=int, default=1)
    aud.set_defaults(func=_cmd_audit)

    sw = subs.add_parser("sweep", help="grid of refutations written as CSV (+ plot)")
    sw.add_argument("--k", type=int, required=True)
    sw.add_argument("--n-grid", dest="n_grid", required=True, help="e.g. 8,10,12")
    sw.add_argument("--p-grid", dest="p_grid", help="explicit probabilities")
    sw.add_argument("--density-grid", dest="density_grid",
                    help="multipliers of n^{(k/2-1)(1-delta)} clause density")
    sw.add_argument("--d-grid", dest="d_grid", default="1", help="levels, e.g. 1,2")
    sw.add_argument("--seeds", type=int, default=3, help="seeds per cell")
    sw.add_argument("--delta", type=float, default=0.25)
    sw.add_argument("--cap-R", dest="cap_R", type=int)
    sw.add_argument("--trace-l", dest="trace_l", type=int)
    sw.add_argument("--seed", type=int, default=0, help="master seed")
    sw.add_argument("--mode", choices=("exact", "trace", "heuristic"))
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--with-opt", dest="with_opt", action="store_true",
                    help="add brute-force optima (n <= 24)")
    sw.add_argument("--no-plot", dest="no_plot", action="store_true")
    sw.add_argument("--out", default="sweep.csv")
    sw.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ParseError, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
