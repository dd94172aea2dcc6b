"""Command-line driver.

    permax analyze file.arr [file2.arr ...]
        [--rd N/D] [--inv-range LO HI] [--emit-json PATH]
        [--emit-smt DIR] [--filter-budget N]
    permax bench CORPUS_DIR [--warmup N] [--runs N]

`analyze` prints each method with its inferred `requires` / `ensures`
permission clauses and reports per-loop soundness-check results in the
optional JSON report.  Exit status: 0 on success, 1 on any error, 2 when
some loop fails its soundness check (unsatisfiable precondition).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .expr import (
    BoolExpr, Frac, PermExpr, Rd, node_count, show_bool, show_perm,
)
from .frontend import (
    Method, Program, SourceError, parse_file, show_method,
)
from .infer import (
    AnalysisConfig, InferenceError, MethodSpec, flag_unsatisfiable,
    infer_method,
)
from .maxelim import MaxElimError
from .oracle import BudgetExceeded, bounded_validity
from .simplify import simplify_perm
from .smt import emit_smtlib


def _substitute_rd(p: PermExpr, value: Fraction) -> PermExpr:
    from .expr import _rebuild, IntConst, Var, ArrayVar, Length, BoolConst

    def go(e):
        if isinstance(e, Rd):
            return Frac(value)
        if isinstance(e, (IntConst, Var, ArrayVar, Length, BoolConst, Frac)):
            return e
        return _rebuild(e, go)

    return simplify_perm(go(p))


@dataclass
class LoopResult:
    span: str
    invariant_used: str
    exhale_free: bool
    mode: str          # exhale-free | bounded-pass | bounded-counterexample | exported
    detail: str


@dataclass
class MethodResult:
    spec: MethodSpec
    loops: list[LoopResult]
    timing_ms: float


def _check_method(method: Method, config: AnalysisConfig,
                  smt_dir: Optional[str]) -> MethodResult:
    t0 = time.perf_counter()
    spec = infer_method(method, config)
    loops: list[LoopResult] = []
    lo, hi = config.check_range
    failed = False
    for i, lr in enumerate(spec.loops):
        if lr.exhale_free:
            loops.append(LoopResult(str(lr.span), show_bool(lr.invariant_used),
                                    True, "exhale-free", ""))
            continue
        cond = lr.condition
        assert cond is not None
        from .expr import free_vars, QA, QI
        names = free_vars(cond)
        arrays = sorted(n for n in names if _is_array_name(method, n))
        ints = sorted(n for n in names - set(arrays) if n != QA)
        smt_path = ""
        if smt_dir:
            os.makedirs(smt_dir, exist_ok=True)
            smt_path = os.path.join(smt_dir, f"{method.name}_loop{i}.smt2")
            with open(smt_path, "w", encoding="utf-8") as fh:
                fh.write(emit_smtlib(cond, comment=f"{method.name} loop at {lr.span}"))
        try:
            cex = bounded_validity(cond, ints, arrays, lo, hi,
                                   budget=config.validity_budget)
        except BudgetExceeded as be:
            mode = "exported" if smt_path else "exported"
            detail = f"{be}; obligation {'written to ' + smt_path if smt_path else 'available via --emit-smt'}"
            loops.append(LoopResult(str(lr.span), show_bool(lr.invariant_used),
                                    False, mode, detail))
            continue
        if cex is None:
            loops.append(LoopResult(str(lr.span), show_bool(lr.invariant_used),
                                    False, "bounded-pass",
                                    f"no counterexample in [{lo}, {hi}]"))
        else:
            failed = True
            loops.append(LoopResult(str(lr.span), show_bool(lr.invariant_used),
                                    False, "bounded-counterexample", cex.describe()))
    if failed:
        spec = flag_unsatisfiable(spec)
    dt = (time.perf_counter() - t0) * 1000.0
    return MethodResult(spec, loops, dt)


def _is_array_name(method: Method, name: str) -> bool:
    return any(p.name == name and p.is_array for p in method.params)


def analyze_file(path: str, config: AnalysisConfig,
                 rd_value: Optional[Fraction] = None,
                 smt_dir: Optional[str] = None) -> tuple[str, list[MethodResult]]:
    program = parse_file(path)
    results = []
    chunks = []
    for method in program.methods:
        res = _check_method(method, config, smt_dir)
        results.append(res)
        pre = res.spec.precondition
        post = res.spec.postcondition
        if rd_value is not None:
            pre = _substitute_rd(pre, rd_value)
            post = _substitute_rd(post, rd_value)
        spec_lines = (f"requires {show_perm(pre)}", f"ensures {show_perm(post)}")
        chunks.append(show_method(method, spec_lines))
    return "\n".join(chunks) + "\n", results


def report_document(file: str, results: list[MethodResult]) -> dict:
    return {
        "file": file,
        "methods": [
            {
                "name": r.spec.name,
                "pre": show_perm(r.spec.precondition),
                "post": show_perm(r.spec.postcondition),
                "unsatisfiable": r.spec.unsatisfiable,
                "loops": [
                    {
                        "span": l.span,
                        "invariantUsed": l.invariant_used,
                        "exhaleFree": l.exhale_free,
                        "soundness": {"mode": l.mode, "detail": l.detail},
                    }
                    for l in r.loops
                ],
                "timings_ms": r.timing_ms,
            }
            for r in results
        ],
    }


def _cmd_analyze(args: argparse.Namespace) -> int:
    config = AnalysisConfig(
        filter_budget=args.filter_budget,
        check_range=(args.inv_range[0], args.inv_range[1]),
    )
    rd_value = Fraction(args.rd) if args.rd else None
    status = 0
    documents = []
    # files are independent; analyze them on a bounded worker pool and
    # assemble output in input order
    from concurrent.futures import ThreadPoolExecutor
    workers = min(4, max(1, len(args.files)))
    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(
                lambda p: analyze_file(p, config, rd_value, args.emit_smt),
                args.files))
    except (SourceError, InferenceError, MaxElimError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for path, (text, results) in zip(args.files, outcomes):
        sys.stdout.write(text)
        documents.append(report_document(path, results))
        if any(r.spec.unsatisfiable for r in results):
            status = max(status, 2)
    if args.emit_json:
        payload = documents[0] if len(documents) == 1 else documents
        with open(args.emit_json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return status


def _cmd_bench(args: argparse.Namespace) -> int:
    config = AnalysisConfig()
    paths = sorted(
        os.path.join(args.corpus, f)
        for f in os.listdir(args.corpus) if f.endswith(".arr")
    )
    if not paths:
        print("error: no .arr files found", file=sys.stderr)
        return 1
    rows = []
    for path in paths:
        try:
            program = parse_file(path)
            for _ in range(args.warmup):
                for m in program.methods:
                    infer_method(m, config)
            times = []
            size = 0
            for _ in range(args.runs):
                t0 = time.perf_counter()
                specs = [infer_method(m, config) for m in program.methods]
                times.append((time.perf_counter() - t0) * 1000.0)
                size = sum(node_count(s.precondition) + node_count(s.postcondition)
                           for s in specs)
            rows.append((os.path.basename(path), sum(times) / len(times), size))
        except (SourceError, InferenceError, MaxElimError) as e:
            print(f"error: {path}: {e}", file=sys.stderr)
            return 1
    width = max(len(r[0]) for r in rows)
    print(f"{'program':<{width}}  {'time_ms':>8}  {'nodes':>6}")
    for name, ms, size in rows:
        print(f"{name:<{width}}  {ms:8.2f}  {size:6d}")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="permax",
        description="Permission precondition inference for array programs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analyze", help="infer and print method specifications")
    p_an.add_argument("files", nargs="+", help=".arr source files")
    p_an.add_argument("--rd", default=None,
                      help="concretize the read amount to this rational, e.g. 1/100")
    p_an.add_argument("--inv-range", nargs=2, type=int, default=[-4, 8],
                      metavar=("LO", "HI"),
                      help="window for the bounded soundness check")
    p_an.add_argument("--emit-json", default=None, metavar="PATH",
                      help="write a JSON report")
    p_an.add_argument("--emit-smt", default=None, metavar="DIR",
                      help="write SMT-LIB obligations for non-exhale-free loops")
    p_an.add_argument("--filter-budget", type=int, default=64,
                      help="node budget for boundary filter conditions")
    p_an.set_defaults(func=_cmd_analyze)

    p_bm = sub.add_parser("bench", help="time inference over a corpus directory")
    p_bm.add_argument("corpus", help="directory of .arr files")
    p_bm.add_argument("--warmup", type=int, default=5)
    p_bm.add_argument("--runs", type=int, default=10)
    p_bm.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
