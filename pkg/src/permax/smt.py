"""SMT-LIB 2 emission for loop soundness conditions.

The condition is asserted negated, so `unsat` means the condition is valid.
Array identifiers get an uninterpreted sort with a length function;
permission amounts are reals.  The symbolic read amount is encoded as a
positive real constant bounded below every positive rational literal in
the condition, which approximates its role as an infinitesimal.
"""

from __future__ import annotations

from fractions import Fraction

from .expr import (
    Add, And, ArrayVar, BoolConst, BoolExpr, Cmp, Divides, Frac, IntConst,
    IntExpr, IntIte, Length, Lookup, Mul, Not, NotDivides, Or, PAdd, PIte,
    PMax, PMin, PSub, PermAtLeast, PermExpr, PointwiseMax, QA, QI, Rd, Sub,
    Var, free_vars,
)


class SmtError(Exception):
    pass


_CMP_SMT = {"==": "=", "<": "<", "<=": "<=", ">": ">", ">=": ">="}


def _smt_int(e: IntExpr, arrays: set[str]) -> str:
    if isinstance(e, IntConst):
        return str(e.value) if e.value >= 0 else f"(- {-e.value})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, ArrayVar):
        return e.name
    if isinstance(e, Mul):
        return f"(* {_smt_int(IntConst(e.coeff), arrays)} {_smt_int(e.arg, arrays)})"
    if isinstance(e, Add):
        return f"(+ {_smt_int(e.left, arrays)} {_smt_int(e.right, arrays)})"
    if isinstance(e, Sub):
        return f"(- {_smt_int(e.left, arrays)} {_smt_int(e.right, arrays)})"
    if isinstance(e, Length):
        return f"(len {e.array})"
    if isinstance(e, IntIte):
        return (f"(ite {_smt_bool(e.cond, arrays)} "
                f"{_smt_int(e.then, arrays)} {_smt_int(e.other, arrays)})")
    if isinstance(e, Lookup):
        raise SmtError("array lookups have no SMT encoding here")
    raise SmtError(f"cannot encode {type(e).__name__}")


def _smt_frac(q: Fraction) -> str:
    if q.denominator == 1:
        return f"{q.numerator}.0" if q >= 0 else f"(- {-q.numerator}.0)"
    return f"(/ {q.numerator} {q.denominator})"


def _smt_perm(p: PermExpr, arrays: set[str]) -> str:
    if isinstance(p, Frac):
        return _smt_frac(p.value)
    if isinstance(p, Rd):
        return "rd"
    if isinstance(p, PAdd):
        return f"(+ {_smt_perm(p.left, arrays)} {_smt_perm(p.right, arrays)})"
    if isinstance(p, PSub):
        return f"(- {_smt_perm(p.left, arrays)} {_smt_perm(p.right, arrays)})"
    if isinstance(p, PMax):
        a, b = _smt_perm(p.left, arrays), _smt_perm(p.right, arrays)
        return f"(ite (>= {a} {b}) {a} {b})"
    if isinstance(p, PMin):
        a, b = _smt_perm(p.left, arrays), _smt_perm(p.right, arrays)
        return f"(ite (<= {a} {b}) {a} {b})"
    if isinstance(p, PIte):
        return (f"(ite {_smt_bool(p.cond, arrays)} "
                f"{_smt_perm(p.then, arrays)} {_smt_perm(p.other, arrays)})")
    if isinstance(p, PointwiseMax):
        raise SmtError("pointwise maxima must be eliminated before emission")
    raise SmtError(f"cannot encode {type(p).__name__}")


def _smt_bool(b: BoolExpr, arrays: set[str]) -> str:
    if isinstance(b, BoolConst):
        return "true" if b.value else "false"
    if isinstance(b, Cmp):
        if b.op == "!=":
            return f"(distinct {_smt_int(b.left, arrays)} {_smt_int(b.right, arrays)})"
        return (f"({_CMP_SMT[b.op]} {_smt_int(b.left, arrays)} "
                f"{_smt_int(b.right, arrays)})")
    if isinstance(b, Divides):
        return f"(= (mod {_smt_int(b.arg, arrays)} {b.divisor}) 0)"
    if isinstance(b, NotDivides):
        return f"(distinct (mod {_smt_int(b.arg, arrays)} {b.divisor}) 0)"
    if isinstance(b, And):
        return f"(and {_smt_bool(b.left, arrays)} {_smt_bool(b.right, arrays)})"
    if isinstance(b, Or):
        return f"(or {_smt_bool(b.left, arrays)} {_smt_bool(b.right, arrays)})"
    if isinstance(b, Not):
        return f"(not {_smt_bool(b.arg, arrays)})"
    if isinstance(b, PermAtLeast):
        return f"(>= {_smt_perm(b.left, arrays)} {_smt_perm(b.right, arrays)})"
    raise SmtError(f"cannot encode {type(b).__name__}")


def _positive_fracs(b: BoolExpr) -> set[Fraction]:
    out: set[Fraction] = set()

    def scan(e) -> None:
        from .expr import _children
        if isinstance(e, Frac) and e.value > 0:
            out.add(e.value)
        for c in _children(e):
            scan(c)

    scan(b)
    return out


def _int_vars_and_arrays(b: BoolExpr) -> tuple[set[str], set[str]]:
    arrays: set[str] = set()
    ints: set[str] = set()

    def scan(e) -> None:
        from .expr import _children
        if isinstance(e, ArrayVar):
            arrays.add(e.name)
        elif isinstance(e, (Length, Lookup)):
            arrays.add(e.array)
            for c in _children(e):
                scan(c)
        elif isinstance(e, Var):
            ints.add(e.name)
        else:
            for c in _children(e):
                scan(c)

    scan(b)
    return ints, arrays


def emit_smtlib(condition: BoolExpr, comment: str = "") -> str:
    """SMT-LIB 2 script whose `unsat` answer certifies the condition."""
    ints, arrays = _int_vars_and_arrays(condition)
    arrays = arrays | {QA}
    ints.discard(QA)
    lines = []
    if comment:
        lines.append(f"; {comment}")
    lines.append("(set-logic ALL)")
    lines.append("(declare-sort ArrayId 0)")
    for a in sorted(arrays):
        lines.append(f"(declare-const {a} ArrayId)")
    lines.append("(declare-fun len (ArrayId) Int)")
    lines.append("(assert (forall ((v ArrayId)) (>= (len v) 0)))")
    for v in sorted(ints):
        lines.append(f"(declare-const {v} Int)")
    lines.append("(declare-const rd Real)")
    lines.append("(assert (> rd 0.0))")
    for q in sorted(_positive_fracs(condition)):
        lines.append(f"(assert (< rd {_smt_frac(q)}))")
    body = _smt_bool(condition, arrays)
    lines.append(f"(assert (not {body}))")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"
