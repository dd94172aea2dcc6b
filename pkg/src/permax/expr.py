"""Core expression algebra: integer, boolean, and permission expressions.

The three expression families are immutable trees.  Permission expressions
evaluate to exact `PermValue` pairs (c, k) denoting c + k*rd, where rd is a
symbolic read amount that is positive but smaller than any positive rational.
All arithmetic is exact; no floating point anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Optional, Union

QA = "qa"  # distinguished array parameter of permission expressions
QI = "qi"  # distinguished index parameter


def node(cls):
    """@dataclass(frozen=True) with the recursive hash computed once, at
    construction.

    Expression trees are hashed constantly (memo tables, dedup sets); the
    dataclass-generated hash walks the whole tree every call, which turns
    hot paths quadratic.  Precomputing keeps it O(1) per node because the
    children's hashes are already cached.
    """
    cls = dataclass(frozen=True)(cls)
    generated = cls.__hash__
    original_init = cls.__init__

    def __init__(self, *args, **kwargs):
        original_init(self, *args, **kwargs)
        object.__setattr__(self, "_h", generated(self))

    def cached_hash(self):
        return self._h

    cls.__init__ = __init__
    cls.__hash__ = cached_hash
    return cls


class ExprError(Exception):
    """Malformed expression (construction-time violation)."""


class EvalStuck(Exception):
    """Evaluation hit a stuck configuration (e.g. out-of-bounds lookup)."""


class UnboundedEval(Exception):
    """Direct evaluation reached a pointwise maximum; use the bounded oracle."""


# ---------------------------------------------------------------------------
# Integer expressions
# ---------------------------------------------------------------------------

@node
class IntExpr:
    pass


@node
class IntConst(IntExpr):
    value: int


@node
class Var(IntExpr):
    name: str


@node
class ArrayVar(IntExpr):
    """Reference to an array variable; evaluates to its array identifier.

    Only meaningful inside =/!= comparisons and as the array operand of
    Lookup/Length; the type checker enforces this for surface programs.
    """
    name: str


@node
class Mul(IntExpr):
    coeff: int
    arg: IntExpr

    def __post_init__(self) -> None:
        if not isinstance(self.coeff, int):
            raise ExprError("Mul coefficient must be an integer constant")


@node
class Add(IntExpr):
    left: IntExpr
    right: IntExpr


@node
class Sub(IntExpr):
    left: IntExpr
    right: IntExpr


@node
class Lookup(IntExpr):
    array: str
    index: IntExpr


@node
class Length(IntExpr):
    array: str


@node
class IntIte(IntExpr):
    cond: "BoolExpr"
    then: IntExpr
    other: IntExpr


@node
class FloorDiv(IntExpr):
    """Floor division by a positive constant; frontend-only, rewritten away
    before inference."""
    arg: IntExpr
    divisor: int

    def __post_init__(self) -> None:
        if self.divisor <= 0:
            raise ExprError("FloorDiv divisor must be positive")


# ---------------------------------------------------------------------------
# Boolean expressions
# ---------------------------------------------------------------------------

CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")

_CMP_NEG = {"==": "!=", "!=": "==", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}
_CMP_SWAP = {"==": "==", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}


@node
class BoolExpr:
    pass


@node
class BoolConst(BoolExpr):
    value: bool


TRUE = BoolConst(True)
FALSE = BoolConst(False)


@node
class Cmp(BoolExpr):
    left: IntExpr
    op: str
    right: IntExpr

    def __post_init__(self) -> None:
        if self.op not in CMP_OPS:
            raise ExprError(f"bad comparison operator {self.op!r}")


@node
class Divides(BoolExpr):
    divisor: int
    arg: IntExpr

    def __post_init__(self) -> None:
        if self.divisor < 1:
            raise ExprError("divisibility modulus must be >= 1")


@node
class NotDivides(BoolExpr):
    divisor: int
    arg: IntExpr

    def __post_init__(self) -> None:
        if self.divisor < 1:
            raise ExprError("divisibility modulus must be >= 1")


@node
class And(BoolExpr):
    left: BoolExpr
    right: BoolExpr


@node
class Or(BoolExpr):
    left: BoolExpr
    right: BoolExpr


@node
class Not(BoolExpr):
    arg: BoolExpr


@node
class PermAtLeast(BoolExpr):
    """Pointwise permission inequality left >= right.

    Appears only in loop soundness conditions; qa and qi are left free to
    encode the pointwise (per-location) claim.
    """
    left: "PermExpr"
    right: "PermExpr"


# ---------------------------------------------------------------------------
# Permission expressions and values
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class PermValue:
    """Exact permission amount c + k*rd with lexicographic order.

    rd is positive but below every positive rational, so (c1,k1) < (c2,k2)
    iff c1 < c2, or c1 = c2 and k1 < k2.  Dataclass field order gives exactly
    this comparison.
    """
    const: Fraction
    rd_units: int = 0

    def __add__(self, other: "PermValue") -> "PermValue":
        return PermValue(self.const + other.const, self.rd_units + other.rd_units)

    def __sub__(self, other: "PermValue") -> "PermValue":
        return PermValue(self.const - other.const, self.rd_units - other.rd_units)

    def __neg__(self) -> "PermValue":
        return PermValue(-self.const, -self.rd_units)

    def is_zero(self) -> bool:
        return self.const == 0 and self.rd_units == 0


PV_ZERO = PermValue(Fraction(0), 0)
PV_ONE = PermValue(Fraction(1), 0)
PV_RD = PermValue(Fraction(0), 1)


def pv_max(a: PermValue, b: PermValue) -> PermValue:
    return a if a >= b else b


def pv_min(a: PermValue, b: PermValue) -> PermValue:
    return a if a <= b else b


@node
class PermExpr:
    pass


@node
class Frac(PermExpr):
    value: Fraction

    def __post_init__(self) -> None:
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))
        if self.value < 0:
            raise ExprError("permission constants must be non-negative")


@node
class Rd(PermExpr):
    pass


@node
class PAdd(PermExpr):
    left: PermExpr
    right: PermExpr


@node
class PSub(PermExpr):
    left: PermExpr
    right: PermExpr


@node
class PMin(PermExpr):
    left: PermExpr
    right: PermExpr


@node
class PMax(PermExpr):
    left: PermExpr
    right: PermExpr


@node
class PIte(PermExpr):
    cond: BoolExpr
    then: PermExpr
    other: PermExpr


@node
class PointwiseMax(PermExpr):
    """max over all valuations of `vars` satisfying `guard` of `body`.

    The empty range yields 0.  Bound variables shadow outer ones.
    """
    vars: tuple[str, ...]
    guard: BoolExpr
    body: PermExpr

    def __post_init__(self) -> None:
        if len(set(self.vars)) != len(self.vars):
            raise ExprError("pointwise max binders must be distinct")


PZERO = Frac(Fraction(0))
PONE = Frac(Fraction(1))
PRD = Rd()

Expr = Union[IntExpr, BoolExpr, PermExpr]


def perm_at(array: str, index: IntExpr, amount: PermExpr) -> PermExpr:
    """ite(qa = array and qi = index, amount, 0): `amount` permission for
    the single location array[index]."""
    guard = And(Cmp(ArrayVar(QA), "==", ArrayVar(array)), Cmp(Var(QI), "==", index))
    return PIte(guard, amount, PZERO)


def negate_cmp_op(op: str) -> str:
    return _CMP_NEG[op]


def swap_cmp_op(op: str) -> str:
    return _CMP_SWAP[op]


# ---------------------------------------------------------------------------
# Free variables
# ---------------------------------------------------------------------------

def _children(e: Expr) -> Iterator[Expr]:
    if isinstance(e, (IntConst, Var, ArrayVar, Length, BoolConst, Frac, Rd)):
        return
    elif isinstance(e, Mul):
        yield e.arg
    elif isinstance(e, (Add, Sub)):
        yield e.left
        yield e.right
    elif isinstance(e, Lookup):
        yield e.index
    elif isinstance(e, IntIte):
        yield e.cond
        yield e.then
        yield e.other
    elif isinstance(e, FloorDiv):
        yield e.arg
    elif isinstance(e, Cmp):
        yield e.left
        yield e.right
    elif isinstance(e, (Divides, NotDivides)):
        yield e.arg
    elif isinstance(e, (And, Or)):
        yield e.left
        yield e.right
    elif isinstance(e, Not):
        yield e.arg
    elif isinstance(e, PermAtLeast):
        yield e.left
        yield e.right
    elif isinstance(e, (PAdd, PSub, PMin, PMax)):
        yield e.left
        yield e.right
    elif isinstance(e, PIte):
        yield e.cond
        yield e.then
        yield e.other
    elif isinstance(e, PointwiseMax):
        yield e.guard
        yield e.body
    else:  # pragma: no cover
        raise ExprError(f"unknown expression node {type(e).__name__}")


def free_vars(e: Expr) -> frozenset[str]:
    """All free names: integer variables plus array variable names."""
    out: set[str] = set()
    _free_vars(e, out)
    return frozenset(out)


def _free_vars(e: Expr, out: set[str]) -> None:
    if isinstance(e, Var):
        out.add(e.name)
    elif isinstance(e, ArrayVar):
        out.add(e.name)
    elif isinstance(e, Lookup):
        out.add(e.array)
        _free_vars(e.index, out)
    elif isinstance(e, Length):
        out.add(e.array)
    elif isinstance(e, PointwiseMax):
        inner: set[str] = set()
        _free_vars(e.guard, inner)
        _free_vars(e.body, inner)
        out |= inner - set(e.vars)
    else:
        for c in _children(e):
            _free_vars(c, out)


def contains_lookup(e: Expr) -> bool:
    if isinstance(e, Lookup):
        return True
    return any(contains_lookup(c) for c in _children(e))


def contains_pointwise_max(e: Expr) -> bool:
    if isinstance(e, PointwiseMax):
        return True
    return any(contains_pointwise_max(c) for c in _children(e))


def node_count(e: Expr) -> int:
    return 1 + sum(node_count(c) for c in _children(e))


def fresh_name(base: str, used: set[str]) -> str:
    if base not in used:
        used.add(base)
        return base
    i = 0
    while f"{base}{i}" in used:
        i += 1
    name = f"{base}{i}"
    used.add(name)
    return name


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------

def substitute_var(target: Expr, name: str, replacement: IntExpr) -> Expr:
    """Capture-avoiding substitution of an integer variable."""
    return _subst(target, name, replacement)


def _subst(e: Expr, name: str, r: IntExpr) -> Expr:
    if isinstance(e, Var):
        return r if e.name == name else e
    if isinstance(e, (IntConst, ArrayVar, Length, BoolConst, Frac, Rd)):
        return e
    if isinstance(e, PointwiseMax):
        if name in e.vars:
            return e
        clash = set(e.vars) & free_vars(r)
        guard, body, binders = e.guard, e.body, list(e.vars)
        if clash:
            used = set(free_vars(guard)) | set(free_vars(body)) | set(free_vars(r)) | set(binders)
            for i, v in enumerate(binders):
                if v in clash:
                    nv = fresh_name(v + "_", used)
                    guard = _subst(guard, v, Var(nv))
                    body = _subst(body, v, Var(nv))
                    binders[i] = nv
        return PointwiseMax(tuple(binders),
                            _subst(guard, name, r),
                            _subst(body, name, r))
    return _rebuild(e, lambda c: _subst(c, name, r))


def substitute_array_var(target: Expr, old: str, new: str) -> Expr:
    """Replace array variable `old` with `new` in ArrayVar/Lookup/Length."""
    def go(e: Expr) -> Expr:
        if isinstance(e, ArrayVar):
            return ArrayVar(new) if e.name == old else e
        if isinstance(e, Lookup):
            return Lookup(new if e.array == old else e.array, go(e.index))
        if isinstance(e, Length):
            return Length(new) if e.array == old else e
        if isinstance(e, (IntConst, Var, BoolConst, Frac, Rd)):
            return e
        return _rebuild(e, go)
    return go(target)


def substitute_array_lookups(target: Expr,
                             builder: Callable[[str, IntExpr], IntExpr]) -> Expr:
    """Replace every Lookup a'[e'] by builder(a', e'), innermost first.

    The index is rewritten before the builder sees it, so nested lookups are
    resolved inside-out.
    """
    def go(e: Expr) -> Expr:
        if isinstance(e, Lookup):
            return builder(e.array, go(e.index))
        if isinstance(e, (IntConst, Var, ArrayVar, Length, BoolConst, Frac, Rd)):
            return e
        return _rebuild(e, go)
    return go(target)


def _rebuild(e: Expr, f: Callable[[Expr], Expr]) -> Expr:
    if isinstance(e, Mul):
        return Mul(e.coeff, f(e.arg))
    if isinstance(e, Add):
        return Add(f(e.left), f(e.right))
    if isinstance(e, Sub):
        return Sub(f(e.left), f(e.right))
    if isinstance(e, Lookup):
        return Lookup(e.array, f(e.index))
    if isinstance(e, IntIte):
        return IntIte(f(e.cond), f(e.then), f(e.other))
    if isinstance(e, FloorDiv):
        return FloorDiv(f(e.arg), e.divisor)
    if isinstance(e, Cmp):
        return Cmp(f(e.left), e.op, f(e.right))
    if isinstance(e, Divides):
        return Divides(e.divisor, f(e.arg))
    if isinstance(e, NotDivides):
        return NotDivides(e.divisor, f(e.arg))
    if isinstance(e, And):
        return And(f(e.left), f(e.right))
    if isinstance(e, Or):
        return Or(f(e.left), f(e.right))
    if isinstance(e, Not):
        return Not(f(e.arg))
    if isinstance(e, PermAtLeast):
        return PermAtLeast(f(e.left), f(e.right))
    if isinstance(e, PAdd):
        return PAdd(f(e.left), f(e.right))
    if isinstance(e, PSub):
        return PSub(f(e.left), f(e.right))
    if isinstance(e, PMin):
        return PMin(f(e.left), f(e.right))
    if isinstance(e, PMax):
        return PMax(f(e.left), f(e.right))
    if isinstance(e, PIte):
        return PIte(f(e.cond), f(e.then), f(e.other))
    if isinstance(e, PointwiseMax):
        return PointwiseMax(e.vars, f(e.guard), f(e.body))
    raise ExprError(f"cannot rebuild {type(e).__name__}")  # pragma: no cover


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

class Heap:
    """Array contents and lengths, keyed by array identifier."""

    def __init__(self,
                 lengths: Optional[dict[int, int]] = None,
                 contents: Optional[dict[tuple[int, int], int]] = None):
        self.lengths: dict[int, int] = dict(lengths or {})
        self.contents: dict[tuple[int, int], int] = dict(contents or {})

    def length(self, aid: int) -> int:
        try:
            return self.lengths[aid]
        except KeyError:
            raise EvalStuck(f"unknown array identifier {aid}")

    def load(self, aid: int, idx: int) -> int:
        if not (0 <= idx < self.length(aid)):
            raise EvalStuck(f"index {idx} out of bounds for array {aid}")
        return self.contents.get((aid, idx), 0)

    def store(self, aid: int, idx: int, value: int) -> None:
        if not (0 <= idx < self.length(aid)):
            raise EvalStuck(f"index {idx} out of bounds for array {aid}")
        self.contents[(aid, idx)] = value

    def copy(self) -> "Heap":
        return Heap(self.lengths, self.contents)


Env = dict[str, int]


def eval_int(e: IntExpr, env: Env, heap: Optional[Heap] = None) -> int:
    if isinstance(e, IntConst):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvalStuck(f"unbound variable {e.name}")
    if isinstance(e, ArrayVar):
        try:
            return env[e.name]
        except KeyError:
            raise EvalStuck(f"unbound array variable {e.name}")
    if isinstance(e, Mul):
        return e.coeff * eval_int(e.arg, env, heap)
    if isinstance(e, Add):
        return eval_int(e.left, env, heap) + eval_int(e.right, env, heap)
    if isinstance(e, Sub):
        return eval_int(e.left, env, heap) - eval_int(e.right, env, heap)
    if isinstance(e, Lookup):
        if heap is None:
            raise EvalStuck("array lookup without a heap")
        return heap.load(eval_int(ArrayVar(e.array), env), eval_int(e.index, env, heap))
    if isinstance(e, Length):
        if heap is None:
            raise EvalStuck("length without a heap")
        return heap.length(eval_int(ArrayVar(e.array), env))
    if isinstance(e, IntIte):
        return eval_int(e.then if eval_bool(e.cond, env, heap) else e.other, env, heap)
    if isinstance(e, FloorDiv):
        return eval_int(e.arg, env, heap) // e.divisor
    raise ExprError(f"cannot evaluate {type(e).__name__}")  # pragma: no cover


def eval_bool(b: BoolExpr, env: Env, heap: Optional[Heap] = None) -> bool:
    if isinstance(b, BoolConst):
        return b.value
    if isinstance(b, Cmp):
        lv = eval_int(b.left, env, heap)
        rv = eval_int(b.right, env, heap)
        return {"==": lv == rv, "!=": lv != rv, "<": lv < rv,
                "<=": lv <= rv, ">": lv > rv, ">=": lv >= rv}[b.op]
    if isinstance(b, Divides):
        return eval_int(b.arg, env, heap) % b.divisor == 0
    if isinstance(b, NotDivides):
        return eval_int(b.arg, env, heap) % b.divisor != 0
    if isinstance(b, And):
        return eval_bool(b.left, env, heap) and eval_bool(b.right, env, heap)
    if isinstance(b, Or):
        return eval_bool(b.left, env, heap) or eval_bool(b.right, env, heap)
    if isinstance(b, Not):
        return not eval_bool(b.arg, env, heap)
    if isinstance(b, PermAtLeast):
        return eval_perm(b.left, env, heap) >= eval_perm(b.right, env, heap)
    raise ExprError(f"cannot evaluate {type(b).__name__}")  # pragma: no cover


def eval_perm(p: PermExpr, env: Env, heap: Optional[Heap] = None) -> PermValue:
    if isinstance(p, Frac):
        return PermValue(p.value, 0)
    if isinstance(p, Rd):
        return PV_RD
    if isinstance(p, PAdd):
        return eval_perm(p.left, env, heap) + eval_perm(p.right, env, heap)
    if isinstance(p, PSub):
        return eval_perm(p.left, env, heap) - eval_perm(p.right, env, heap)
    if isinstance(p, PMin):
        return pv_min(eval_perm(p.left, env, heap), eval_perm(p.right, env, heap))
    if isinstance(p, PMax):
        return pv_max(eval_perm(p.left, env, heap), eval_perm(p.right, env, heap))
    if isinstance(p, PIte):
        return eval_perm(p.then if eval_bool(p.cond, env, heap) else p.other, env, heap)
    if isinstance(p, PointwiseMax):
        raise UnboundedEval("pointwise maximum requires the bounded oracle")
    raise ExprError(f"cannot evaluate {type(p).__name__}")  # pragma: no cover


# ---------------------------------------------------------------------------
# Canonical pretty-printing (the concrete syntax the frontend accepts)
# ---------------------------------------------------------------------------

_PREC_ADD = 1
_PREC_MUL = 2
_PREC_ATOM = 3


def show_int(e: IntExpr) -> str:
    return _show_int(e, 0)


def _paren(s: str, need: bool) -> str:
    return f"({s})" if need else s


def _show_int(e: IntExpr, prec: int) -> str:
    if isinstance(e, IntConst):
        return _paren(str(e.value), e.value < 0 and prec > 0)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, ArrayVar):
        return e.name
    if isinstance(e, Mul):
        coeff = _paren(str(e.coeff), e.coeff < 0)
        return _paren(f"{coeff} * {_show_int(e.arg, _PREC_ATOM)}", prec > _PREC_MUL)
    if isinstance(e, Add):
        return _paren(f"{_show_int(e.left, _PREC_ADD)} + {_show_int(e.right, _PREC_MUL)}",
                      prec > _PREC_ADD)
    if isinstance(e, Sub):
        return _paren(f"{_show_int(e.left, _PREC_ADD)} - {_show_int(e.right, _PREC_MUL)}",
                      prec > _PREC_ADD)
    if isinstance(e, Lookup):
        return f"{e.array}[{show_int(e.index)}]"
    if isinstance(e, Length):
        return f"length({e.array})"
    if isinstance(e, IntIte):
        return f"ite({show_bool(e.cond)}, {show_int(e.then)}, {show_int(e.other)})"
    if isinstance(e, FloorDiv):
        return _paren(f"{_show_int(e.arg, _PREC_ATOM)} / {e.divisor}", prec > _PREC_MUL)
    raise ExprError(f"cannot print {type(e).__name__}")  # pragma: no cover


def show_bool(b: BoolExpr) -> str:
    return _show_bool(b, 0)


def _show_bool(b: BoolExpr, prec: int) -> str:
    # precedence: 0 = or, 1 = and, 2 = atom/not
    if isinstance(b, BoolConst):
        return "true" if b.value else "false"
    if isinstance(b, Cmp):
        return f"{show_int(b.left)} {b.op} {show_int(b.right)}"
    if isinstance(b, Divides):
        return f"{_show_int(b.arg, _PREC_ATOM)} % {b.divisor} == 0"
    if isinstance(b, NotDivides):
        return f"{_show_int(b.arg, _PREC_ATOM)} % {b.divisor} != 0"
    if isinstance(b, And):
        return _paren(f"{_show_bool(b.left, 1)} && {_show_bool(b.right, 2)}", prec > 1)
    if isinstance(b, Or):
        return _paren(f"{_show_bool(b.left, 0)} || {_show_bool(b.right, 1)}", prec > 0)
    if isinstance(b, Not):
        return f"!({show_bool(b.arg)})"
    if isinstance(b, PermAtLeast):
        return f"{_show_perm(b.left, 1)} >= {_show_perm(b.right, 1)}"
    raise ExprError(f"cannot print {type(b).__name__}")  # pragma: no cover


def show_perm(p: PermExpr) -> str:
    return _show_perm(p, 0)


def _show_perm(p: PermExpr, prec: int) -> str:
    if isinstance(p, Frac):
        v = p.value
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(p, Rd):
        return "rd"
    if isinstance(p, PAdd):
        return _paren(f"{_show_perm(p.left, 0)} + {_show_perm(p.right, 1)}", prec > 0)
    if isinstance(p, PSub):
        return _paren(f"{_show_perm(p.left, 0)} - {_show_perm(p.right, 1)}", prec > 0)
    if isinstance(p, PMin):
        return f"min({show_perm(p.left)}, {show_perm(p.right)})"
    if isinstance(p, PMax):
        return f"max({show_perm(p.left)}, {show_perm(p.right)})"
    if isinstance(p, PIte):
        return f"ite({show_bool(p.cond)}, {show_perm(p.then)}, {show_perm(p.other)})"
    if isinstance(p, PointwiseMax):
        vs = ", ".join(p.vars)
        return f"max[{vs} | {show_bool(p.guard)}]({show_perm(p.body)})"
    raise ExprError(f"cannot print {type(p).__name__}")  # pragma: no cover


def show(e: Expr) -> str:
    if isinstance(e, IntExpr):
        return show_int(e)
    if isinstance(e, BoolExpr):
        return show_bool(e)
    return show_perm(e)
