"""Forward interval analysis supplying over-approximate loop invariants.

Bounds are either integer constants or symbolic offsets from length(a) or
length(a)/n, so invariants like 0 <= j <= length(a)/2 are representable.
Array contents are top.  Widening kicks in after a fixed number of
iterations, followed by a narrowing pass that recovers bounds lost to
widening.  User annotations are conjoined on top of the inferred intervals;
their soundness is the user's obligation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .expr import (
    Add, And, BoolConst, BoolExpr, Cmp, Divides, FALSE, FloorDiv, IntConst,
    IntExpr, IntIte, Length, Lookup, Mul, Not, NotDivides, Or, Sub, TRUE,
    Var,
)
from .frontend import (
    AssignArray, AssignVar, Exhale, If, Inhale, LoadElem, Method, Seq, Skip,
    SourceError, StoreElem, Stmt, VarDecl, While,
)
from .simplify import nnf, simplify_bool

WIDENING_THRESHOLD = 3
NARROWING_PASSES = 2


@dataclass(frozen=True)
class Bound:
    """offset, or length(array)/divisor + offset when array is set."""
    offset: int
    array: Optional[str] = None
    divisor: int = 1

    def shift(self, k: int) -> "Bound":
        return Bound(self.offset + k, self.array, self.divisor)

    def comparable(self, other: "Bound") -> bool:
        return self.array == other.array and self.divisor == other.divisor

    def __le__(self, other: "Bound") -> bool:
        if not self.comparable(other):
            raise TypeError("incomparable bounds")
        return self.offset <= other.offset

    def to_expr(self) -> IntExpr:
        if self.array is None:
            return IntConst(self.offset)
        base: IntExpr = Length(self.array)
        if self.divisor != 1:
            base = FloorDiv(base, self.divisor)
        if self.offset == 0:
            return base
        if self.offset > 0:
            return Add(base, IntConst(self.offset))
        return Sub(base, IntConst(-self.offset))


@dataclass(frozen=True)
class Interval:
    lo: Optional[Bound]  # None = -inf
    hi: Optional[Bound]  # None = +inf

    @staticmethod
    def top() -> "Interval":
        return Interval(None, None)

    @staticmethod
    def const(n: int) -> "Interval":
        b = Bound(n)
        return Interval(b, b)


TOP = Interval.top()


def _bound_le(a: Bound, b: Bound) -> Optional[bool]:
    """a <= b in all states, None when unknown.  Uses length(.) >= 0, so a
    constant is below any length bound with at least its offset, and a
    coarser divisor of the same length is below a finer one."""
    if a.comparable(b):
        return a.offset <= b.offset
    if a.array is None and b.array is not None:
        return True if a.offset <= b.offset else None
    if a.array is not None and b.array is None:
        return None
    if a.array == b.array and a.divisor >= b.divisor:
        return True if a.offset <= b.offset else None
    return None


def _join_lo(a: Optional[Bound], b: Optional[Bound]) -> Optional[Bound]:
    if a is None or b is None:
        return None
    if _bound_le(a, b):
        return a
    if _bound_le(b, a):
        return b
    return None


def _join_hi(a: Optional[Bound], b: Optional[Bound]) -> Optional[Bound]:
    if a is None or b is None:
        return None
    if _bound_le(a, b):
        return b
    if _bound_le(b, a):
        return a
    return None


def join(a: Interval, b: Interval) -> Interval:
    return Interval(_join_lo(a.lo, b.lo), _join_hi(a.hi, b.hi))


def widen(old: Interval, new: Interval) -> Interval:
    lo = old.lo
    if old.lo is not None and (new.lo is None or not new.lo.comparable(old.lo)
                               or new.lo.offset < old.lo.offset):
        lo = None
    hi = old.hi
    if old.hi is not None and (new.hi is None or not new.hi.comparable(old.hi)
                               or new.hi.offset > old.hi.offset):
        hi = None
    return Interval(lo, hi)


def narrow(old: Interval, new: Interval) -> Interval:
    # refine only bounds that widening pushed to infinity
    lo = new.lo if old.lo is None else old.lo
    hi = new.hi if old.hi is None else old.hi
    return Interval(lo, hi)


State = dict[str, Interval]


def _state_join(a: State, b: State) -> State:
    return {v: join(a.get(v, TOP), b.get(v, TOP)) for v in set(a) | set(b)}


def _state_eq(a: State, b: State) -> bool:
    keys = set(a) | set(b)
    return all(a.get(k, TOP) == b.get(k, TOP) for k in keys)


def _eval_expr(e: IntExpr, st: State) -> Interval:
    if isinstance(e, IntConst):
        return Interval.const(e.value)
    if isinstance(e, Var):
        return st.get(e.name, TOP)
    if isinstance(e, Length):
        b = Bound(0, e.array, 1)
        return Interval(b, b)
    if isinstance(e, FloorDiv):
        inner = _eval_expr(e.arg, st)
        out_lo = out_hi = None
        if inner.lo is not None:
            if inner.lo.array is None:
                out_lo = Bound(inner.lo.offset // e.divisor)
            elif inner.lo.divisor == 1 and inner.lo.offset == 0:
                out_lo = Bound(0, inner.lo.array, e.divisor)
        if inner.hi is not None:
            if inner.hi.array is None:
                out_hi = Bound(inner.hi.offset // e.divisor)
            elif inner.hi.divisor == 1 and inner.hi.offset == 0:
                out_hi = Bound(0, inner.hi.array, e.divisor)
        return Interval(out_lo, out_hi)
    if isinstance(e, Add):
        a = _eval_expr(e.left, st)
        b = _eval_expr(e.right, st)
        return _add_intervals(a, b)
    if isinstance(e, Sub):
        a = _eval_expr(e.left, st)
        b = _eval_expr(e.right, st)
        return _add_intervals(a, _negate_interval(b))
    if isinstance(e, Mul):
        inner = _eval_expr(e.arg, st)
        if e.coeff == 1:
            return inner
        if e.coeff == 0:
            return Interval.const(0)
        if e.coeff == -1:
            return _negate_interval(inner)
        lo = hi = None
        if inner.lo is not None and inner.lo.array is None:
            lo = Bound(inner.lo.offset * e.coeff)
        if inner.hi is not None and inner.hi.array is None:
            hi = Bound(inner.hi.offset * e.coeff)
        return Interval(lo, hi) if e.coeff > 0 else Interval(hi, lo)
    if isinstance(e, IntIte):
        return join(_eval_expr(e.then, st), _eval_expr(e.other, st))
    return TOP  # lookups, anything else


def _add_intervals(a: Interval, b: Interval) -> Interval:
    def add_b(x: Optional[Bound], y: Optional[Bound]) -> Optional[Bound]:
        if x is None or y is None:
            return None
        if y.array is None:
            return x.shift(y.offset)
        if x.array is None:
            return y.shift(x.offset)
        return None  # sum of two symbolic bounds is not representable
    return Interval(add_b(a.lo, b.lo), add_b(a.hi, b.hi))


def _negate_interval(a: Interval) -> Interval:
    def neg(x: Optional[Bound]) -> Optional[Bound]:
        if x is None or x.array is not None:
            return None
        return Bound(-x.offset)
    return Interval(neg(a.hi), neg(a.lo))


# -- guard refinement ---------------------------------------------------------

def _refine(st: State, guard: BoolExpr) -> State:
    guard = nnf(guard)
    return _refine_nnf(st, guard)


def _refine_nnf(st: State, g: BoolExpr) -> State:
    if isinstance(g, And):
        return _refine_nnf(_refine_nnf(st, g.left), g.right)
    if isinstance(g, Or):
        return _state_join(_refine_nnf(st, g.left), _refine_nnf(st, g.right))
    if isinstance(g, Cmp):
        out = dict(st)
        _refine_cmp(out, g.left, g.op, g.right)
        _refine_cmp(out, g.right, _swap(g.op), g.left)
        return out
    return dict(st)


def _swap(op: str) -> str:
    return {"==": "==", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}[op]


def _refine_cmp(st: State, left: IntExpr, op: str, right: IntExpr) -> None:
    if not isinstance(left, Var):
        return
    name = left.name
    cur = st.get(name, TOP)
    r = _eval_expr(right, st)
    if op in ("<", "<="):
        hi = r.hi.shift(-1 if op == "<" else 0) if r.hi is not None else None
        if hi is not None:
            st[name] = Interval(cur.lo, _meet_hi(cur.hi, hi))
    elif op in (">", ">="):
        lo = r.lo.shift(1 if op == ">" else 0) if r.lo is not None else None
        if lo is not None:
            st[name] = Interval(_meet_lo(cur.lo, lo), cur.hi)
    elif op == "==":
        lo = r.lo
        hi = r.hi
        st[name] = Interval(_meet_lo(cur.lo, lo) if lo is not None else cur.lo,
                            _meet_hi(cur.hi, hi) if hi is not None else cur.hi)


def _meet_hi(cur: Optional[Bound], new: Bound) -> Bound:
    # intersection keeps either valid upper bound; prefer the tighter one
    # when comparable, otherwise keep the existing bound (still sound)
    if cur is None:
        return new
    if _bound_le(cur, new):
        return cur
    if _bound_le(new, cur):
        return new
    return cur


def _meet_lo(cur: Optional[Bound], new: Bound) -> Bound:
    if cur is None:
        return new
    if _bound_le(new, cur):
        return cur
    if _bound_le(cur, new):
        return new
    return cur


# -- transfer function --------------------------------------------------------

class _Analysis:
    def __init__(self) -> None:
        self.loop_invariants: dict[int, BoolExpr] = {}

    def transfer(self, s: Stmt, st: State) -> State:
        if isinstance(s, (Skip, Inhale, Exhale)):
            return st
        if isinstance(s, VarDecl):
            out = dict(st)
            if not s.is_array:
                val = _eval_expr(s.init, st)
                for name in s.names:
                    out[name] = val
            return out
        if isinstance(s, AssignVar):
            out = dict(st)
            out[s.name] = _eval_expr(s.value, st)
            return out
        if isinstance(s, AssignArray):
            # bounds naming the reassigned array are stale
            out = {}
            for v, itv in st.items():
                lo = itv.lo if itv.lo is None or itv.lo.array != s.target else None
                hi = itv.hi if itv.hi is None or itv.hi.array != s.target else None
                out[v] = Interval(lo, hi)
            return out
        if isinstance(s, LoadElem):
            out = dict(st)
            out[s.name] = TOP
            return out
        if isinstance(s, StoreElem):
            return st
        if isinstance(s, Seq):
            return self.transfer(s.second, self.transfer(s.first, st))
        if isinstance(s, If):
            then_in = _refine(st, s.cond)
            else_in = _refine(st, nnf(Not(s.cond)))
            return _state_join(self.transfer(s.then, then_in),
                               self.transfer(s.other, else_in))
        if isinstance(s, While):
            head = dict(st)
            for i in range(200):
                body_in = _refine(head, s.cond)
                body_out = self.transfer(s.body, body_in)
                cand = _state_join(st, body_out)
                if i >= WIDENING_THRESHOLD:
                    cand = {v: widen(head.get(v, TOP), cand.get(v, TOP))
                            for v in set(head) | set(cand)}
                if _state_eq(cand, head):
                    break
                head = cand
            for _ in range(NARROWING_PASSES):
                body_in = _refine(head, s.cond)
                body_out = self.transfer(s.body, body_in)
                nxt = _state_join(st, body_out)
                head = {v: narrow(head.get(v, TOP), nxt.get(v, TOP))
                        for v in set(head) | set(nxt)}
            self.loop_invariants[id(s)] = _state_to_bool(head, _modified_ints(s.body))
            return _refine(head, nnf(Not(s.cond)))
        raise SourceError(s.span, f"cannot analyze {type(s).__name__}")


def _modified_ints(s: Stmt) -> set[str]:
    out: set[str] = set()

    def go(node: Stmt) -> None:
        if isinstance(node, (AssignVar, LoadElem)):
            out.add(node.name)
        elif isinstance(node, VarDecl) and not node.is_array:
            out.update(node.names)
        elif isinstance(node, Seq):
            go(node.first)
            go(node.second)
        elif isinstance(node, If):
            go(node.then)
            go(node.other)
        elif isinstance(node, While):
            go(node.body)

    go(s)
    return out


def _state_to_bool(st: State, vars_of_interest: set[str]) -> BoolExpr:
    conjs: list[BoolExpr] = []
    for v in sorted(vars_of_interest):
        itv = st.get(v, TOP)
        if itv.lo is not None:
            conjs.append(Cmp(itv.lo.to_expr(), "<=", Var(v)))
        if itv.hi is not None:
            conjs.append(Cmp(Var(v), "<=", itv.hi.to_expr()))
    out: BoolExpr = TRUE
    for c in conjs:
        out = c if out == TRUE else And(out, c)
    return out


def forward_intervals(method: Method) -> dict[int, BoolExpr]:
    """Interval invariant (as a conjunction of comparisons) for every loop,
    keyed by id() of the While node."""
    analysis = _Analysis()
    init: State = {}
    analysis.transfer(method.body, init)
    return analysis.loop_invariants


# ---------------------------------------------------------------------------
# Loop metadata assembly
# ---------------------------------------------------------------------------

@dataclass
class LoopMeta:
    modified: tuple[str, ...]
    over: BoolExpr
    under: BoolExpr
    exhale_free: bool
    counter_added: bool


def _contains_exhale(s: Stmt) -> bool:
    if isinstance(s, Exhale):
        return True
    if isinstance(s, Seq):
        return _contains_exhale(s.first) or _contains_exhale(s.second)
    if isinstance(s, If):
        return _contains_exhale(s.then) or _contains_exhale(s.other)
    if isinstance(s, While):
        return _contains_exhale(s.body)
    return False


def resolve_invariants(loop: While, inferred: BoolExpr) -> LoopMeta:
    """Combine the inferred interval invariant with the loop's annotations.

    The over-approximate invariant is their conjunction; under-approximate
    invariants come only from annotations and default to false.
    """
    over = inferred
    for ann in loop.over_invs:
        over = ann if over == TRUE else And(over, ann)
    under: BoolExpr = FALSE
    for ann in loop.under_invs:
        under = ann if under == FALSE else And(under, ann)
    modified = tuple(sorted(_modified_ints(loop.body)))
    return LoopMeta(
        modified=modified,
        over=over,
        under=under,
        exhale_free=not _contains_exhale(loop.body),
        counter_added=not modified,
    )
