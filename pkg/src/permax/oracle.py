"""Ground-truth engines: the permission-instrumented interpreter, an exact
bounded evaluator for pointwise maxima, and a bounded validity checker.

The interpreter executes statements under a program state (heap, permission
map, environment).  Every array read checks for positive permission and
every write for full permission; exhale checks then subtracts.  Permission
failures, stuck configurations (out-of-bounds accesses), and fuel
exhaustion are reported as distinct outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Callable, Iterator, Optional

from .expr import (
    And, ArrayVar, BoolConst, BoolExpr, Cmp, Divides, Env, EvalStuck, Frac,
    Heap, IntConst, IntExpr, Length, Lookup, Not, NotDivides, Or, PermExpr,
    PermValue, PointwiseMax, PV_ONE, PV_ZERO, QA, QI, Rd, Sub, Var,
    eval_bool, eval_int, eval_perm, free_vars,
)
from .frontend import (
    AssignArray, AssignVar, Exhale, If, Inhale, LoadElem, Seq, Skip,
    SourceSpan, StoreElem, Stmt, VarDecl, While,
)
from .simplify import linearize


# ---------------------------------------------------------------------------
# Program state and run outcomes
# ---------------------------------------------------------------------------

class PermMap:
    """Permission map over (array id, index), backed by a default function
    so a symbolic precondition can seed unboundedly many locations."""

    def __init__(self, default: Callable[[int, int], PermValue] = lambda a, i: PV_ZERO):
        self.default = default
        self.overrides: dict[tuple[int, int], PermValue] = {}

    def get(self, aid: int, idx: int) -> PermValue:
        key = (aid, idx)
        if key in self.overrides:
            return self.overrides[key]
        return self.default(aid, idx)

    def add(self, aid: int, idx: int, amount: PermValue) -> None:
        self.overrides[(aid, idx)] = self.get(aid, idx) + amount

    def subtract(self, aid: int, idx: int, amount: PermValue) -> None:
        self.overrides[(aid, idx)] = self.get(aid, idx) - amount

    def copy(self) -> "PermMap":
        out = PermMap(self.default)
        out.overrides = dict(self.overrides)
        return out


@dataclass
class ProgramState:
    heap: Heap
    perms: PermMap
    env: Env

    def copy(self) -> "ProgramState":
        return ProgramState(self.heap.copy(), self.perms.copy(), dict(self.env))


@dataclass
class RunOutcome:
    kind: str                      # "normal" | "perm-fail" | "stuck" | "fuel"
    state: Optional[ProgramState] = None
    span: Optional[SourceSpan] = None
    detail: str = ""
    touched: set = field(default_factory=set)

    @property
    def is_normal(self) -> bool:
        return self.kind == "normal"


class _PermFail(Exception):
    def __init__(self, span: SourceSpan, detail: str):
        self.span = span
        self.detail = detail


class _OutOfFuel(Exception):
    pass


def interpret(stmt: Stmt, state: ProgramState, fuel: int = 100_000) -> RunOutcome:
    """Run a statement to completion under the instrumented semantics.

    The returned outcome carries the final state for normal runs and the
    set of (array id, index) locations whose permissions were consulted.
    """
    st = state.copy()
    touched: set[tuple[int, int]] = set()
    budget = [fuel]

    def spend() -> None:
        budget[0] -= 1
        if budget[0] < 0:
            raise _OutOfFuel()

    def run(s: Stmt) -> None:
        spend()
        if isinstance(s, Skip):
            return
        if isinstance(s, VarDecl):
            for name in s.names:
                if s.is_array:
                    st.env[name] = st.env[s.init_array]
                else:
                    st.env[name] = eval_int(s.init, st.env, st.heap)
            return
        if isinstance(s, AssignVar):
            st.env[s.name] = eval_int(s.value, st.env, st.heap)
            return
        if isinstance(s, AssignArray):
            st.env[s.target] = st.env[s.source]
            return
        if isinstance(s, LoadElem):
            aid = st.env[s.array]
            idx = eval_int(s.index, st.env, st.heap)
            if not (0 <= idx < st.heap.length(aid)):
                raise EvalStuck(f"read out of bounds at index {idx}")
            touched.add((aid, idx))
            if not st.perms.get(aid, idx) > PV_ZERO:
                raise _PermFail(s.span, f"read of {s.array}[{idx}] without permission")
            st.env[s.name] = st.heap.load(aid, idx)
            return
        if isinstance(s, StoreElem):
            aid = st.env[s.array]
            idx = eval_int(s.index, st.env, st.heap)
            if not (0 <= idx < st.heap.length(aid)):
                raise EvalStuck(f"write out of bounds at index {idx}")
            touched.add((aid, idx))
            if not st.perms.get(aid, idx) >= PV_ONE:
                raise _PermFail(s.span, f"write to {s.array}[{idx}] without full permission")
            st.heap.store(aid, idx, st.env[s.value])
            return
        if isinstance(s, Inhale):
            aid = st.env[s.array]
            idx = eval_int(s.index, st.env, st.heap)
            amount = eval_perm(s.amount, st.env, st.heap)
            touched.add((aid, idx))
            st.perms.add(aid, idx, amount)
            return
        if isinstance(s, Exhale):
            aid = st.env[s.array]
            idx = eval_int(s.index, st.env, st.heap)
            amount = eval_perm(s.amount, st.env, st.heap)
            touched.add((aid, idx))
            if not st.perms.get(aid, idx) >= amount:
                raise _PermFail(s.span, f"exhale of {s.array}[{idx}] underflows")
            st.perms.subtract(aid, idx, amount)
            return
        if isinstance(s, Seq):
            run(s.first)
            run(s.second)
            return
        if isinstance(s, If):
            run(s.then if eval_bool(s.cond, st.env, st.heap) else s.other)
            return
        if isinstance(s, While):
            while eval_bool(s.cond, st.env, st.heap):
                run(s.body)
                spend()
            return
        raise EvalStuck(f"cannot interpret {type(s).__name__}")

    try:
        run(stmt)
    except _PermFail as pf:
        return RunOutcome("perm-fail", span=pf.span, detail=pf.detail, touched=touched)
    except EvalStuck as es:
        return RunOutcome("stuck", detail=str(es), touched=touched)
    except _OutOfFuel:
        return RunOutcome("fuel", touched=touched)
    return RunOutcome("normal", state=st, touched=touched)


def seed_perm_map(pre: PermExpr, env: Env, heap: Heap) -> PermMap:
    """Permission map holding exactly the precondition amount everywhere:
    P(aid, i) = pre evaluated with the distinguished parameters bound to
    (aid, i)."""
    def default(aid: int, idx: int) -> PermValue:
        e2 = dict(env)
        e2[QA] = aid
        e2[QI] = idx
        return eval_perm(pre, e2, heap)
    return PermMap(default)


def eval_perm_at(p: PermExpr, env: Env, heap: Heap, aid: int, idx: int) -> PermValue:
    e2 = dict(env)
    e2[QA] = aid
    e2[QI] = idx
    return eval_perm(p, e2, heap)


# ---------------------------------------------------------------------------
# Exact bounded evaluation of pointwise maxima
# ---------------------------------------------------------------------------

def _literal_window(b_or_p, x: str, env: Env, heap: Optional[Heap],
                    bounds: list[int], divisors: list[int]) -> None:
    """Collect evaluated comparison bounds and divisibility periods for
    every literal mentioning x."""
    from .expr import _children

    def scan_bool(b: BoolExpr) -> None:
        if isinstance(b, Cmp) and x in free_vars(b):
            lin = linearize(Sub(b.left, b.right))
            c = lin.coeff(Var(x))
            rest = lin.drop(Var(x))
            if c == 0:
                return
            from .simplify import linear_to_expr
            val = eval_int(linear_to_expr(rest), env, heap)
            # c*x + val op 0 flips its truth value around x = -val/c
            q = (-val) // c
            bounds.append(q)
            bounds.append(q + 1)
        elif isinstance(b, (Divides, NotDivides)) and x in free_vars(b):
            lin = linearize(b.arg)
            c = lin.coeff(Var(x))
            if c != 0:
                divisors.append(b.divisor)
        elif isinstance(b, (And, Or, Not)):
            for ch in _children(b):
                scan_bool(ch)  # type: ignore[arg-type]

    def scan_perm(p: PermExpr) -> None:
        from .expr import PAdd, PIte, PMax, PMin, PSub
        if isinstance(p, PIte):
            scan_bool(p.cond)
            scan_perm(p.then)
            scan_perm(p.other)
        elif isinstance(p, (PAdd, PSub, PMin, PMax)):
            scan_perm(p.left)
            scan_perm(p.right)

    if isinstance(b_or_p, BoolExpr):
        scan_bool(b_or_p)
    else:
        scan_perm(b_or_p)


def bounded_max(node: PointwiseMax, env: Env, heap: Optional[Heap] = None) -> PermValue:
    """Exact value of a pointwise maximum by finite enumeration.

    All comparisons stabilize outside the interval spanned by their
    evaluated bounds, and the expression is then periodic in the
    divisibility lcm, so scanning the window [L - 2*delta, U + 2*delta]
    (one full period beyond the bounds on both sides) is exhaustive.
    Values below zero never win: the empty range yields 0 and the
    analysis only produces non-negative bodies.
    """
    if len(node.vars) != 1:
        raise ValueError("bounded_max handles a single bound variable")
    x = node.vars[0]
    bounds: list[int] = []
    divisors: list[int] = []
    _literal_window(node.guard, x, env, heap, bounds, divisors)
    _literal_window(node.body, x, env, heap, bounds, divisors)
    delta = 1
    for n in divisors:
        delta = lcm(delta, n)
    if not bounds:
        # constant in x up to periodicity: one full period suffices
        lo, hi = 0, delta - 1
    else:
        lo, hi = min(bounds) - 2 * delta, max(bounds) + 2 * delta
    best = PV_ZERO
    e2 = dict(env)
    for v in range(lo, hi + 1):
        e2[x] = v
        if eval_bool(node.guard, e2, heap):
            val = eval_perm(node.body, e2, heap)
            if val > best:
                best = val
    return best


# ---------------------------------------------------------------------------
# Bounded validity checking
# ---------------------------------------------------------------------------

class BudgetExceeded(Exception):
    def __init__(self, size: int, budget: int):
        super().__init__(f"search space of {size} points exceeds budget {budget}")
        self.size = size
        self.budget = budget


@dataclass
class Counterexample:
    env: Env
    lengths: dict[int, int]

    def describe(self) -> str:
        pairs = ", ".join(f"{k}={v}" for k, v in sorted(self.env.items()))
        lens = ", ".join(f"len({a})={l}" for a, l in sorted(self.lengths.items()))
        return f"{pairs}" + (f" with {lens}" if lens else "")


def bounded_validity(cond: BoolExpr, int_vars: list[str], array_vars: list[str],
                     lo: int = -4, hi: int = 8,
                     budget: int = 5_000_000) -> Optional[Counterexample]:
    """Exhaustively check cond over a finite window; None means no
    counterexample in range (bounded evidence, not proof).

    Array variables range over distinct identifiers plus one fresh alias
    candidate for qa; lengths range over [0, hi]; integer variables and qi
    over [lo, hi].
    """
    names = sorted(set(int_vars))
    arrays = sorted(set(array_vars))
    aids = {a: i for i, a in enumerate(arrays)}
    fresh_aid = len(arrays)
    qa_range = list(range(len(arrays) + 1))
    span = hi - lo + 1
    lens = hi + 1
    size = (span ** len(names)) * (lens ** len(arrays)) * len(qa_range)
    if size > budget:
        raise BudgetExceeded(size, budget)

    def rec_lengths(idx: int, lengths: dict[int, int]) -> Optional[Counterexample]:
        if idx == len(arrays):
            heap = Heap(lengths={**lengths, fresh_aid: 0})
            env: Env = dict(aids)
            env[QA] = 0
            return rec_vars(0, env, heap, lengths)
        for l in range(0, hi + 1):
            lengths[aids[arrays[idx]]] = l
            out = rec_lengths(idx + 1, lengths)
            if out is not None:
                return out
        return None

    def rec_vars(idx: int, env: Env, heap: Heap,
                 lengths: dict[int, int]) -> Optional[Counterexample]:
        if idx == len(names):
            for qa in qa_range:
                env[QA] = qa
                if not eval_bool(cond, env, heap):
                    return Counterexample(dict(env), dict(lengths))
            return None
        for v in range(lo, hi + 1):
            env[names[idx]] = v
            out = rec_vars(idx + 1, env, heap, lengths)
            if out is not None:
                return out
        return None

    return rec_lengths(0, {})
