"""Normalization and syntactic simplification of boolean and permission
expressions.

The simplifier is deterministic and purely syntactic.  It performs constant
folding over exact permission values, conditional collapse under
contradictory or entailed guards, domination pruning for min/max, additive
flattening with cancellation of syntactically equal terms, and conjunct
pruning.  Infeasibility of literal conjunctions is decided by a small
difference-bound procedure (unit-coefficient bounds and differences over
opaque atoms, with length atoms known non-negative).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import gcd
from typing import Iterable, Optional

from .expr import (
    Add, And, ArrayVar, BoolConst, BoolExpr, Cmp, Divides, FALSE, FloorDiv,
    Frac, IntConst, IntExpr, IntIte, Length, Lookup, Mul, Not, NotDivides,
    Or, PAdd, PIte, PMax, PMin, PSub, PZERO, PermAtLeast, PermExpr,
    PermValue, PointwiseMax, PV_ZERO, Rd, Sub, TRUE, Var, free_vars,
    negate_cmp_op, swap_cmp_op,
)


class NonlinearError(Exception):
    """A variable occurs where only linear occurrences are supported."""


# ---------------------------------------------------------------------------
# Linear forms: sum of integer-coefficient atoms plus a constant
# ---------------------------------------------------------------------------

Atom = IntExpr  # Var, ArrayVar, Length, Lookup, IntIte, FloorDiv act as atoms


@dataclass(frozen=True)
class Linear:
    terms: tuple[tuple[Atom, int], ...]  # sorted by atom key, coeffs non-zero
    const: int

    def coeff(self, atom: Atom) -> int:
        for a, c in self.terms:
            if a == atom:
                return c
        return 0

    def drop(self, atom: Atom) -> "Linear":
        return Linear(tuple((a, c) for a, c in self.terms if a != atom), self.const)

    def scale(self, k: int) -> "Linear":
        if k == 0:
            return Linear((), 0)
        return Linear(tuple((a, c * k) for a, c in self.terms), self.const * k)

    def add(self, other: "Linear") -> "Linear":
        acc: dict[Atom, int] = dict(self.terms)
        for a, c in other.terms:
            acc[a] = acc.get(a, 0) + c
        terms = tuple(sorted(((a, c) for a, c in acc.items() if c != 0),
                             key=lambda t: _atom_key(t[0])))
        return Linear(terms, self.const + other.const)

    def sub(self, other: "Linear") -> "Linear":
        return self.add(other.scale(-1))

    def is_const(self) -> bool:
        return not self.terms


@lru_cache(maxsize=1 << 16)
def _atom_key(a: Atom) -> str:
    from .expr import QA, QI, show_int
    if isinstance(a, (Var, ArrayVar)) and a.name in (QA, QI):
        lead = "0"
    elif isinstance(a, (Var, ArrayVar)):
        lead = "1"
    else:
        lead = "2"
    return f"{lead}:{type(a).__name__}:{show_int(a)}"


@lru_cache(maxsize=1 << 16)
def linearize(e: IntExpr) -> Linear:
    if isinstance(e, IntConst):
        return Linear((), e.value)
    if isinstance(e, Mul):
        return linearize(e.arg).scale(e.coeff)
    if isinstance(e, Add):
        return linearize(e.left).add(linearize(e.right))
    if isinstance(e, Sub):
        return linearize(e.left).sub(linearize(e.right))
    return Linear(((e, 1),), 0)


def linear_to_expr(lin: Linear) -> IntExpr:
    pos: list[IntExpr] = []
    neg: list[IntExpr] = []
    for a, c in lin.terms:
        target = pos if c > 0 else neg
        k = abs(c)
        target.append(a if k == 1 else Mul(k, a))
    e: Optional[IntExpr] = None
    for t in pos:
        e = t if e is None else Add(e, t)
    if lin.const > 0 or (e is None and not neg and lin.const == 0):
        c = IntConst(lin.const)
        e = c if e is None else Add(e, c)
    for t in neg:
        e = Sub(IntConst(0), t) if e is None else Sub(e, t)
    if lin.const < 0:
        e = IntConst(lin.const) if e is None else Sub(e, IntConst(-lin.const))
    assert e is not None
    return e


def int_add(e: IntExpr, k: int) -> IntExpr:
    """e + k with light constant folding."""
    if k == 0:
        return e
    if isinstance(e, IntConst):
        return IntConst(e.value + k)
    if isinstance(e, Add) and isinstance(e.right, IntConst):
        return int_add(e.left, e.right.value + k)
    if isinstance(e, Sub) and isinstance(e.right, IntConst):
        return int_add(e.left, k - e.right.value)
    return Add(e, IntConst(k)) if k > 0 else Sub(e, IntConst(-k))


def simplify_int(e: IntExpr) -> IntExpr:
    """Canonicalize via the linear form; atoms are simplified recursively."""
    if isinstance(e, IntIte):
        cond = simplify_bool(e.cond)
        if cond == TRUE:
            return simplify_int(e.then)
        if cond == FALSE:
            return simplify_int(e.other)
        t, o = simplify_int(e.then), simplify_int(e.other)
        if t == o:
            return t
        return IntIte(cond, t, o)
    if isinstance(e, Lookup):
        return Lookup(e.array, simplify_int(e.index))
    if isinstance(e, FloorDiv):
        inner = simplify_int(e.arg)
        if isinstance(inner, IntConst):
            return IntConst(inner.value // e.divisor)
        if e.divisor == 1:
            return inner
        return FloorDiv(inner, e.divisor)
    if isinstance(e, (Add, Sub, Mul)):
        lin = linearize(_map_atoms(e, simplify_int))
        return linear_to_expr(lin)
    return e


def _map_atoms(e: IntExpr, f) -> IntExpr:
    if isinstance(e, Mul):
        return Mul(e.coeff, _map_atoms(e.arg, f))
    if isinstance(e, Add):
        return Add(_map_atoms(e.left, f), _map_atoms(e.right, f))
    if isinstance(e, Sub):
        return Sub(_map_atoms(e.left, f), _map_atoms(e.right, f))
    if isinstance(e, IntConst):
        return e
    return f(e)


# ---------------------------------------------------------------------------
# Difference-bound feasibility for literal conjunctions
# ---------------------------------------------------------------------------

_INF = None  # sentinel for "no bound"


class _DBM:
    """Constraints x - y <= c over atoms plus a virtual zero node."""

    def __init__(self) -> None:
        self.edges: dict[tuple[object, object], int] = {}
        self.nodes: set[object] = {0}

    def add(self, u: object, v: object, c: int) -> None:
        # v - u <= c, edge u -> v
        self.nodes.add(u)
        self.nodes.add(v)
        key = (u, v)
        if key not in self.edges or self.edges[key] > c:
            self.edges[key] = c

    def feasible(self) -> bool:
        # Bellman-Ford negative-cycle detection
        dist = {n: 0 for n in self.nodes}
        for _ in range(len(self.nodes)):
            changed = False
            for (u, v), c in self.edges.items():
                if dist[u] + c < dist[v]:
                    dist[v] = dist[u] + c
                    changed = True
            if not changed:
                return True
        return False

    def bounds(self, atom: object) -> tuple[Optional[int], Optional[int]]:
        """Derived [lo, hi] for a single atom (via paths through zero only)."""
        hi = self.edges.get((0, atom))
        lo_edge = self.edges.get((atom, 0))
        lo = -lo_edge if lo_edge is not None else None
        return lo, hi

    def closure(self) -> dict[tuple[object, object], int]:
        """All-pairs shortest paths (Floyd-Warshall; node counts are tiny)."""
        nodes = list(self.nodes)
        dist = dict(self.edges)
        for k in nodes:
            for i in nodes:
                d_ik = dist.get((i, k))
                if d_ik is None:
                    continue
                for j in nodes:
                    d_kj = dist.get((k, j))
                    if d_kj is None:
                        continue
                    cur = dist.get((i, j))
                    if cur is None or d_ik + d_kj < cur:
                        dist[(i, j)] = d_ik + d_kj
        return dist


def _atoms_of_lin(lin: Linear) -> list[tuple[Atom, int]]:
    return list(lin.terms)


@lru_cache(maxsize=1 << 16)
def _literal_constraints(lit: BoolExpr) -> Optional[list[tuple[object, object, int]]]:
    """Difference-bound constraints implied by one literal, or None if the
    literal is not expressible (skipping is sound)."""
    if isinstance(lit, Cmp):
        lin = linearize(Sub(lit.left, lit.right))
        if lit.op in ("<", "<=", ">", ">="):
            # normalize to terms <= k (constant moved to the right)
            if lit.op == "<":
                terms_lin, k = Linear(lin.terms, 0), -1 - lin.const
            elif lit.op == "<=":
                terms_lin, k = Linear(lin.terms, 0), -lin.const
            elif lit.op == ">":
                neg = lin.scale(-1)
                terms_lin, k = Linear(neg.terms, 0), -1 - neg.const
            else:
                neg = lin.scale(-1)
                terms_lin, k = Linear(neg.terms, 0), -neg.const
            terms = _atoms_of_lin(terms_lin)
            if len(terms) == 1:
                (a, c) = terms[0]
                if c == 1:
                    return [(0, a, k)]           # a - 0 <= k
                if c == -1:
                    return [(a, 0, k)]           # 0 - a <= k
                if c > 1:
                    return [(0, a, k // c)]      # a <= floor(k/c)
                return None                      # -c*a <= k needs ceil; skip
            if len(terms) == 2:
                (a1, c1), (a2, c2) = terms
                if c1 == 1 and c2 == -1:
                    return [(a2, a1, k)]         # a1 - a2 <= k
                if c1 == -1 and c2 == 1:
                    return [(a1, a2, k)]
            return None
        if lit.op == "==":
            le = _literal_constraints(Cmp(lit.left, "<=", lit.right))
            ge = _literal_constraints(Cmp(lit.left, ">=", lit.right))
            if le is None or ge is None:
                return None
            return le + ge
        return None  # "!=" handled by constant evaluation only
    return None


@lru_cache(maxsize=1 << 16)
def _eval_const_literal(lit: BoolExpr) -> Optional[bool]:
    if isinstance(lit, BoolConst):
        return lit.value
    if isinstance(lit, Cmp):
        lin = linearize(Sub(lit.left, lit.right))
        if lin.is_const():
            v = lin.const
            return {"==": v == 0, "!=": v != 0, "<": v < 0,
                    "<=": v <= 0, ">": v > 0, ">=": v >= 0}[lit.op]
    if isinstance(lit, (Divides, NotDivides)):
        lin = linearize(lit.arg)
        if lin.is_const():
            ok = lin.const % lit.divisor == 0
            return ok if isinstance(lit, Divides) else not ok
        if all(c % lit.divisor == 0 for _, c in lin.terms):
            ok = lin.const % lit.divisor == 0
            return ok if isinstance(lit, Divides) else not ok
    return None


def _dnf_branches(bs: Iterable[BoolExpr], cap: int = 32) -> Optional[list[list[BoolExpr]]]:
    """Expand a conjunction of formulas into DNF literal branches, or None
    if the expansion exceeds the cap."""
    branches: list[list[BoolExpr]] = [[]]
    stack = list(bs)
    while stack:
        b = stack.pop()
        if isinstance(b, And):
            stack.append(b.left)
            stack.append(b.right)
        elif isinstance(b, Or):
            new: list[list[BoolExpr]] = []
            for opt in (b.left, b.right):
                sub = _dnf_branches([opt], cap)
                if sub is None:
                    return None
                for branch in branches:
                    for extra in sub:
                        new.append(branch + extra)
            if len(new) > cap:
                return None
            branches = new
        elif isinstance(b, Not):
            inner = nnf(b)
            if isinstance(inner, Not):
                for branch in branches:
                    branch.append(inner)
            else:
                stack.append(inner)
        else:
            for branch in branches:
                branch.append(b)
    return branches


def _branch_feasible(literals: list[BoolExpr]) -> bool:
    dbm = _DBM()
    divs: list[BoolExpr] = []
    neqs: list[Cmp] = []
    for lit in literals:
        cv = _eval_const_literal(lit)
        if cv is False:
            return False
        if cv is True:
            continue
        if isinstance(lit, (Divides, NotDivides)):
            divs.append(lit)
            continue
        if isinstance(lit, Cmp) and lit.op == "!=":
            neqs.append(lit)
            continue
        cs = _literal_constraints(lit)
        if cs:
            for (u, v, c) in cs:
                dbm.add(u, v, c)
        la = _length_atoms(lit)
        for a in la:
            dbm.add(a, 0, 0)  # 0 - len <= 0, lengths are non-negative
    # lengths mentioned only inside divisibility literals
    for lit in divs:
        for a in _length_atoms(lit):
            dbm.add(a, 0, 0)
    if not dbm.feasible():
        return False
    # a disequality is refuted when the bound graph pins its difference
    if neqs:
        closure = dbm.closure()
        for lit in neqs:
            lin = linearize(Sub(lit.left, lit.right))
            terms = list(lin.terms)
            if len(terms) == 1 and abs(terms[0][1]) == 1:
                a, c = terms[0]
                up = closure.get((0, a))      # a <= up
                down = closure.get((a, 0))    # -a <= down, i.e. a >= -down
                if up is not None and down is not None and up == -down:
                    if c * up + lin.const == 0:
                        return False
            elif len(terms) == 2:
                (a1, c1), (a2, c2) = terms
                # choose u, v so that v - u equals the atom part of lin
                if c1 == 1 and c2 == -1:
                    u, v = a2, a1
                elif c1 == -1 and c2 == 1:
                    u, v = a1, a2
                else:
                    continue
                d_uv = closure.get((u, v))
                d_vu = closure.get((v, u))
                if d_uv is not None and d_vu is not None and d_uv == -d_vu:
                    if d_uv + lin.const == 0:
                        return False
    # matching positive/negative divisibility literals refute each other
    div_keys: set = set()
    for lit in divs:
        lin = linearize(lit.arg)
        key = (lit.divisor, lin.terms, lin.const % lit.divisor)
        tag = (isinstance(lit, Divides), *key)
        anti = (not isinstance(lit, Divides), *key)
        if anti in div_keys:
            return False
        div_keys.add(tag)
    # divisibility literals decidable when their atoms are pinned constants
    for lit in divs:
        lin = linearize(lit.arg)
        val = lin.const
        ok = True
        for a, c in lin.terms:
            lo, hi = dbm.bounds(a)
            if lo is not None and lo == hi:
                val += c * lo
            else:
                ok = False
                break
        if ok:
            holds = val % lit.divisor == 0
            if isinstance(lit, Divides) and not holds:
                return False
            if isinstance(lit, NotDivides) and holds:
                return False
    return True


@lru_cache(maxsize=1 << 16)
def _length_atoms(lit: BoolExpr) -> tuple[Atom, ...]:
    out: list[Atom] = []

    def scan(e: IntExpr) -> None:
        if isinstance(e, Length):
            out.append(e)
        elif isinstance(e, Mul):
            scan(e.arg)
        elif isinstance(e, (Add, Sub)):
            scan(e.left)
            scan(e.right)

    if isinstance(lit, Cmp):
        scan(lit.left)
        scan(lit.right)
    elif isinstance(lit, (Divides, NotDivides)):
        scan(lit.arg)
    return tuple(out)


@lru_cache(maxsize=1 << 16)
def _formula_atoms(b: BoolExpr) -> frozenset:
    """Atoms mentioned by a formula, for quick relevance prefilters."""
    out: set = set()

    def scan_lin(e: IntExpr) -> None:
        for a, _ in linearize(e).terms:
            out.add(a)

    def go(f: BoolExpr) -> None:
        if isinstance(f, Cmp):
            scan_lin(Sub(f.left, f.right))
        elif isinstance(f, (Divides, NotDivides)):
            scan_lin(f.arg)
        elif isinstance(f, (And, Or)):
            go(f.left)
            go(f.right)
        elif isinstance(f, Not):
            go(f.arg)

    go(b)
    return frozenset(out)


_CONTRA_CACHE: dict[frozenset, bool] = {}


def _relevant_subset(context: tuple[BoolExpr, ...], seed: frozenset) -> tuple[BoolExpr, ...]:
    """Context formulas transitively connected to the seed atoms."""
    atoms = set(seed)
    chosen: list[BoolExpr] = []
    remaining = list(context)
    changed = True
    while changed:
        changed = False
        for f in list(remaining):
            fa = _formula_atoms(f)
            if fa & atoms or not fa:
                chosen.append(f)
                remaining.remove(f)
                atoms |= fa
                changed = True
    return tuple(chosen)


def contradictory(formulas: Iterable[BoolExpr]) -> bool:
    """True when the conjunction is definitely unsatisfiable.  False means
    unknown; the check is deliberately incomplete but cheap."""
    key = frozenset(formulas)
    hit = _CONTRA_CACHE.get(key)
    if hit is not None:
        return hit
    branches = _dnf_branches(key)
    result = branches is not None and all(
        not _branch_feasible(b) for b in branches)
    if len(_CONTRA_CACHE) > (1 << 18):
        _CONTRA_CACHE.clear()
    _CONTRA_CACHE[key] = result
    return result


def entails(context: Iterable[BoolExpr], lit: BoolExpr) -> bool:
    """context |= lit, decided by refuting context & !lit."""
    return contradictory(list(context) + [nnf(Not(lit))])


# ---------------------------------------------------------------------------
# Negation normal form
# ---------------------------------------------------------------------------

def nnf(b: BoolExpr) -> BoolExpr:
    if isinstance(b, Not):
        return _nnf_neg(b.arg)
    if isinstance(b, And):
        return And(nnf(b.left), nnf(b.right))
    if isinstance(b, Or):
        return Or(nnf(b.left), nnf(b.right))
    return b


def _nnf_neg(b: BoolExpr) -> BoolExpr:
    if isinstance(b, BoolConst):
        return BoolConst(not b.value)
    if isinstance(b, Cmp):
        return Cmp(b.left, negate_cmp_op(b.op), b.right)
    if isinstance(b, Divides):
        return NotDivides(b.divisor, b.arg)
    if isinstance(b, NotDivides):
        return Divides(b.divisor, b.arg)
    if isinstance(b, And):
        return Or(_nnf_neg(b.left), _nnf_neg(b.right))
    if isinstance(b, Or):
        return And(_nnf_neg(b.left), _nnf_neg(b.right))
    if isinstance(b, Not):
        return nnf(b.arg)
    # opaque literals (permission inequalities) keep an explicit negation
    return Not(b)


# ---------------------------------------------------------------------------
# Boolean simplification
# ---------------------------------------------------------------------------

def _flat_and(b: BoolExpr) -> list[BoolExpr]:
    if isinstance(b, And):
        return _flat_and(b.left) + _flat_and(b.right)
    return [b]


def _flat_or(b: BoolExpr) -> list[BoolExpr]:
    if isinstance(b, Or):
        return _flat_or(b.left) + _flat_or(b.right)
    return [b]


def _rebuild_and(parts: list[BoolExpr]) -> BoolExpr:
    if not parts:
        return TRUE
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


def _rebuild_or(parts: list[BoolExpr]) -> BoolExpr:
    if not parts:
        return FALSE
    out = parts[0]
    for p in parts[1:]:
        out = Or(out, p)
    return out


@lru_cache(maxsize=1 << 16)
def _normalize_cmp(b: Cmp) -> BoolExpr:
    """Canonical comparison form: positive-coefficient terms on the left,
    the rest (negated) plus the constant on the right."""
    lin = linearize(Sub(b.left, b.right))
    op = b.op
    if lin.is_const():
        v = lin.const
        return BoolConst({"==": v == 0, "!=": v != 0, "<": v < 0,
                          "<=": v <= 0, ">": v > 0, ">=": v >= 0}[op])
    g = 0
    for _, c in lin.terms:
        g = gcd(g, abs(c))
    if g > 1:
        if lin.const % g == 0:
            lin = Linear(tuple((a, c // g) for a, c in lin.terms), lin.const // g)
        elif op == "==":
            return FALSE
        elif op == "!=":
            return TRUE
    # orient so the first term has a positive coefficient
    if lin.terms[0][1] < 0:
        lin = lin.scale(-1)
        op = swap_cmp_op(op)
    pos = tuple((a, c) for a, c in lin.terms if c > 0)
    neg = tuple((a, -c) for a, c in lin.terms if c < 0)
    left = linear_to_expr(Linear(pos, 0))
    right = linear_to_expr(Linear(neg, -lin.const))
    return Cmp(left, op, right)


_SIMP_BOOL_CACHE: dict[tuple, BoolExpr] = {}
_SIMP_PERM_CACHE: dict[tuple, PermExpr] = {}


def simplify_bool(b: BoolExpr, context: tuple[BoolExpr, ...] = ()) -> BoolExpr:
    if isinstance(b, BoolConst):
        return b
    key = (b, context)
    hit = _SIMP_BOOL_CACHE.get(key)
    if hit is not None:
        return hit
    out = _simplify_bool(b, context)
    if len(_SIMP_BOOL_CACHE) > (1 << 18):
        _SIMP_BOOL_CACHE.clear()
    _SIMP_BOOL_CACHE[key] = out
    return out


def _simplify_bool(b: BoolExpr, context: tuple[BoolExpr, ...] = ()) -> BoolExpr:
    if isinstance(b, BoolConst):
        return b
    if isinstance(b, Not):
        pushed = nnf(b)
        if not isinstance(pushed, Not):
            return simplify_bool(pushed, context)
        inner = pushed.arg
        if isinstance(inner, PermAtLeast):
            return Not(_simplify_perm_literal(inner))
        return pushed
    if isinstance(b, PermAtLeast):
        return _simplify_perm_literal(b)
    if isinstance(b, Cmp):
        lit = _normalize_cmp(b)
        if isinstance(lit, BoolConst):
            return lit
        return _decide_literal(lit, context)
    if isinstance(b, (Divides, NotDivides)):
        cv = _eval_const_literal(b)
        if cv is not None:
            return BoolConst(cv)
        if b.divisor == 1:
            return TRUE if isinstance(b, Divides) else FALSE
        lin = linearize(b.arg)
        lin = Linear(lin.terms, lin.const % b.divisor)
        arg = linear_to_expr(lin)
        lit = Divides(b.divisor, arg) if isinstance(b, Divides) else NotDivides(b.divisor, arg)
        return _decide_literal(lit, context)
    if isinstance(b, And):
        parts: list[BoolExpr] = []
        for raw in _flat_and(b):
            ctx = context + tuple(parts)
            s = simplify_bool(raw, ctx)
            if s == FALSE:
                return FALSE
            if s == TRUE:
                continue
            for piece in _flat_and(s):
                if piece not in parts:
                    parts.append(piece)
        # prune conjuncts entailed by the remaining ones; only worth trying
        # when other conjuncts mention connected atoms, and skipped for wide
        # conjunctions where it is cosmetic but quadratic
        pruned: list[BoolExpr] = []
        for i, p in enumerate(parts):
            others = tuple(pruned + parts[i + 1:]) + context
            if len(parts) <= 8 and _is_literal(p) \
                    and not isinstance(p, BoolConst) and others:
                relevant = _relevant_subset(others, _formula_atoms(p))
                if relevant and len(relevant) <= 8 and entails(relevant, p):
                    continue
            pruned.append(p)
        return _rebuild_and(pruned)
    if isinstance(b, Or):
        parts = []
        for raw in _flat_or(b):
            s = simplify_bool(raw, context)
            if s == TRUE:
                return TRUE
            if s == FALSE:
                continue
            for piece in _flat_or(s):
                if piece not in parts:
                    parts.append(piece)
        if context:
            kept = []
            for p in parts:
                if _is_literal(p) and not isinstance(p, BoolConst):
                    relevant = _relevant_subset(context, _formula_atoms(p))
                    if relevant and contradictory(relevant + (p,)):
                        continue
                kept.append(p)
            parts = kept
        return _rebuild_or(parts)
    return b


def _is_literal(b: BoolExpr) -> bool:
    return isinstance(b, (Cmp, Divides, NotDivides, BoolConst))


_DECIDE_CACHE: dict[tuple, BoolExpr] = {}


def _decide_literal(lit: BoolExpr, context: tuple[BoolExpr, ...]) -> BoolExpr:
    if not context:
        return lit
    if lit in context:
        return TRUE
    relevant = _relevant_subset(context, _formula_atoms(lit))
    if not relevant:
        return lit
    key = (lit, frozenset(relevant))
    hit = _DECIDE_CACHE.get(key)
    if hit is not None:
        return hit
    out = lit
    if contradictory(relevant + (lit,)):
        out = FALSE
    # the redundancy direction is cosmetic; skip it for wide contexts
    elif len(relevant) <= 6 and entails(relevant, lit):
        out = TRUE
    if len(_DECIDE_CACHE) > (1 << 18):
        _DECIDE_CACHE.clear()
    _DECIDE_CACHE[key] = out
    return out


def _simplify_perm_literal(b: PermAtLeast) -> BoolExpr:
    left = simplify_perm(b.left)
    right = simplify_perm(b.right)
    llo, lhi = perm_bounds(left)
    rlo, rhi = perm_bounds(right)
    if llo is not None and rhi is not None and llo >= rhi:
        return TRUE
    if lhi is not None and rlo is not None and lhi < rlo:
        return FALSE
    return PermAtLeast(left, right)


# ---------------------------------------------------------------------------
# Permission bounds and simplification
# ---------------------------------------------------------------------------

@lru_cache(maxsize=1 << 16)
def perm_bounds(p: PermExpr) -> tuple[Optional[PermValue], Optional[PermValue]]:
    """Structural (lo, hi) bounds on the value of p; None means unbounded."""
    if isinstance(p, Frac):
        v = PermValue(p.value, 0)
        return v, v
    if isinstance(p, Rd):
        v = PermValue(Fraction(0), 1)
        return v, v
    if isinstance(p, PAdd):
        l1, h1 = perm_bounds(p.left)
        l2, h2 = perm_bounds(p.right)
        lo = l1 + l2 if l1 is not None and l2 is not None else None
        hi = h1 + h2 if h1 is not None and h2 is not None else None
        return lo, hi
    if isinstance(p, PSub):
        l1, h1 = perm_bounds(p.left)
        l2, h2 = perm_bounds(p.right)
        lo = l1 - h2 if l1 is not None and h2 is not None else None
        hi = h1 - l2 if h1 is not None and l2 is not None else None
        return lo, hi
    if isinstance(p, PMin):
        l1, h1 = perm_bounds(p.left)
        l2, h2 = perm_bounds(p.right)
        lo = min(l1, l2) if l1 is not None and l2 is not None else None
        hi = min(h1, h2) if h1 is not None and h2 is not None else (h1 if h2 is None else h2)
        return lo, hi
    if isinstance(p, PMax):
        l1, h1 = perm_bounds(p.left)
        l2, h2 = perm_bounds(p.right)
        lo = max(l1, l2) if l1 is not None and l2 is not None else (l1 if l2 is None else l2)
        hi = max(h1, h2) if h1 is not None and h2 is not None else None
        return lo, hi
    if isinstance(p, PIte):
        l1, h1 = perm_bounds(p.then)
        l2, h2 = perm_bounds(p.other)
        lo = min(l1, l2) if l1 is not None and l2 is not None else None
        hi = max(h1, h2) if h1 is not None and h2 is not None else None
        return lo, hi
    if isinstance(p, PointwiseMax):
        lo_b, hi_b = perm_bounds(p.body)
        lo = min(PV_ZERO, lo_b) if lo_b is not None else None
        hi = max(PV_ZERO, hi_b) if hi_b is not None else None
        return lo, hi
    return None, None


def _pv_to_terms(v: PermValue) -> list[tuple[int, PermExpr]]:
    out: list[tuple[int, PermExpr]] = []
    if v.const > 0:
        out.append((1, Frac(v.const)))
    elif v.const < 0:
        out.append((-1, Frac(-v.const)))
    k = v.rd_units
    step = 1 if k > 0 else -1
    for _ in range(abs(k)):
        out.append((step, Rd()))
    return out


def _flatten_sum(p: PermExpr, sign: int, out: list[tuple[int, PermExpr]]) -> None:
    if isinstance(p, PAdd):
        _flatten_sum(p.left, sign, out)
        _flatten_sum(p.right, sign, out)
    elif isinstance(p, PSub):
        _flatten_sum(p.left, sign, out)
        _flatten_sum(p.right, -sign, out)
    else:
        out.append((sign, p))


def _rebuild_sum(terms: list[tuple[int, PermExpr]]) -> PermExpr:
    pos = [t for s, t in terms if s > 0]
    neg = [t for s, t in terms if s < 0]
    if not pos and not neg:
        return PZERO
    acc: Optional[PermExpr] = None
    for t in pos:
        acc = t if acc is None else PAdd(acc, t)
    if acc is None:
        acc = PZERO
    for t in neg:
        acc = PSub(acc, t)
    return acc


def simplify_perm(p: PermExpr, context: tuple[BoolExpr, ...] = ()) -> PermExpr:
    if isinstance(p, (Frac, Rd)):
        return p
    key = (p, context)
    hit = _SIMP_PERM_CACHE.get(key)
    if hit is not None:
        return hit
    out = _simplify_perm(p, context)
    if len(_SIMP_PERM_CACHE) > (1 << 18):
        _SIMP_PERM_CACHE.clear()
    _SIMP_PERM_CACHE[key] = out
    return out


def _simplify_perm(p: PermExpr, context: tuple[BoolExpr, ...] = ()) -> PermExpr:
    if isinstance(p, (Frac, Rd)):
        return p
    if isinstance(p, (PAdd, PSub)):
        raw: list[tuple[int, PermExpr]] = []
        _flatten_sum(p, 1, raw)
        simplified: list[tuple[int, PermExpr]] = []
        for sign, term in raw:
            st = simplify_perm(term, context)
            _flatten_sum(st, sign, simplified)
        # fold constants exactly
        const = PV_ZERO
        rest: list[tuple[int, PermExpr]] = []
        for sign, term in simplified:
            if isinstance(term, Frac):
                const = const + PermValue(term.value * sign, 0)
            elif isinstance(term, Rd):
                const = const + PermValue(Fraction(0), sign)
            else:
                rest.append((sign, term))
        # cancel syntactically equal +/- pairs
        cancelled: list[tuple[int, PermExpr]] = []
        for sign, term in rest:
            for i, (s2, t2) in enumerate(cancelled):
                if s2 == -sign and t2 == term:
                    del cancelled[i]
                    break
            else:
                cancelled.append((sign, term))
        # merge conditionals that share a guard: ite(g,a,b) + ite(g,c,d)
        # becomes ite(g, a+c, b+d), enabling cancellation across branches
        merged: list[tuple[int, PermExpr]] = []
        changed = False
        for sign, term in cancelled:
            hit = None
            if isinstance(term, PIte):
                for i, (s2, t2) in enumerate(merged):
                    if isinstance(t2, PIte) and t2.cond == term.cond:
                        hit = (i, s2, t2)
                        break
            if hit is None:
                merged.append((sign, term))
                continue
            i, s2, t2 = hit
            changed = True

            def comb(a: PermExpr, b: PermExpr) -> PermExpr:
                if s2 > 0 and sign > 0:
                    return PAdd(a, b)
                if s2 > 0 and sign < 0:
                    return PSub(a, b)
                if sign > 0:
                    return PSub(b, a)
                return PSub(PSub(PZERO, a), b)

            merged[i] = (1, PIte(term.cond, comb(t2.then, term.then),
                                 comb(t2.other, term.other)))
        terms = _pv_to_terms(const) + merged
        out = _rebuild_sum(terms)
        return simplify_perm(out, context) if changed else out
    if isinstance(p, (PMin, PMax)):
        is_max = isinstance(p, PMax)
        same = PMax if is_max else PMin
        # flatten the raw spine first so long chains are processed once,
        # then simplify each argument individually
        raw: list[PermExpr] = []
        stack = [p.right, p.left]
        while stack:
            q = stack.pop()
            if isinstance(q, same):
                stack.append(q.right)
                stack.append(q.left)
            else:
                raw.append(q)
        args: list[PermExpr] = []
        for q in raw:
            q = simplify_perm(q, context)
            parts = [q]
            while parts:
                r = parts.pop()
                if isinstance(r, same):
                    parts.append(r.right)
                    parts.append(r.left)
                elif r not in args:
                    args.append(r)
        bounds = [perm_bounds(a) for a in args]

        def dominated(i: int, candidates: Iterable[int]) -> bool:
            alo, ahi = bounds[i]
            for j in candidates:
                blo, bhi = bounds[j]
                if is_max:
                    if ahi is not None and blo is not None and ahi <= blo:
                        return True
                else:
                    if alo is not None and bhi is not None and alo >= bhi:
                        return True
            return False

        kept_idx: list[int] = []
        for i in range(len(args)):
            if dominated(i, kept_idx):
                continue
            if dominated(i, range(i + 1, len(args))):
                continue
            kept_idx.append(i)
        kept = [args[i] for i in kept_idx] or args[:1]
        # balanced rebuild keeps evaluation depth logarithmic
        while len(kept) > 1:
            nxt = []
            for i in range(0, len(kept) - 1, 2):
                nxt.append(PMax(kept[i], kept[i + 1]) if is_max
                           else PMin(kept[i], kept[i + 1]))
            if len(kept) % 2:
                nxt.append(kept[-1])
            kept = nxt
        return kept[0]
    if isinstance(p, PIte):
        cond = simplify_bool(p.cond, context)
        if cond == TRUE:
            return simplify_perm(p.then, context)
        if cond == FALSE:
            return simplify_perm(p.other, context)
        then_ctx = context + tuple(c for c in _flat_and(cond) if _usable_ctx(c))
        neg = nnf(Not(cond))
        other_ctx = context + ((neg,) if _usable_ctx(neg) else ())
        then = simplify_perm(p.then, then_ctx)
        other = simplify_perm(p.other, other_ctx)
        if then == other:
            return then
        return PIte(cond, then, other)
    if isinstance(p, PointwiseMax):
        shadowed = set(p.vars)
        ctx = tuple(c for c in context if not (free_vars(c) & shadowed))
        guard = simplify_bool(p.guard, ctx)
        if guard == FALSE:
            return PZERO
        body_ctx = ctx + tuple(c for c in _flat_and(guard) if _usable_ctx(c))
        body = simplify_perm(p.body, body_ctx)
        if body == PZERO:
            return PZERO
        return PointwiseMax(p.vars, guard, body)
    return p


def _usable_ctx(b: BoolExpr) -> bool:
    return isinstance(b, (Cmp, Divides, NotDivides, And, Or))


# ---------------------------------------------------------------------------
# Coefficient normalization for a single variable (stretching)
# ---------------------------------------------------------------------------

def coefficient_lcm(b: BoolExpr, x: str) -> int:
    """lcm of |coefficients| of x across all literals of b."""
    out = 1
    for lit in _literals(b):
        c = _x_coefficient(lit, x)
        if c:
            out = out * c // gcd(out, c)
    return out


def _literals(b: BoolExpr) -> list[BoolExpr]:
    if isinstance(b, (And, Or)):
        return _literals(b.left) + _literals(b.right)
    if isinstance(b, Not):
        return _literals(b.arg)
    return [b]


def _x_coefficient(lit: BoolExpr, x: str) -> int:
    if isinstance(lit, Cmp):
        lin = linearize(Sub(lit.left, lit.right))
    elif isinstance(lit, (Divides, NotDivides)):
        lin = linearize(lit.arg)
    else:
        return 0
    for a, c in lin.terms:
        if a == Var(x):
            return abs(c)
        if not isinstance(a, (Var, ArrayVar, Length)) and x in free_vars(a):
            raise NonlinearError(f"{x} occurs non-linearly")
    return 0


def stretch_literals(b: BoolExpr, x: str, target: int) -> BoolExpr:
    """Rewrite every literal so x appears with coefficient exactly `target`,
    then substitute the stretched variable (x' = target * x) back as x with
    coefficient 1.  Caller conjoins the Divides(target, x) constraint."""
    if isinstance(b, And):
        return And(stretch_literals(b.left, x, target), stretch_literals(b.right, x, target))
    if isinstance(b, Or):
        return Or(stretch_literals(b.left, x, target), stretch_literals(b.right, x, target))
    if isinstance(b, Not):
        return Not(stretch_literals(b.arg, x, target))
    if isinstance(b, Cmp):
        lin = linearize(Sub(b.left, b.right))
        c = lin.coeff(Var(x))
        if c == 0:
            return b
        op = b.op
        rest = lin.drop(Var(x))
        # literal is c*x + rest op 0
        if c < 0:
            op = swap_cmp_op(op)     # rest op -c*x, i.e. (-c)*x swap(op) rest
            c = -c
        else:
            rest = rest.scale(-1)    # c*x op -rest
        # multiply both sides by target/c, then read target*x as x
        m = target // c
        rest = rest.scale(m)
        return Cmp(Var(x), op, linear_to_expr(rest))
    if isinstance(b, (Divides, NotDivides)):
        lin = linearize(b.arg)
        c = lin.coeff(Var(x))
        if c == 0:
            return b
        rest = lin.drop(Var(x))
        if c < 0:
            c, rest = -c, rest.scale(-1)
            # n | -t <=> n | t
        m = target // c
        arg = Linear(((Var(x), 1),), 0).add(rest.scale(m))
        n = b.divisor * m
        node = Divides if isinstance(b, Divides) else NotDivides
        return node(n, linear_to_expr(arg))
    return b


def normalize_coefficients(b: BoolExpr, x: str) -> tuple[BoolExpr, int]:
    """Isolate x with coefficient 1 in every literal of b.

    Returns the rewritten formula plus the stretch factor d; the caller is
    responsible for conjoining Divides(d, x) and the rewritten formula holds
    at d*v exactly when b holds at v.
    """
    d = coefficient_lcm(b, x)
    return stretch_literals(b, x, d), d
