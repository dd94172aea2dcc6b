"""Elimination of pointwise maximum expressions.

A pointwise maximum  max[x | b](p)  ranges over the unbounded set of integer
valuations of x satisfying b; this module rewrites it into an equivalent
expression with finitely many cases, assuming p is non-negative (which the
inference guarantees for the expressions it produces).

Pipeline per bound variable, innermost binder first:
  1. normalize the body into *simple* form: leaves ite(b, r, 0) with r a
     constant or rd, sums, subtraction only of leaves, min/max, and every
     literal mentioning x isolated with coefficient one (stretching by the
     common coefficient multiple, conjoining the matching divisibility
     constraint);
  2. split binary maxima into independent simple maxima;
  3. for each simple maximum, combine
       - boundary expressions: candidate smallest witnesses of x, each with
         a filter condition allowing it to be dropped when redundant, and
       - the left-infinite projection: the periodic value the expression
         takes for arbitrarily small x,
     into a finite maximum over substituted instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Iterable, Optional

from .expr import (
    Add, And, BoolConst, BoolExpr, Cmp, Divides, FALSE, Frac, IntConst,
    IntExpr, IntIte, Lookup, Mul, Not, NotDivides, Or, PAdd, PIte, PMax,
    PMin, PSub, PZERO, PermExpr, PermValue, PointwiseMax, Rd, Sub, TRUE,
    Var, contains_lookup, free_vars, node_count, substitute_var,
)
from fractions import Fraction as _Fraction

PV_ZERO_VALUE = PermValue(_Fraction(0), 0)
from .simplify import (
    coefficient_lcm, int_add, linearize, nnf, simplify_bool, simplify_perm,
    stretch_literals,
)

DEFAULT_FILTER_BUDGET = 64


class MaxElimError(Exception):
    """The expression falls outside the eliminable fragment."""


# ---------------------------------------------------------------------------
# Literal classification for simple boolean expressions over x
# ---------------------------------------------------------------------------

def _classify(lit: BoolExpr, x: str):
    """('free',) | ('cmp', op, e) with the literal meaning x op e |
    ('div', keep, n, e) meaning n | (x + e) (keep=False for non-divides)."""
    if isinstance(lit, Cmp):
        if x not in free_vars(lit):
            return ("free",)
        lin = linearize(Sub(lit.left, lit.right))
        c = lin.coeff(Var(x))
        rest = lin.drop(Var(x))
        if x in _lin_vars(rest):
            raise MaxElimError(f"literal not simple over {x}")
        if c == 0:
            return ("free",)  # x cancels out, e.g. x > x
        from .simplify import linear_to_expr
        if c == 1:
            return ("cmp", lit.op, linear_to_expr(rest.scale(-1)))
        if c == -1:
            # -x + r op 0 is r op x, i.e. x swap(op) r
            from .expr import swap_cmp_op
            return ("cmp", swap_cmp_op(lit.op), linear_to_expr(rest))
        raise MaxElimError(f"literal not simple over {x}: coefficient {c}")
    if isinstance(lit, (Divides, NotDivides)):
        if x not in free_vars(lit):
            return ("free",)
        lin = linearize(lit.arg)
        c = lin.coeff(Var(x))
        rest = lin.drop(Var(x))
        if x in _lin_vars(rest):
            raise MaxElimError(f"divisibility literal not simple over {x}")
        if c == 0:
            return ("free",)
        if abs(c) == 1:
            from .simplify import linear_to_expr
            if c == -1:
                rest = rest.scale(-1)  # n | -(x+e) <=> n | (x+e)
            return ("div", isinstance(lit, Divides), lit.divisor,
                    linear_to_expr(rest))
        raise MaxElimError(f"divisibility literal not simple over {x}")
    if isinstance(lit, BoolConst):
        return ("free",)
    if x in free_vars(lit):
        raise MaxElimError(f"unsupported literal over {x}: {type(lit).__name__}")
    return ("free",)


def _lin_vars(lin) -> set[str]:
    out: set[str] = set()
    for a, _ in lin.terms:
        out |= set(free_vars(a))
    return out


# ---------------------------------------------------------------------------
# Boundary expression selection (booleans)
# ---------------------------------------------------------------------------

def boundary_exprs(b: BoolExpr, x: str) -> tuple[list[IntExpr], int]:
    """Candidate smallest values of x making b true, with the divisor
    period: the represented set is {e + d | e in S, d in [0, delta-1]}."""
    if isinstance(b, And) or isinstance(b, Or):
        s1, d1 = boundary_exprs(b.left, x)
        s2, d2 = boundary_exprs(b.right, x)
        return _union(s1, s2), lcm(d1, d2)
    kind = _classify(b, x)
    if kind[0] == "free":
        return [], 1
    if kind[0] == "cmp":
        _, op, e = kind
        if op in ("==", ">="):
            return [e], 1
        if op in ("!=", ">"):
            return [int_add(e, 1)], 1
        return [], 1  # <=, <
    _, _, n, _ = kind
    return [], n


def _union(xs: list, ys: list) -> list:
    out = list(xs)
    for y in ys:
        if y not in out:
            out.append(y)
    return out


# ---------------------------------------------------------------------------
# Left-infinite projection
# ---------------------------------------------------------------------------

def left_infinite_bool(b: BoolExpr, x: str) -> tuple[BoolExpr, int]:
    """The stabilized form b takes for arbitrarily small x (depending on x
    only through divisibility literals), with its period."""
    if isinstance(b, And):
        l1, d1 = left_infinite_bool(b.left, x)
        l2, d2 = left_infinite_bool(b.right, x)
        return And(l1, l2), lcm(d1, d2)
    if isinstance(b, Or):
        l1, d1 = left_infinite_bool(b.left, x)
        l2, d2 = left_infinite_bool(b.right, x)
        return Or(l1, l2), lcm(d1, d2)
    kind = _classify(b, x)
    if kind[0] == "free":
        return b, 1
    if kind[0] == "cmp":
        _, op, _ = kind
        if op in ("==", ">=", ">"):
            return FALSE, 1
        return TRUE, 1  # !=, <=, <
    _, _, n, _ = kind
    return b, n


def left_infinite_perm(p: PermExpr, x: str) -> tuple[PermExpr, int]:
    if isinstance(p, PIte):
        b, d = left_infinite_bool(p.cond, x)
        return PIte(b, p.then, p.other), d
    if isinstance(p, PAdd):
        l1, d1 = left_infinite_perm(p.left, x)
        l2, d2 = left_infinite_perm(p.right, x)
        return PAdd(l1, l2), lcm(d1, d2)
    if isinstance(p, PSub):
        l1, d1 = left_infinite_perm(p.left, x)
        l2, d2 = left_infinite_perm(p.right, x)
        return PSub(l1, l2), lcm(d1, d2)
    if isinstance(p, PMax):
        l1, d1 = left_infinite_perm(p.left, x)
        l2, d2 = left_infinite_perm(p.right, x)
        return PMax(l1, l2), lcm(d1, d2)
    if isinstance(p, PMin):
        l1, d1 = left_infinite_perm(p.left, x)
        l2, d2 = left_infinite_perm(p.right, x)
        return PMin(l1, l2), lcm(d1, d2)
    return p, 1  # constants


# ---------------------------------------------------------------------------
# Positivity of simple permission expressions as a boolean
# ---------------------------------------------------------------------------

def perm_positive(p: PermExpr) -> BoolExpr:
    """A boolean implied by p > 0 (exact for subtraction-free simple p).

    Weakening towards true is sound here: the result is only used to keep
    extra boundary candidates.
    """
    if isinstance(p, PIte) and p.other == PZERO:
        r = p.then
        if isinstance(r, Rd):
            return p.cond
        if isinstance(r, Frac):
            return p.cond if r.value > 0 else FALSE
    if isinstance(p, Frac):
        return TRUE if p.value > 0 else FALSE
    if isinstance(p, Rd):
        return TRUE
    if isinstance(p, PAdd):
        # simple-form operands are subtraction-free, hence non-negative
        return Or(perm_positive(p.left), perm_positive(p.right))
    if isinstance(p, PMax):
        return Or(perm_positive(p.left), perm_positive(p.right))
    if isinstance(p, PMin):
        return And(perm_positive(p.left), perm_positive(p.right))
    if isinstance(p, PSub):
        return perm_positive(p.left)
    return TRUE


# ---------------------------------------------------------------------------
# Filtered boundary expressions (permissions)
# ---------------------------------------------------------------------------

@dataclass
class BoundarySet:
    entries: list[tuple[IntExpr, BoolExpr]]
    delta: int


def filtered_boundaries(p: PermExpr, x: str) -> BoundarySet:
    if isinstance(p, PIte):
        s, d = boundary_exprs(p.cond, x)
        return BoundarySet([(e, TRUE) for e in s], d)
    if isinstance(p, (PAdd, PMax, PMin)):
        b1 = filtered_boundaries(p.left, x)
        b2 = filtered_boundaries(p.right, x)
        return BoundarySet(_union_entries(b1.entries, b2.entries),
                           lcm(b1.delta, b2.delta))
    if isinstance(p, PSub):
        b1 = filtered_boundaries(p.left, x)
        leaf = p.right
        if not isinstance(leaf, PIte):
            raise MaxElimError("subtraction of a non-leaf in simple form")
        s2, d2 = boundary_exprs(nnf(Not(leaf.cond)), x)
        # boundaries that make the subtracted leaf false matter only while
        # the minuend can still be positive
        filt = perm_positive(p.left)
        extra = [(e, filt) for e in s2]
        return BoundarySet(_union_entries(b1.entries, extra), lcm(b1.delta, d2))
    if isinstance(p, (Frac, Rd)):
        return BoundarySet([], 1)
    raise MaxElimError(f"not a simple permission expression: {type(p).__name__}")


def _union_entries(xs: list, ys: list) -> list:
    out = list(xs)
    for y in ys:
        if y not in out:
            out.append(y)
    return out


def filtered_boundaries_pair(p: PermExpr, b: BoolExpr, x: str,
                             filter_budget: int = DEFAULT_FILTER_BUDGET) -> BoundarySet:
    """Boundary candidates for max[x | b](p): those of p, plus those of b
    filtered by the cases in which p's own candidates cannot witness the
    maximum."""
    bp = filtered_boundaries(p, x)
    sb, db = boundary_exprs(b, x)
    delta = lcm(bp.delta, db)
    b_inf, _ = left_infinite_bool(b, x)
    p_inf, _ = left_infinite_perm(p, x)
    not_b_inf = nnf(Not(b_inf))
    pos_p_inf = perm_positive(p_inf)
    not_b = nnf(Not(b))

    if not sb:
        return BoundarySet(bp.entries, delta)
    base_cost = And(not_b_inf, pos_p_inf)
    raw_size = (delta * node_count(base_cost)
                + len(bp.entries) * bp.delta * (node_count(not_b) + 4))
    if raw_size > 8 * filter_budget:
        # the delta-indexed disjunction would explode; weaken up front
        extra = [(e_b, TRUE) for e_b in sb]
        return BoundarySet(_union_entries(bp.entries, extra), delta)
    disjuncts: list[BoolExpr] = []
    for d in range(delta):
        disjuncts.append(substitute_var(base_cost, x, IntConst(d)))
    for (e_p, b_p) in bp.entries:
        for d_p in range(bp.delta):
            inst = int_add(e_p, d_p)
            term = And(not_b, b_p)
            disjuncts.append(substitute_var(term, x, inst))
    filt: BoolExpr = FALSE
    for dj in disjuncts:
        filt = dj if filt == FALSE else Or(filt, dj)
    filt = simplify_bool(filt)
    if node_count(filt) > filter_budget:
        filt = TRUE  # sound: keeps the boundary candidate unconditionally
    extra = [(e_b, filt) for e_b in sb]
    return BoundarySet(_union_entries(bp.entries, extra), delta)


# ---------------------------------------------------------------------------
# Normalization to simple form
# ---------------------------------------------------------------------------

def _as_leaf(guard: BoolExpr, r: PermExpr) -> PermExpr:
    return PIte(guard, r, PZERO)


def _is_atom(p: PermExpr) -> bool:
    return isinstance(p, (Frac, Rd))


def _push_guard(guard: BoolExpr, p: PermExpr) -> PermExpr:
    """ite(guard, p, 0) normalized by pushing the guard into p's leaves."""
    if guard == FALSE or p == PZERO or (isinstance(p, Frac) and p.value == 0):
        return PZERO
    if guard == TRUE:
        return p
    if _is_atom(p):
        return _as_leaf(guard, p)
    if isinstance(p, PIte):
        # p is ite(b, p1, p2): split into guarded branches
        gt = _and(guard, p.cond)
        ge = _and(guard, nnf(Not(p.cond)))
        then = _push_guard(gt, p.then)
        other = _push_guard(ge, p.other)
        return _sum(then, other)
    if isinstance(p, PAdd):
        return _sum(_push_guard(guard, p.left), _push_guard(guard, p.right))
    if isinstance(p, PSub):
        return PSub(_push_guard(guard, p.left), _push_guard(guard, p.right))
    if isinstance(p, PMax):
        return PMax(_push_guard(guard, p.left), _push_guard(guard, p.right))
    if isinstance(p, PMin):
        return PMin(_push_guard(guard, p.left), _push_guard(guard, p.right))
    raise MaxElimError(f"cannot normalize {type(p).__name__}")


def _and(a: BoolExpr, b: BoolExpr) -> BoolExpr:
    if a == TRUE:
        return b
    if b == TRUE:
        return a
    if a == FALSE or b == FALSE:
        return FALSE
    return And(a, b)


def _sum(a: PermExpr, b: PermExpr) -> PermExpr:
    if a == PZERO:
        return b
    if b == PZERO:
        return a
    return PAdd(a, b)


def _normalize_body(p: PermExpr) -> PermExpr:
    """Rewrite into leaves/sums/subtractions/min/max with no conditional
    whose branches are compound, and no ite with a non-zero else branch."""
    if _is_atom(p):
        return _as_leaf(TRUE, p) if not (isinstance(p, Frac) and p.value == 0) else PZERO
    if isinstance(p, PIte):
        then = _push_guard(p.cond, _normalize_body(p.then))
        other = _push_guard(nnf(Not(p.cond)), _normalize_body(p.other))
        return _sum(then, other)
    if isinstance(p, PAdd):
        return _sum(_normalize_body(p.left), _normalize_body(p.right))
    if isinstance(p, PSub):
        return PSub(_normalize_body(p.left), _normalize_body(p.right))
    if isinstance(p, PMax):
        return PMax(_normalize_body(p.left), _normalize_body(p.right))
    if isinstance(p, PMin):
        return PMin(_normalize_body(p.left), _normalize_body(p.right))
    if isinstance(p, PointwiseMax):
        raise MaxElimError("nested pointwise maximum must be eliminated first")
    raise MaxElimError(f"cannot normalize {type(p).__name__}")


def _distribute(p: PermExpr) -> PermExpr:
    """Push + and - over max/min so that subtraction chains only subtract
    leaves and additions never contain subtractions."""
    if isinstance(p, PAdd):
        a = _distribute(p.left)
        b = _distribute(p.right)
        for first, second, flip in ((a, b, False), (b, a, True)):
            if isinstance(first, PMax):
                return _distribute(PMax(PAdd(first.left, second), PAdd(first.right, second)))
            if isinstance(first, PMin):
                return _distribute(PMin(PAdd(first.left, second), PAdd(first.right, second)))
        # (p1 - l) + p2  ->  (p1 + p2) - l
        if isinstance(a, PSub):
            return _distribute(PSub(PAdd(a.left, b), a.right))
        if isinstance(b, PSub):
            return _distribute(PSub(PAdd(a, b.left), b.right))
        return PAdd(a, b)
    if isinstance(p, PSub):
        a = _distribute(p.left)
        b = _distribute(p.right)
        if isinstance(b, PMax):
            return _distribute(PMin(PSub(a, b.left), PSub(a, b.right)))
        if isinstance(b, PMin):
            return _distribute(PMax(PSub(a, b.left), PSub(a, b.right)))
        if isinstance(b, PAdd):
            return _distribute(PSub(PSub(a, b.left), b.right))
        if isinstance(b, PSub):
            # a - (p - l) = (a + l) - p
            return _distribute(PSub(PAdd(a, b.right), b.left))
        if isinstance(a, PMax):
            return _distribute(PMax(PSub(a.left, b), PSub(a.right, b)))
        if isinstance(a, PMin):
            return _distribute(PMin(PSub(a.left, b), PSub(a.right, b)))
        if b == PZERO:
            return a
        return PSub(a, b)
    if isinstance(p, PMax):
        return PMax(_distribute(p.left), _distribute(p.right))
    if isinstance(p, PMin):
        return PMin(_distribute(p.left), _distribute(p.right))
    return p


def _split_max(p: PermExpr) -> list[PermExpr]:
    if isinstance(p, PMax):
        return _split_max(p.left) + _split_max(p.right)
    return [p]


def _hoist_ite_literals(b: BoolExpr, x: str) -> BoolExpr:
    """Lift integer conditionals out of comparisons that mention x, so the
    remaining literals are linear."""
    if isinstance(b, (And, Or, Not)):
        from .expr import _rebuild
        return _rebuild(b, lambda c: _hoist_ite_literals(c, x)
                        if isinstance(c, BoolExpr) else c)
    if isinstance(b, (Cmp, Divides, NotDivides)) and x in free_vars(b):
        ite = _find_int_ite(b)
        if ite is not None:
            then_lit = _replace_int_ite(b, ite, ite.then)
            other_lit = _replace_int_ite(b, ite, ite.other)
            return Or(And(ite.cond, _hoist_ite_literals(then_lit, x)),
                      And(nnf(Not(ite.cond)), _hoist_ite_literals(other_lit, x)))
    return b


def _find_int_ite(b: BoolExpr) -> Optional[IntIte]:
    found: list[IntIte] = []

    def scan(e) -> None:
        if isinstance(e, IntIte) and not found:
            found.append(e)
            return
        from .expr import _children
        for c in _children(e):
            if not found:
                scan(c)

    scan(b)
    return found[0] if found else None


def _replace_int_ite(b: BoolExpr, target: IntIte, replacement: IntExpr) -> BoolExpr:
    def go(e):
        if e == target:
            return replacement
        if isinstance(e, (IntConst, Var)):
            return e
        from .expr import _rebuild, ArrayVar, Length, BoolConst, Frac, Rd
        if isinstance(e, (ArrayVar, Length, BoolConst, Frac, Rd)):
            return e
        return _rebuild(e, go)
    return go(b)


def _leaf_guards(p: PermExpr) -> list[BoolExpr]:
    if isinstance(p, PIte):
        return [p.cond]
    if isinstance(p, (PAdd, PSub, PMin, PMax)):
        return _leaf_guards(p.left) + _leaf_guards(p.right)
    return []


def _map_leaf_guards(p: PermExpr, f) -> PermExpr:
    if isinstance(p, PIte):
        return PIte(f(p.cond), p.then, p.other)
    if isinstance(p, PAdd):
        return PAdd(_map_leaf_guards(p.left, f), _map_leaf_guards(p.right, f))
    if isinstance(p, PSub):
        return PSub(_map_leaf_guards(p.left, f), _map_leaf_guards(p.right, f))
    if isinstance(p, PMin):
        return PMin(_map_leaf_guards(p.left, f), _map_leaf_guards(p.right, f))
    if isinstance(p, PMax):
        return PMax(_map_leaf_guards(p.left, f), _map_leaf_guards(p.right, f))
    return p


def to_simple(x: str, guard: BoolExpr, body: PermExpr) -> list[tuple[BoolExpr, PermExpr]]:
    """Reduce max[x | guard](body) to a list of simple maxima whose binary
    maximum is equivalent.

    Binary maxima distribute over the pointwise maximum; a conditional whose
    guard mentions x splits the range into the guard's two cases.  Remaining
    conditionals are pushed into the leaves.  Finally literals are stretched
    so x has coefficient one, conjoining the matching divisibility
    constraint.
    """
    guard = _hoist_ite_literals(nnf(guard), x)
    work: list[tuple[BoolExpr, PermExpr]] = [(guard, body)]
    flat: list[tuple[BoolExpr, PermExpr]] = []
    while work:
        g, p = work.pop()
        if g == FALSE:
            continue
        if isinstance(p, PMax):
            work.append((g, p.left))
            work.append((g, p.right))
            continue
        is_leaf = (isinstance(p, PIte) and _is_atom(p.then)
                   and (p.other == PZERO
                        or (isinstance(p.other, Frac) and p.other.value == 0)))
        if isinstance(p, PIte) and not is_leaf:
            cond = _hoist_ite_literals(nnf(p.cond), x)
            if x in free_vars(cond):
                work.append((_and(g, cond), p.then))
                work.append((_and(g, nnf(Not(cond))), p.other))
                continue
        p2 = _map_leaf_guards(_normalize_body(p),
                              lambda lg: _hoist_ite_literals(nnf(lg), x))
        p2 = _distribute(p2)
        if isinstance(p2, PMax):
            work.append((g, p2.left))
            work.append((g, p2.right))
            continue
        flat.append((g, p2))
    out: list[tuple[BoolExpr, PermExpr]] = []
    for g, branch in flat:
        stretch = coefficient_lcm(g, x)
        for lg in _leaf_guards(branch):
            stretch = lcm(stretch, coefficient_lcm(lg, x))
        g2 = stretch_literals(g, x, stretch)
        b2 = _map_leaf_guards(branch, lambda lg: stretch_literals(lg, x, stretch))
        if stretch > 1:
            g2 = _and(g2, Divides(stretch, Var(x)))
        out.append((g2, b2))
    return out


# ---------------------------------------------------------------------------
# Main elimination
# ---------------------------------------------------------------------------

def _surely_false(b: BoolExpr) -> bool:
    """Cheap refutation: some top-level conjunct is constantly false."""
    from .simplify import _eval_const_literal
    for conj in _conjuncts(b):
        if isinstance(conj, (Cmp, Divides, NotDivides, BoolConst)):
            if _eval_const_literal(conj) is False:
                return True
    return False


# above this many instantiated terms, per-term simplification drops to
# constant folding; cross-literal reasoning on hundreds of near-identical
# conditions costs far more than it saves
LIGHT_TERM_THRESHOLD = 24


def _balanced_max(args: list[PermExpr]) -> PermExpr:
    """Balanced binary maximum, keeping tree depth logarithmic so that
    evaluation of very wide results stays within recursion limits."""
    work = list(args)
    while len(work) > 1:
        nxt = []
        for i in range(0, len(work) - 1, 2):
            nxt.append(PMax(work[i], work[i + 1]))
        if len(work) % 2:
            nxt.append(work[-1])
        work = nxt
    return work[0]


def _light_bool(b: BoolExpr) -> BoolExpr:
    from .simplify import _eval_const_literal
    parts: list[BoolExpr] = []
    for conj in _conjuncts(b):
        if isinstance(conj, (Cmp, Divides, NotDivides, BoolConst)):
            cv = _eval_const_literal(conj)
            if cv is False:
                return FALSE
            if cv is True:
                continue
        if conj not in parts:
            parts.append(conj)
    out: BoolExpr = TRUE
    for p in parts:
        out = _and(out, p)
    return out


def _light_perm(p: PermExpr) -> PermExpr:
    if isinstance(p, PIte):
        cond = _light_bool(p.cond)
        if cond == TRUE:
            return _light_perm(p.then)
        if cond == FALSE:
            return _light_perm(p.other)
        return PIte(cond, _light_perm(p.then), _light_perm(p.other))
    if isinstance(p, PAdd):
        return _sum(_light_perm(p.left), _light_perm(p.right))
    if isinstance(p, PSub):
        left, right = _light_perm(p.left), _light_perm(p.right)
        if right == PZERO:
            return left
        return PSub(left, right)
    if isinstance(p, PMax):
        # iterate the spine; wide maxima would overflow plain recursion
        args: list[PermExpr] = []
        stack = [p]
        while stack:
            q = stack.pop()
            if isinstance(q, PMax):
                stack.append(q.right)
                stack.append(q.left)
            else:
                args.append(_light_perm(q))
        kept: list[PermExpr] = []
        for a in args:
            if a not in kept:
                kept.append(a)
        if PZERO in kept and len(kept) > 1:
            # max(0, rest...) keeps its value without the 0 as soon as some
            # argument is non-negative everywhere
            from .simplify import perm_bounds
            rest = [k for k in kept if k != PZERO]
            if any(perm_bounds(k)[0] is not None
                   and perm_bounds(k)[0] >= PV_ZERO_VALUE for k in rest):
                kept = rest
        if not kept:
            return PZERO
        return _balanced_max(kept)
    if isinstance(p, PMin):
        left, right = _light_perm(p.left), _light_perm(p.right)
        if left == right:
            return left
        return PMin(left, right)
    return p


def _instantiated_terms(x: str, b: BoolExpr, p: PermExpr,
               filter_budget: int) -> tuple[list[PermExpr], bool]:
    bs = filtered_boundaries_pair(p, b, x, filter_budget)
    b_inf, d1 = left_infinite_bool(b, x)
    p_inf, d2 = left_infinite_perm(p, x)
    light = len(bs.entries) * bs.delta + lcm(d1, d2) > LIGHT_TERM_THRESHOLD

    def finish(cond: BoolExpr, body: PermExpr) -> PermExpr:
        if light:
            cond = _light_bool(cond)
            if cond == FALSE:
                return PZERO
            body = _light_perm(body)
            if body == PZERO:
                return PZERO
            return PIte(cond, body, PZERO) if cond != TRUE else body
        return simplify_perm(PIte(cond, body, PZERO))

    terms: list[PermExpr] = []
    seen: set[PermExpr] = set()
    for (e, bfilt) in bs.entries:
        for d in range(bs.delta):
            inst = int_add(e, d)
            inst_b = substitute_var(b, x, inst)
            if _surely_false(inst_b):
                continue
            # filters are conditions on the witness value, so they are
            # instantiated at e + d as well (subtraction-case filters
            # mention the eliminated variable)
            cond = _and(substitute_var(bfilt, x, inst), inst_b)
            term = finish(cond, substitute_var(p, x, inst))
            if term != PZERO and term not in seen:
                seen.add(term)
                terms.append(term)
    for d in range(lcm(d1, d2)):
        cond = substitute_var(b_inf, x, IntConst(d))
        if _surely_false(cond):
            continue
        term = finish(cond, substitute_var(p_inf, x, IntConst(d)))
        if term != PZERO and term not in seen:
            seen.add(term)
            terms.append(term)
    return terms, light


def _eliminate_single(x: str, guard: BoolExpr, body: PermExpr,
                      filter_budget: int) -> PermExpr:
    guard = simplify_bool(guard)
    body = simplify_perm(body)
    fv = free_vars(guard) | free_vars(body)
    if x not in fv:
        # constant in x: value is body on a non-empty range, 0 otherwise
        return simplify_perm(PIte(guard, body, PZERO))
    if contains_lookup(guard) or contains_lookup(body):
        raise MaxElimError(
            "array lookup under a pointwise maximum; approximate first")
    terms: list[PermExpr] = []
    any_light = False
    for (g, p) in to_simple(x, guard, body):
        branch_terms, light = _instantiated_terms(x, g, p, filter_budget)
        terms.extend(branch_terms)
        any_light = any_light or light
    # fold with 0 included: the maximum is never negative (empty range is 0,
    # and the analysis only feeds non-negative bodies)
    out = _balanced_max([PZERO] + terms)
    if any_light:
        # wide eliminations skip the final deep pass; the result is
        # equivalent, just less compact
        return _light_perm(out)
    return simplify_perm(out)


def eliminate(node: PointwiseMax,
              filter_budget: int = DEFAULT_FILTER_BUDGET) -> PermExpr:
    """Replace one pointwise maximum (with an already max-free body) by an
    equivalent max-free expression; binders are eliminated innermost-first.
    """
    if contains_nested(node.body):
        raise MaxElimError("inner pointwise maxima must be eliminated first")
    binders = list(node.vars)
    guard = node.guard
    body = node.body
    closed: list[BoolExpr] = []
    while binders:
        x = binders.pop()  # innermost binder last in the tuple
        remaining = set(binders)
        inner_conjs: list[BoolExpr] = []
        outer_conjs: list[BoolExpr] = []
        for conj in _conjuncts(guard):
            fv = free_vars(conj)
            if x in fv:
                inner_conjs.append(conj)
            elif fv & remaining:
                outer_conjs.append(conj)
            else:
                closed.append(conj)
        inner_guard = TRUE
        for c in inner_conjs:
            inner_guard = _and(inner_guard, c)
        body = _eliminate_single(x, inner_guard, body, filter_budget)
        guard = TRUE
        for c in outer_conjs:
            guard = _and(guard, c)
    result = body
    for c in closed:
        result = PIte(c, result, PZERO)
    if node_count(result) > 12 * DEFAULT_FILTER_BUDGET:
        return _light_perm(result)
    return simplify_perm(result)


def _conjuncts(b: BoolExpr) -> list[BoolExpr]:
    if isinstance(b, And):
        return _conjuncts(b.left) + _conjuncts(b.right)
    if b == TRUE:
        return []
    return [b]


def contains_nested(p: PermExpr) -> bool:
    from .expr import contains_pointwise_max
    return contains_pointwise_max(p)


def eliminate_all(p: PermExpr,
                  filter_budget: int = DEFAULT_FILTER_BUDGET) -> PermExpr:
    """Eliminate every pointwise maximum in p, bottom-up."""
    from .expr import _rebuild

    def go(e):
        if isinstance(e, PointwiseMax):
            inner = PointwiseMax(e.vars, go(e.guard), go(e.body))
            return eliminate(inner, filter_budget)
        if isinstance(e, (IntConst, Var, Frac, Rd, BoolConst)):
            return e
        from .expr import ArrayVar, Length
        if isinstance(e, (ArrayVar, Length)):
            return e
        return _rebuild(e, go)

    return simplify_perm(go(p))
