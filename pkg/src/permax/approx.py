"""Over- and under-approximation of boolean and permission expressions.

These operators abstract away dependence on array contents so loop
summarization never needs an array value analysis.  The plain pair
(over_bool/under_bool, over_perm/under_perm) replaces every comparison that
mentions an array lookup by a constant truth value; the havoc pair only
abstracts comparisons whose lookups may alias one given location a[e].

Guarantees, in every state:
    under_bool(b) implies b implies over_bool(b)
    under_perm(p) <= p <= over_perm(p)
and havoc results are insensitive to the heap value at (a, e).
"""

from __future__ import annotations

from typing import Optional

from .expr import (
    And, ArrayVar, BoolConst, BoolExpr, Cmp, Divides, FALSE, IntExpr, Lookup,
    Not, NotDivides, Or, PAdd, PIte, PMax, PMin, PSub, PZERO, PermExpr,
    PointwiseMax, TRUE, contains_lookup, Frac, Rd,
)
from .simplify import nnf, simplify_bool, simplify_perm


def _collect_lookups(e: IntExpr, out: list[Lookup]) -> None:
    from .expr import _children
    if isinstance(e, Lookup):
        out.append(e)
    for c in _children(e):
        _collect_lookups(c, out)  # type: ignore[arg-type]


def _havoc_alias_cond(lit: BoolExpr, array: str, index: IntExpr) -> Optional[BoolExpr]:
    """Disjunction over lookups a'[e'] in the literal of (a' = a and e' = e),
    or None when the literal contains no lookups."""
    lookups: list[Lookup] = []
    if isinstance(lit, Cmp):
        _collect_lookups(lit.left, lookups)
        _collect_lookups(lit.right, lookups)
    elif isinstance(lit, (Divides, NotDivides)):
        _collect_lookups(lit.arg, lookups)
    if not lookups:
        return None
    cond: Optional[BoolExpr] = None
    seen: set[Lookup] = set()
    for lk in lookups:
        if lk in seen:
            continue
        seen.add(lk)
        eq = And(Cmp(ArrayVar(lk.array), "==", ArrayVar(array)),
                 Cmp(lk.index, "==", index))
        cond = eq if cond is None else Or(cond, eq)
    return cond


class _Approx:
    """Shared recursion for the plain and havoc variants.

    A literal is weakened when `self.affected(lit)` returns a non-None
    condition; the plain variant returns TRUE for literals with any lookup
    (weakening unconditionally), havoc returns the alias condition.
    """

    def __init__(self, array: Optional[str] = None, index: Optional[IntExpr] = None):
        self.array = array
        self.index = index

    def affected(self, lit: BoolExpr) -> Optional[BoolExpr]:
        if self.array is None:
            has = False
            if isinstance(lit, Cmp):
                has = contains_lookup(lit.left) or contains_lookup(lit.right)
            elif isinstance(lit, (Divides, NotDivides)):
                has = contains_lookup(lit.arg)
            return TRUE if has else None
        return _havoc_alias_cond(lit, self.array, self.index)

    # -- booleans -----------------------------------------------------------

    def over_bool(self, b: BoolExpr) -> BoolExpr:
        if isinstance(b, BoolConst):
            return b
        if isinstance(b, (Cmp, Divides, NotDivides)):
            cond = self.affected(b)
            if cond is None:
                return b
            if cond == TRUE:
                return TRUE
            # ite(cond, true, b) spelled as (!cond or true) and (cond or b)
            return And(Or(nnf(Not(cond)), TRUE), Or(cond, b))
        if isinstance(b, And):
            return And(self.over_bool(b.left), self.over_bool(b.right))
        if isinstance(b, Or):
            return Or(self.over_bool(b.left), self.over_bool(b.right))
        if isinstance(b, Not):
            return Not(self.under_bool(b.arg))
        return b

    def under_bool(self, b: BoolExpr) -> BoolExpr:
        if isinstance(b, BoolConst):
            return b
        if isinstance(b, (Cmp, Divides, NotDivides)):
            cond = self.affected(b)
            if cond is None:
                return b
            if cond == TRUE:
                return FALSE
            # ite(cond, false, b)
            return And(Or(nnf(Not(cond)), FALSE), Or(cond, b))
        if isinstance(b, And):
            return And(self.under_bool(b.left), self.under_bool(b.right))
        if isinstance(b, Or):
            return Or(self.under_bool(b.left), self.under_bool(b.right))
        if isinstance(b, Not):
            return Not(self.over_bool(b.arg))
        return b

    # -- permissions ---------------------------------------------------------

    def over_perm(self, p: PermExpr) -> PermExpr:
        if isinstance(p, (Frac, Rd)):
            return p
        if isinstance(p, PAdd):
            return PAdd(self.over_perm(p.left), self.over_perm(p.right))
        if isinstance(p, PSub):
            return PSub(self.over_perm(p.left), self.under_perm(p.right))
        if isinstance(p, PMin):
            return PMin(self.over_perm(p.left), self.over_perm(p.right))
        if isinstance(p, PMax):
            return PMax(self.over_perm(p.left), self.over_perm(p.right))
        if isinstance(p, PIte):
            ob = self.over_bool(p.cond)
            ub = self.under_bool(p.cond)
            if ob == ub:
                # guard untouched by the approximation
                return PIte(p.cond, self.over_perm(p.then), self.over_perm(p.other))
            onb = self.over_bool(nnf(Not(p.cond)))
            return PMax(PIte(ob, self.over_perm(p.then), PZERO),
                        PIte(onb, self.over_perm(p.other), PZERO))
        if isinstance(p, PointwiseMax):
            return PointwiseMax(p.vars, self.over_bool(p.guard), self.over_perm(p.body))
        return p

    def under_perm(self, p: PermExpr) -> PermExpr:
        if isinstance(p, (Frac, Rd)):
            return p
        if isinstance(p, PAdd):
            return PAdd(self.under_perm(p.left), self.under_perm(p.right))
        if isinstance(p, PSub):
            return PSub(self.under_perm(p.left), self.over_perm(p.right))
        if isinstance(p, PMin):
            return PMin(self.under_perm(p.left), self.under_perm(p.right))
        if isinstance(p, PMax):
            return PMax(self.under_perm(p.left), self.under_perm(p.right))
        if isinstance(p, PIte):
            ob = self.over_bool(p.cond)
            ub = self.under_bool(p.cond)
            then = self.under_perm(p.then)
            other = self.under_perm(p.other)
            if ob == ub:
                return PIte(p.cond, then, other)
            # guard may flip either way: definitely-then / maybe / definitely-else
            return PIte(ub, then, PIte(ob, PMin(then, other), other))
        if isinstance(p, PointwiseMax):
            return PointwiseMax(p.vars, self.under_bool(p.guard), self.under_perm(p.body))
        return p


_PLAIN = _Approx()


def over_bool(b: BoolExpr) -> BoolExpr:
    return simplify_bool(_PLAIN.over_bool(b))


def under_bool(b: BoolExpr) -> BoolExpr:
    return simplify_bool(_PLAIN.under_bool(b))


def over_perm(p: PermExpr) -> PermExpr:
    return simplify_perm(_PLAIN.over_perm(p))


def under_perm(p: PermExpr) -> PermExpr:
    return simplify_perm(_PLAIN.under_perm(p))


def havoc_over_bool(b: BoolExpr, array: str, index: IntExpr) -> BoolExpr:
    return simplify_bool(_Approx(array, index).over_bool(b))


def havoc_under_bool(b: BoolExpr, array: str, index: IntExpr) -> BoolExpr:
    return simplify_bool(_Approx(array, index).under_bool(b))


def havoc_over(p: PermExpr, array: str, index: IntExpr) -> PermExpr:
    return simplify_perm(_Approx(array, index).over_perm(p))


def havoc_under(p: PermExpr, array: str, index: IntExpr) -> PermExpr:
    return simplify_perm(_Approx(array, index).under_perm(p))
