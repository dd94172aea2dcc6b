"""Random generators shared by the property and acceptance tests."""

from __future__ import annotations

import random
from fractions import Fraction

from permax.expr import (
    Add, And, ArrayVar, BoolExpr, Cmp, Divides, Frac, Heap, IntConst,
    IntExpr, Lookup, Mul, NotDivides, Or, PAdd, PIte, PMax, PMin, PSub,
    PZERO, PermExpr, PermValue, PONE, PV_ZERO, Rd, Sub, Var, eval_bool,
    eval_perm,
)
from permax.frontend import (
    AssignVar, Exhale, If, Inhale, LoadElem, Seq, Skip, SourceSpan,
    StoreElem, Stmt, VarDecl,
)

SPAN = SourceSpan("<gen>", 0, 0)

FREE_VARS = ["i", "n", "m"]
AMOUNTS = [Fraction(1, 4), Fraction(1, 2), Fraction(1), Fraction(3, 4)]


# ---------------------------------------------------------------------------
# Simple maxima for elimination testing (depth <= 4, <= 2 divisibility
# literals, coefficients <= 3)
# ---------------------------------------------------------------------------

class SimpleMaxGen:
    def __init__(self, rng: random.Random, var: str = "x"):
        self.rng = rng
        self.var = var
        self.div_budget = 2

    def int_expr(self, depth: int = 0) -> IntExpr:
        r = self.rng.random()
        if r < 0.45 or depth >= 2:
            return IntConst(self.rng.randint(-4, 4))
        if r < 0.85:
            return Var(self.rng.choice(FREE_VARS))
        return Add(self.int_expr(depth + 1), self.int_expr(depth + 1))

    def literal(self) -> BoolExpr:
        use_div = self.div_budget > 0 and self.rng.random() < 0.25
        coeff = self.rng.randint(1, 3)
        lhs: IntExpr = Var(self.var) if coeff == 1 else Mul(coeff, Var(self.var))
        if self.rng.random() < 0.3:
            lhs = Add(lhs, self.int_expr())
        if use_div:
            self.div_budget -= 1
            n = self.rng.choice([2, 3])
            node = Divides if self.rng.random() < 0.5 else NotDivides
            return node(n, lhs)
        op = self.rng.choice(["==", "!=", "<", "<=", ">", ">="])
        return Cmp(lhs, op, self.int_expr())

    def bool_expr(self, depth: int = 0) -> BoolExpr:
        if depth >= 2 or self.rng.random() < 0.5:
            return self.literal()
        ctor = self.rng.choice([And, Or])
        return ctor(self.bool_expr(depth + 1), self.bool_expr(depth + 1))

    def leaf(self) -> PermExpr:
        r = self.rng.random()
        amount: PermExpr = Rd() if r < 0.25 else Frac(self.rng.choice(AMOUNTS))
        return PIte(self.bool_expr(), amount, PZERO)

    def perm_expr(self, depth: int = 0, allow_sub: bool = True) -> PermExpr:
        r = self.rng.random()
        if depth >= 3 or r < 0.45:
            return self.leaf()
        if r < 0.62:
            return PAdd(self.perm_expr(depth + 1, False),
                        self.perm_expr(depth + 1, False))
        if r < 0.78:
            return PMax(self.perm_expr(depth + 1), self.perm_expr(depth + 1))
        if r < 0.88:
            return PMin(self.perm_expr(depth + 1), self.perm_expr(depth + 1))
        if allow_sub:
            return PSub(self.perm_expr(depth + 1, False), self.leaf())
        return self.leaf()

    def case(self) -> tuple[BoolExpr, PermExpr]:
        self.div_budget = 2
        return self.bool_expr(), self.perm_expr()


def random_env(rng: random.Random, lo: int = -8, hi: int = 8) -> dict[str, int]:
    return {v: rng.randint(lo, hi) for v in FREE_VARS}


def naive_max(guard: BoolExpr, body: PermExpr, env: dict, var: str = "x",
              lo: int = -80, hi: int = 80) -> PermValue:
    best = PV_ZERO
    scratch = dict(env)
    for v in range(lo, hi + 1):
        scratch[var] = v
        if eval_bool(guard, scratch):
            val = eval_perm(body, scratch)
            if val > best:
                best = val
    return best


# ---------------------------------------------------------------------------
# Random loop-free programs for interpreter-based soundness fuzzing
# ---------------------------------------------------------------------------

INT_VARS = ["x", "y", "z"]
ARRAYS = ["a", "b"]


class ProgramGen:
    def __init__(self, rng: random.Random, allow_inhale: bool = True):
        self.rng = rng
        self.allow_inhale = allow_inhale

    def index_expr(self) -> IntExpr:
        r = self.rng.random()
        if r < 0.4:
            return IntConst(self.rng.randint(-1, 6))
        v = Var(self.rng.choice(INT_VARS))
        if r < 0.7:
            return v
        return Add(v, IntConst(self.rng.randint(-2, 3)))

    def value_expr(self) -> IntExpr:
        r = self.rng.random()
        if r < 0.5:
            return IntConst(self.rng.randint(-5, 5))
        v = Var(self.rng.choice(INT_VARS))
        if r < 0.8:
            return v
        return Add(Mul(self.rng.randint(-2, 2), v), IntConst(self.rng.randint(-3, 3)))

    def guard(self) -> BoolExpr:
        op = self.rng.choice(["==", "!=", "<", "<=", ">", ">="])
        lhs = Var(self.rng.choice(INT_VARS))
        if self.rng.random() < 0.3:
            return Divides(2, lhs)
        return Cmp(lhs, op, self.value_expr())

    def amount(self) -> PermExpr:
        r = self.rng.random()
        if r < 0.3:
            return Rd()
        return Frac(self.rng.choice(AMOUNTS))

    def stmt(self, depth: int = 0) -> Stmt:
        r = self.rng.random()
        if depth >= 3:
            r = min(r, 0.74)
        if r < 0.14:
            return Skip(SPAN)
        if r < 0.30:
            return AssignVar(self.rng.choice(INT_VARS), self.value_expr(), SPAN)
        if r < 0.44:
            return LoadElem(self.rng.choice(INT_VARS),
                            self.rng.choice(ARRAYS), self.index_expr(), SPAN)
        if r < 0.56:
            return StoreElem(self.rng.choice(ARRAYS), self.index_expr(),
                             self.rng.choice(INT_VARS), SPAN)
        if r < 0.66:
            return Exhale(self.rng.choice(ARRAYS), self.index_expr(),
                          self.amount(), SPAN)
        if r < 0.75:
            if self.allow_inhale:
                return Inhale(self.rng.choice(ARRAYS), self.index_expr(),
                              self.amount(), SPAN)
            return AssignVar(self.rng.choice(INT_VARS), self.value_expr(), SPAN)
        if r < 0.9:
            return Seq(self.stmt(depth + 1), self.stmt(depth + 1), SPAN)
        return If(self.guard(), self.stmt(depth + 1), self.stmt(depth + 1), SPAN)

    def program(self) -> Stmt:
        return Seq(self.stmt(1), self.stmt(1), SPAN)


def random_state(rng: random.Random) -> tuple[dict[str, int], Heap]:
    ids = {"a": 0, "b": 1}
    if rng.random() < 0.25:
        ids["b"] = 0  # aliasing
    lengths = {0: rng.randint(0, 6), 1: rng.randint(0, 6)}
    heap = Heap(lengths=lengths)
    for aid, ln in lengths.items():
        for i in range(ln):
            heap.contents[(aid, i)] = rng.randint(-5, 5)
    env: dict[str, int] = dict(ids)
    for v in INT_VARS:
        env[v] = rng.randint(-3, 6)
    return env, heap
