import random
from fractions import Fraction

import pytest

from permax.approx import (
    havoc_over, havoc_over_bool, havoc_under, havoc_under_bool, over_bool,
    over_perm, under_bool, under_perm,
)
from permax.expr import (
    Add, And, ArrayVar, BoolConst, Cmp, Divides, FALSE, Frac, Heap,
    IntConst, Lookup, Not, Or, PAdd, PIte, PMax, PMin, PSub, PZERO,
    PermValue, PONE, Rd, TRUE, Var, eval_bool, eval_perm, show_perm,
)
from permax.frontend import parse_bool_expr, parse_perm_expr


def _lookup_guard():
    return Cmp(Lookup("a", Var("i")), ">", IntConst(0))


class TestBoolApprox:
    def test_over_lookup_comparison_is_true(self):
        assert over_bool(_lookup_guard()) == TRUE

    def test_under_conjunction_keeps_clean_part(self):
        b = And(_lookup_guard(), Cmp(Var("j"), "<", Var("n")))
        # false && (j < n) simplifies to false
        assert under_bool(b) == FALSE

    def test_over_negated_lookup_equality(self):
        b = Not(Cmp(Lookup("a", Var("i")), "==", IntConst(0)))
        assert over_bool(b) == TRUE

    def test_untouched_without_lookups(self):
        from permax.simplify import simplify_bool
        b = parse_bool_expr("0 <= j && j < length(a)")
        assert over_bool(b) == simplify_bool(b)
        assert under_bool(b) == simplify_bool(b)


class TestPermApprox:
    def test_over_ite_with_lookup_guard(self):
        p = PIte(Cmp(Lookup("a", Var("i")), "==", IntConst(0)), PONE, Rd())
        # max(ite(true,1,0), ite(true,rd,0)) simplifies to 1
        assert over_perm(p) == PONE

    def test_lookup_free_unchanged(self):
        p = parse_perm_expr("ite(qa == a && qi == e, 1/2, 0)")
        assert over_perm(p) == p
        assert under_perm(p) == p

    def test_subtraction_dualizes(self):
        look = PIte(_lookup_guard(), Frac(Fraction(1, 2)), PZERO)
        clean = parse_perm_expr("ite(qi == 0, 1, 0)")
        # under(p1 - p2) = under(p1) - over(p2)
        out = under_perm(PSub(clean, look))
        hi = PIte(TRUE, Frac(Fraction(1, 2)), PZERO)
        # over of the lookup leaf is max(ite(true,1/2,0), ite(true,0,0)) -> 1/2
        assert out == simplified_sub(clean, Frac(Fraction(1, 2)))

    def test_soundness_fuzz(self, rng):
        for _ in range(500):
            b, p = _random_pair(rng)
            env, heap = _random_state(rng)
            bv = eval_bool(b, env, heap)
            assert (not eval_bool(under_bool(b), env, heap)) or bv
            assert (not bv) or eval_bool(over_bool(b), env, heap)
            pv = eval_perm(p, env, heap)
            assert eval_perm(under_perm(p), env, heap) <= pv
            assert pv <= eval_perm(over_perm(p), env, heap)


def simplified_sub(a, b):
    from permax.simplify import simplify_perm
    from permax.expr import PSub
    return simplify_perm(PSub(a, b))


def _random_state(rng):
    heap = Heap(lengths={0: 4, 1: 4})
    for aid in (0, 1):
        for i in range(4):
            heap.contents[(aid, i)] = rng.randint(-3, 3)
    env = {"a": 0, "b": rng.choice([0, 1]), "i": rng.randint(0, 3),
           "j": rng.randint(-4, 4), "n": rng.randint(-4, 4),
           "qa": rng.choice([0, 1]), "qi": rng.randint(-2, 5)}
    return env, heap


def _random_int(rng, depth=0):
    r = rng.random()
    if r < 0.35 or depth > 1:
        return IntConst(rng.randint(-3, 3))
    if r < 0.6:
        return Var(rng.choice(["i", "j", "n"]))
    if r < 0.8:
        return Lookup(rng.choice(["a", "b"]), IntConst(rng.randint(0, 3)))
    return Add(_random_int(rng, depth + 1), _random_int(rng, depth + 1))


def _random_bool(rng, depth=0):
    r = rng.random()
    if depth > 2 or r < 0.5:
        op = rng.choice(["==", "!=", "<", "<=", ">", ">="])
        return Cmp(_random_int(rng), op, _random_int(rng))
    if r < 0.65:
        return Not(_random_bool(rng, depth + 1))
    ctor = rng.choice([And, Or])
    return ctor(_random_bool(rng, depth + 1), _random_bool(rng, depth + 1))


def _random_perm(rng, depth=0):
    r = rng.random()
    if r < 0.35 or depth > 2:
        amt = Rd() if rng.random() < 0.3 else Frac(Fraction(rng.randint(0, 4), 2))
        return PIte(_random_bool(rng), amt, PZERO)
    if r < 0.55:
        return PIte(_random_bool(rng), _random_perm(rng, depth + 1),
                    _random_perm(rng, depth + 1))
    ctor = rng.choice([PAdd, PSub, PMin, PMax])
    return ctor(_random_perm(rng, depth + 1), _random_perm(rng, depth + 1))


def _random_pair(rng):
    return _random_bool(rng), _random_perm(rng)


class TestHavoc:
    def test_displayed_form(self):
        b = Cmp(Lookup("a", Var("i")), ">", IntConst(0))
        out = havoc_over_bool(b, "a", Var("j"))
        # semantically ite(a = a and i = j, true, a[i] > 0)
        heap = Heap(lengths={0: 6})
        for i in range(4):
            heap.contents[(0, i)] = -1
        heap.contents[(0, 2)] = 5
        for i in range(4):
            for j in range(4):
                env = {"a": 0, "i": i, "j": j}
                expect = True if i == j else eval_bool(b, env, heap)
                assert eval_bool(out, env, heap) == expect

    def test_lookup_free_unchanged(self):
        p = parse_perm_expr("ite(qa == a && qi == j, rd, 0)")
        assert havoc_over(p, "a", Var("e")) == p
        assert havoc_under(p, "a", Var("e")) == p

    def test_havoc_under_ite_example(self):
        p = PIte(Cmp(Lookup("a", Var("i")), "==", IntConst(0)), PONE, PZERO)
        out = havoc_under(p, "a", Var("i"))
        # reading a[i] after the havoc of a[i] cannot be relied on
        heap = Heap(lengths={0: 4}, contents={(0, 2): 0})
        for i in range(4):
            env = {"a": 0, "i": i}
            assert eval_perm(out, env, heap) == PermValue(Fraction(0))

    def test_havoc_independence(self, rng):
        # mutating the havocked location never changes the result
        for _ in range(300):
            p = _random_perm(rng)
            env, heap = _random_state(rng)
            aid = env["a"]
            idx = rng.randint(0, 3)
            out = havoc_over(p, "a", IntConst(idx))
            base = eval_perm(out, env, heap)
            for val in (-7, 0, 9):
                heap2 = heap.copy()
                heap2.contents[(aid, idx)] = val
                assert eval_perm(out, env, heap2) == base
            outu = havoc_under(p, "a", IntConst(idx))
            baseu = eval_perm(outu, env, heap)
            for val in (-7, 0, 9):
                heap2 = heap.copy()
                heap2.contents[(aid, idx)] = val
                assert eval_perm(outu, env, heap2) == baseu

    def test_havoc_soundness(self, rng):
        for _ in range(300):
            p = _random_perm(rng)
            env, heap = _random_state(rng)
            idx = IntConst(rng.randint(0, 3))
            pv = eval_perm(p, env, heap)
            assert eval_perm(havoc_under(p, "a", idx), env, heap) <= pv
            assert pv <= eval_perm(havoc_over(p, "a", idx), env, heap)
