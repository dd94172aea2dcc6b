import random
from fractions import Fraction

import pytest

from permax.expr import (
    Add, And, Cmp, Divides, FALSE, Frac, IntConst, NotDivides, Or, PAdd,
    PIte, PMax, PSub, PZERO, PermValue, PointwiseMax, PONE, PV_ZERO, Rd,
    TRUE, Var, contains_pointwise_max, eval_perm, show_bool, show_perm,
    substitute_var,
)
from permax.frontend import parse_bool_expr, parse_perm_expr
from permax.maxelim import (
    MaxElimError, boundary_exprs, eliminate, eliminate_all,
    filtered_boundaries_pair, left_infinite_bool, left_infinite_perm,
    to_simple,
)
from permax.oracle import bounded_max

from gen import SimpleMaxGen, naive_max, random_env


class TestBoundaryExprs:
    def test_ge(self):
        s, d = boundary_exprs(parse_bool_expr("x >= e"), "x")
        assert s == [Var("e")] and d == 1

    def test_lt_empty(self):
        s, d = boundary_exprs(parse_bool_expr("x < e"), "x")
        assert s == [] and d == 1

    def test_neq_with_divisibility(self):
        b = And(Cmp(Var("x"), "!=", IntConst(4)), Divides(3, Var("x")))
        s, d = boundary_exprs(b, "x")
        assert s == [IntConst(5)] and d == 3
        # the represented candidate set is {5, 6, 7}
        candidates = {e.value + k for e in s for k in range(d)}
        assert candidates == {5, 6, 7}
        # it contains the smallest witness of the formula
        smallest = min(v for v in range(-30, 30) if v != 4 and v % 3 == 0)
        assert smallest in candidates or smallest < min(candidates)

    def test_smallest_witness_covered(self):
        # for x != 4 && 3 | x the smallest witness above the boundary zone
        # must land in the candidate set
        b = And(Cmp(Var("x"), "!=", IntConst(4)), Divides(3, Var("x")))
        s, d = boundary_exprs(b, "x")
        candidates = {e.value + k for e in s for k in range(d)}
        assert 6 in candidates  # smallest value > 4 satisfying both


class TestLeftInfinite:
    def test_lt_true(self):
        b, d = left_infinite_bool(parse_bool_expr("x < e"), "x")
        assert b == TRUE and d == 1

    def test_ge_false(self):
        b, d = left_infinite_bool(parse_bool_expr("x >= e"), "x")
        assert b == FALSE and d == 1

    def test_divisibility_kept(self):
        lit = Divides(2, Add(Var("x"), Var("e")))
        b, d = left_infinite_bool(lit, "x")
        assert b == lit and d == 2

    def test_perm_leaf_projects_to_zero(self):
        p = parse_perm_expr("ite(qa == a && qi == j, rd, 0)")
        out, d = left_infinite_perm(p, "j")
        assert d == 1
        from permax.simplify import simplify_perm
        assert simplify_perm(out) == PZERO


class TestFilteredBoundaries:
    def test_worked_example_pair(self):
        # max[x | x >= 0](ite(x = i, 1, 0)) keeps the invariant boundary 0
        # only under the filter i < 0
        p = PIte(Cmp(Var("x"), "==", Var("i")), PONE, PZERO)
        b = Cmp(Var("x"), ">=", IntConst(0))
        bs = filtered_boundaries_pair(p, b, "x")
        assert bs.delta == 1
        entries = {(show := e, f) for e, f in bs.entries}
        assert (Var("i"), TRUE) in bs.entries
        assert (IntConst(0), parse_bool_expr("i < 0")) in bs.entries

    def test_leaf_delegates_with_true_filters(self):
        from permax.maxelim import filtered_boundaries
        p = PIte(Cmp(Var("x"), ">=", Var("e")), Rd(), PZERO)
        bs = filtered_boundaries(p, "x")
        assert bs.entries == [(Var("e"), TRUE)]

    def test_subtraction_filters_by_positive_minuend(self):
        from permax.maxelim import filtered_boundaries
        p1 = PIte(Cmp(Var("x"), ">=", IntConst(0)), PONE, PZERO)
        leaf = PIte(Cmp(Var("x"), "==", Var("i")), Frac(Fraction(1, 2)), PZERO)
        bs = filtered_boundaries(PSub(p1, leaf), "x")
        # boundaries of !(x = i) are filtered by p1 > 0
        filters = [f for e, f in bs.entries if f != TRUE]
        assert filters, "expected a filtered entry from the subtraction case"


class TestEliminate:
    def test_worked_example_golden(self):
        node = PointwiseMax(("x",), Cmp(Var("x"), ">=", IntConst(0)),
                            PIte(Cmp(Var("x"), "==", Var("i")), PONE, PZERO))
        assert eliminate(node) == parse_perm_expr("ite(i >= 0, 1, 0)")

    def test_false_guard_is_zero(self):
        node = PointwiseMax(("x",), FALSE, PONE)
        assert eliminate(node) == PZERO

    def test_copy_even_projection_split(self):
        guard = parse_bool_expr("0 <= j && j < length(a)")
        body = parse_perm_expr(
            "ite(j % 2 == 0, ite(qa == a && qi == j, rd, 0),"
            "                ite(qa == a && qi == j, 1, 0))")
        branches = to_simple("j", guard, body)
        assert len(branches) == 2
        texts = [show_bool(g) for g, _ in branches]
        assert any("% 2 == 0" in t for t in texts)
        assert any("% 2 != 0" in t for t in texts)

    def test_copy_even_full_elimination_semantics(self):
        from permax.expr import ArrayVar, Heap, Length, QA, QI
        guard = parse_bool_expr("0 <= j && j < length(a)")
        body = parse_perm_expr(
            "ite(j % 2 == 0, ite(qa == a && qi == j, rd, 0),"
            "                ite(qa == a && qi == j, 1, 0))")
        out = eliminate(PointwiseMax(("j",), guard, body))
        assert not contains_pointwise_max(out)
        golden = parse_perm_expr(
            "ite(qa == a && 0 <= qi && qi < length(a), ite(qi % 2 == 0, rd, 1), 0)")
        for length in range(0, 9):
            heap = Heap(lengths={0: length, 1: 3})
            for qa in (0, 1):
                for qi in range(-3, 11):
                    env = {"a": 0, QA: qa, QI: qi}
                    assert eval_perm(out, env, heap) == eval_perm(golden, env, heap)

    def test_distributes_max(self):
        p1 = parse_perm_expr("ite(x >= 0, 1/2, 0)")
        p2 = parse_perm_expr("ite(x <= i, rd, 0)")
        guard = parse_bool_expr("x >= -3 && x <= 3")
        out = eliminate(PointwiseMax(("x",), guard, PMax(p1, p2)))
        for i in range(-6, 7):
            want = naive_max(guard, PMax(p1, p2), {"i": i, "n": 0, "m": 0})
            assert eval_perm(out, {"i": i}) == want

    def test_nested_max_requires_prior_elimination(self):
        inner = PointwiseMax(("y",), TRUE, PONE)
        node = PointwiseMax(("x",), TRUE, inner)
        with pytest.raises(MaxElimError):
            eliminate(node)

    def test_eliminate_all_handles_nesting(self):
        inner = PointwiseMax(("y",), Cmp(Var("y"), "==", Var("x")), PONE)
        node = PointwiseMax(
            ("x",), And(Cmp(Var("x"), ">=", IntConst(0)),
                        Cmp(Var("x"), "<", IntConst(3))), inner)
        out = eliminate_all(node)
        assert not contains_pointwise_max(out)
        assert eval_perm(out, {}) == PermValue(Fraction(1))

    def test_oracle_equivalence_sample(self, rng):
        # a smaller version of the acceptance suite for quick feedback
        gen = SimpleMaxGen(rng)
        for _ in range(150):
            guard, body = gen.case()
            node = PointwiseMax(("x",), guard, body)
            out = eliminate(node)
            assert not contains_pointwise_max(out)
            for _ in range(10):
                env = random_env(rng)
                assert eval_perm(out, env) == bounded_max(node, env)

    def test_boundary_set_semantics(self, rng):
        # for non-negative simple p and any witness value n, either some
        # candidate e + d equals n with a true filter, or stepping one period
        # down does at least as well, or the value at n is zero
        from permax.maxelim import filtered_boundaries
        from permax.expr import eval_bool
        gen = SimpleMaxGen(rng)
        hits = 0
        for _ in range(250):
            gen.div_budget = 2
            body = gen.perm_expr(depth=2, allow_sub=False)  # keeps p >= 0
            branches = to_simple("x", TRUE, body)
            for _, p in branches:
                bs = filtered_boundaries(p, "x")
                env = random_env(rng)
                for n in range(-12, 13):
                    env_n = dict(env)
                    env_n["x"] = n
                    val = eval_perm(p, env_n)
                    if val == PV_ZERO:
                        continue
                    matched = False
                    for (e, bfilt) in bs.entries:
                        for d in range(bs.delta):
                            inst_e = eval_perm_int(e, env_n) + d
                            if inst_e == n and eval_bool(
                                    substitute_var(bfilt, "x", IntConst(n)), env_n):
                                matched = True
                    env_prev = dict(env_n)
                    env_prev["x"] = n - bs.delta
                    prev_ok = eval_perm(p, env_prev) >= val
                    assert matched or prev_ok, (show_perm(p), n, env)
                    hits += 1
        assert hits > 100


def eval_perm_int(e, env):
    from permax.expr import eval_int
    return eval_int(e, env)
