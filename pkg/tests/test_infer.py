import random
from fractions import Fraction

import pytest

from permax.expr import (
    Add, And, Cmp, Frac, Heap, IntConst, Mul, PAdd, PIte, PMax, PSub, PZERO,
    PermValue, PONE, PRD, PV_ZERO, QA, QI, Rd, Var, eval_bool, eval_perm,
    free_vars, perm_at, show_bool, show_perm,
)
from permax.frontend import (
    Exhale, Inhale, Seq, Skip, SourceSpan, parse_file, parse_program,
    parse_perm_expr,
)
from permax.infer import Analyzer, infer_method, loop_metas
from permax.oracle import (
    ProgramState, bounded_validity, interpret, seed_perm_map,
)

from conftest import corpus_path, fixture_path
from gen import ProgramGen, random_state

SPAN = SourceSpan("<t>", 0, 0)


def _analyzer_for(src: str):
    prog = parse_program(src)
    method = prog.methods[0]
    return Analyzer(loop_metas(method)), method


def _eval_at(p, env, heap, aid, qi):
    e = dict(env)
    e[QA] = aid
    e[QI] = qi
    return eval_perm(p, e, heap)


class TestLoopFreeRules:
    def test_skip(self):
        a = Analyzer({})
        p = parse_perm_expr("ite(qa == a && qi == 0, 1/2, 0)")
        assert a.required(Skip(SPAN), p) == p
        assert a.delta(Skip(SPAN), p) == p

    def test_load_from_zero(self):
        a, m = _analyzer_for("method m(a: Int[], x: Int) { x := a[2] }")
        pre = a.required(m.body, PZERO)
        assert pre == parse_perm_expr("ite(qa == a && qi == 2, rd, 0)", arrays=("qa", "a"))

    def test_par_copy_even_body(self):
        src = """
        method m(a: Int[], j: Int) {
            exhale(a, 2 * j, 1/2);
            exhale(a, 2 * j + 1, 1);
            j := j + 1
        }
        """
        a, m = _analyzer_for(src)
        pre = a.required(m.body, PZERO)
        heap = Heap(lengths={0: 10})
        for j in range(0, 4):
            env = {"a": 0, "j": j}
            assert _eval_at(pre, env, heap, 0, 2 * j) == PermValue(Fraction(1, 2))
            assert _eval_at(pre, env, heap, 0, 2 * j + 1) == PermValue(Fraction(1))
            assert _eval_at(pre, env, heap, 0, 2 * j + 2) == PV_ZERO
            assert _eval_at(pre, env, heap, 1, 2 * j) == PV_ZERO
        # the relative difference is exactly the negated requirement
        dlt = a.delta(m.body, PZERO)
        for j in range(0, 4):
            env = {"a": 0, "j": j}
            for qi in range(0, 9):
                assert _eval_at(dlt, env, heap, 0, qi) == -_eval_at(pre, env, heap, 0, qi)
        post = a.required(m.body, PZERO)
        from permax.simplify import simplify_perm
        assert simplify_perm(PAdd(pre, dlt)) == PZERO

    def test_copy_even_body(self):
        src = """
        method m(a: Int[], j: Int, v: Int) {
            if (j % 2 == 0) { v := a[j] } else { a[j] := v };
            j := j + 1
        }
        """
        a, m = _analyzer_for(src)
        pre = a.required(m.body, PZERO)
        heap = Heap(lengths={0: 10})
        for j in range(0, 6):
            env = {"a": 0, "j": j, "v": 1}
            want = PermValue(Fraction(0), 1) if j % 2 == 0 else PermValue(Fraction(1))
            assert _eval_at(pre, env, heap, 0, j) == want
            assert _eval_at(pre, env, heap, 0, j + 1) == PV_ZERO

    def test_inhale_then_exhale_cancels(self):
        a, m = _analyzer_for(
            "method m(a: Int[], e: Int) { inhale(a, e, 1/2); exhale(a, e, 1/2) }")
        assert a.delta(m.body, PZERO) == PZERO
        assert a.required(m.body, PZERO) == PZERO

    def test_exhale_then_inhale_requires_amount(self):
        a, m = _analyzer_for(
            "method m(a: Int[], e: Int) { exhale(a, e, 1/2); inhale(a, e, 1/2) }")
        pre = a.required(m.body, PZERO)
        assert pre == parse_perm_expr("ite(qa == a && qi == e, 1/2, 0)", arrays=("qa", "a"))
        assert a.delta(m.body, PZERO) == PZERO

    def test_array_assignment_substitutes(self):
        a, m = _analyzer_for(
            "method m(a: Int[], b: Int[], x: Int) { b := a; x := b[0] }")
        pre = a.required(m.body, PZERO)
        assert pre == parse_perm_expr("ite(qa == a && qi == 0, rd, 0)", arrays=("qa", "a"))

    def test_store_aliasing(self):
        # writing a[i] then reading b[j] requires read permission for b[j]
        # only when it is a different location, full otherwise
        src = "method m(a: Int[], b: Int[], i: Int, j: Int, x: Int, y: Int) { a[i] := x; y := b[j] }"
        a, m = _analyzer_for(src)
        pre = a.required(m.body, PZERO)
        heap = Heap(lengths={0: 5, 1: 5})
        # distinct arrays: write full at (a,i), read at (b,j)
        env = {"a": 0, "b": 1, "i": 1, "j": 2, "x": 0, "y": 0}
        assert _eval_at(pre, env, heap, 0, 1) == PermValue(Fraction(1))
        assert _eval_at(pre, env, heap, 1, 2) == PermValue(Fraction(0), 1)
        # aliased arrays, same index: the write dominates
        env = {"a": 0, "b": 0, "i": 2, "j": 2, "x": 0, "y": 0}
        assert _eval_at(pre, env, heap, 0, 2) == PermValue(Fraction(1))


class TestLoopRules:
    def test_copy_even_spec(self):
        prog = parse_file(corpus_path("copyEven.arr"))
        spec = infer_method(prog.methods[0])
        golden = parse_perm_expr(
            "ite(qa == a && 0 <= qi && qi < length(a),"
            "    ite(qi % 2 == 0, rd, 1), 0)")
        for length in range(0, 9):
            heap = Heap(lengths={0: length, 1: 4})
            for qa in (0, 1):
                for qi in range(-3, 11):
                    env = {"a": 0, QA: qa, QI: qi}
                    assert eval_perm(spec.precondition, env, heap) == \
                        eval_perm(golden, env, heap)

    def test_par_copy_even_post_is_zero(self):
        prog = parse_file(corpus_path("parCopyEven.arr"))
        spec = infer_method(prog.methods[0])
        assert spec.postcondition == PZERO

    def test_method_skip(self):
        prog = parse_program("method m(a: Int[]) { skip }")
        spec = infer_method(prog.methods[0])
        assert spec.precondition == PZERO
        assert spec.postcondition == PZERO

    def test_spec_mentions_only_interface_names(self):
        for name in ("copyEven.arr", "parCopyEven.arr", "memcopy.arr",
                     "matrixmult.arr", "reverse.arr"):
            prog = parse_file(corpus_path(name))
            for method in prog.methods:
                spec = infer_method(method)
                allowed = {p.name for p in method.params} | {QA, QI}
                assert free_vars(spec.precondition) <= allowed


class TestSoundnessCondition:
    def test_par_copy_even_passes_bounded_check(self):
        prog = parse_file(corpus_path("parCopyEven.arr"))
        method = prog.methods[0]
        spec = infer_method(method)
        (loop,) = spec.loops
        assert not loop.exhale_free
        cond = loop.condition
        assert cond is not None
        names = free_vars(cond)
        arrays = [n for n in names if n == "a"]
        ints = sorted(n for n in names - set(arrays) - {QA})
        assert bounded_validity(cond, ints, arrays, -4, 8) is None

    def test_exhale_free_loop_has_no_condition(self):
        prog = parse_file(corpus_path("copyEven.arr"))
        spec = infer_method(prog.methods[0])
        (loop,) = spec.loops
        assert loop.exhale_free
        assert loop.condition is None

    def test_double_exhale_fails_bounded_check(self):
        prog = parse_file(fixture_path("drain.arr"))
        method = prog.methods[0]
        spec = infer_method(method)
        (loop,) = spec.loops
        cond = loop.condition
        assert cond is not None
        names = free_vars(cond)
        arrays = [n for n in names if n == "a"]
        ints = sorted(n for n in names - set(arrays) - {QA})
        cex = bounded_validity(cond, ints, arrays, -4, 8)
        assert cex is not None


class TestSoundnessFuzzing:
    def test_loop_free_soundness_and_postcondition(self, rng):
        # smaller version of the acceptance criteria 4 and 5
        gen = ProgramGen(rng)
        analyzer = Analyzer({})
        normal_runs = 0
        for _ in range(80):
            s = gen.program()
            pre = analyzer.required(s, PZERO)
            post = analyzer.delta(s, PZERO)
            env, heap = random_state(rng)
            perms = seed_perm_map(pre, env, heap)
            st = ProgramState(heap.copy(), perms, dict(env))
            out = interpret(s, st)
            assert out.kind != "perm-fail", show_perm(pre)
            if out.is_normal:
                normal_runs += 1
                from permax.simplify import simplify_perm
                guaranteed = simplify_perm(PAdd(pre, post))
                for aid in {env["a"], env["b"]}:
                    for qi in range(-8, 14):
                        want = _eval_at(guaranteed, env, heap, aid, qi)
                        assert out.state.perms.get(aid, qi) >= want
        assert normal_runs >= 20

    def test_exhale_free_delta_nonnegative(self, rng):
        gen = ProgramGen(rng, allow_inhale=True)
        analyzer = Analyzer({})
        for _ in range(80):
            s = gen.program()
            if _has_exhale(s):
                continue
            dlt = analyzer.delta(s, PZERO)
            env, heap = random_state(rng)
            for aid in (0, 1):
                for qi in range(-4, 10):
                    assert _eval_at(dlt, env, heap, aid, qi) >= PV_ZERO


def _has_exhale(s):
    if isinstance(s, Exhale):
        return True
    if isinstance(s, Seq):
        return _has_exhale(s.first) or _has_exhale(s.second)
    from permax.frontend import If, While
    if isinstance(s, If):
        return _has_exhale(s.then) or _has_exhale(s.other)
    if isinstance(s, While):
        return _has_exhale(s.body)
    return False


class TestCorpusLoopSoundness:
    @pytest.mark.parametrize("name", [
        "copyEven.arr", "copy.arr", "init.arr", "reverse.arr", "find.arr",
        "copyOdd.arr", "matrixmult.arr",
    ])
    def test_seeded_runs_never_perm_fail(self, name, rng):
        prog = parse_file(corpus_path(name))
        for method in prog.methods:
            spec = infer_method(method)
            for length in range(0, 9):
                aids = {p.name: i for i, p in enumerate(method.params) if p.is_array}
                lengths = {i: length for i in aids.values()}
                heap = Heap(lengths=lengths)
                for aid in aids.values():
                    for i in range(length):
                        heap.contents[(aid, i)] = rng.randint(-4, 4)
                env = dict(aids)
                for p in method.params:
                    if not p.is_array:
                        env[p.name] = rng.randint(-2, length + 2)
                perms = seed_perm_map(spec.precondition, env, heap)
                st = ProgramState(heap, perms, dict(env))
                out = interpret(method.body, st)
                assert out.kind != "perm-fail", (name, length, env)
