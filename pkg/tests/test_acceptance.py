"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured time.  All comparisons are exact (rational permission values);
no tolerances are needed anywhere.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
report lines.
"""

import glob
import os
import random
import time
from fractions import Fraction

import pytest

from permax.expr import (
    Heap, PAdd, PZERO, PermValue, PointwiseMax, PV_RD, PV_ZERO, QA, QI,
    contains_pointwise_max, eval_perm, free_vars, show_perm,
)
from permax.frontend import parse_file, parse_perm_expr
from permax.infer import Analyzer, infer_method
from permax.maxelim import eliminate
from permax.oracle import (
    ProgramState, bounded_max, bounded_validity, interpret, seed_perm_map,
)
from permax.simplify import simplify_perm

from conftest import CORPUS, corpus_path, fixture_path
from gen import ProgramGen, SimpleMaxGen, naive_max, random_env, random_state


def _report(criterion: str, elapsed: float, detail: str = "") -> None:
    extra = f" ({detail})" if detail else ""
    print(f"\n[acceptance] {criterion}: PASS in {elapsed:.2f}s{extra}")


def _enumeration_window():
    # qa over the program array plus one fresh identifier, qi in [-3, 10],
    # lengths in [0, 8]
    for length in range(0, 9):
        heap = Heap(lengths={0: length, 1: 5})
        for qa in (0, 1):
            for qi in range(-3, 11):
                yield heap, {"a": 0, QA: qa, QI: qi}


def test_criterion_1_copy_even_end_to_end():
    t0 = time.perf_counter()
    prog = parse_file(corpus_path("copyEven.arr"))
    spec = infer_method(prog.methods[0])
    golden = parse_perm_expr(
        "ite(qa == a && 0 <= qi && qi < length(a), ite(qi % 2 == 0, rd, 1), 0)",
        arrays=("qa", "a"))
    points = 0
    for heap, env in _enumeration_window():
        assert eval_perm(spec.precondition, env, heap) == eval_perm(golden, env, heap)
        points += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    _report("1 copyEven end-to-end", elapsed, f"{points} points, exact")


def test_criterion_2_par_copy_even_end_to_end():
    t0 = time.perf_counter()
    prog = parse_file(corpus_path("parCopyEven.arr"))
    spec = infer_method(prog.methods[0])
    # reference: the un-eliminated loop requirement, evaluated by the
    # bounded oracle
    reference = PointwiseMax(
        ("j",),
        parse_bool("0 <= j && 2 * j + 2 <= length(a)"),
        parse_perm_expr(
            "ite(qa == a && qi == 2 * j, 1/2, 0)"
            " + ite(qa == a && qi == 2 * j + 1, 1, 0)",
            arrays=("qa", "a")),
    )
    loop_pre = spec.loops[0].pre
    assert not contains_pointwise_max(loop_pre)
    for heap, env in _enumeration_window():
        assert eval_perm(loop_pre, env, heap) == bounded_max(reference, env, heap)
    assert spec.postcondition == PZERO
    elapsed = time.perf_counter() - t0
    _report("2 parCopyEven end-to-end", elapsed, "loop pre exact; post == 0")


def parse_bool(text):
    from permax.frontend import parse_bool_expr
    return parse_bool_expr(text, arrays=("qa", "a"))


def test_criterion_3_elimination_oracle_suite():
    t0 = time.perf_counter()
    rng = random.Random(424242)
    gen = SimpleMaxGen(rng)
    cases = 0
    comparisons = 0
    while cases < 1000:
        guard, body = gen.case()
        node = PointwiseMax(("x",), guard, body)
        out = eliminate(node)
        assert not contains_pointwise_max(out)
        for _ in range(20):
            env = random_env(rng)
            assert eval_perm(out, env) == bounded_max(node, env), (
                show_perm(node.body), env)
            comparisons += 1
        cases += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    _report("3 elimination oracle suite", elapsed,
            f"{cases} maxima, {comparisons} exact comparisons")


def _loop_free_runs():
    rng = random.Random(55555)
    gen = ProgramGen(rng)
    analyzer = Analyzer({})
    runs = []
    for _ in range(200):
        s = gen.program()
        pre = analyzer.required(s, PZERO)
        dlt = analyzer.delta(s, PZERO)
        env, heap = random_state(rng)
        runs.append((s, pre, dlt, env, heap))
    return rng, runs


def test_criterion_4_loop_free_soundness_and_sensitivity():
    t0 = time.perf_counter()
    rng, runs = _loop_free_runs()
    sensitivity_hits = 0
    for s, pre, dlt, env, heap in runs:
        perms = seed_perm_map(pre, env, heap)
        base = interpret(s, ProgramState(heap.copy(), perms.copy(), dict(env)))
        assert base.kind != "perm-fail"
        if base.kind != "normal":
            continue
        # sensitivity: removing one read unit from a required location must
        # make the run fail whenever that location is touched (no inhales
        # replenish permissions in this check)
        if _contains_inhale(s):
            continue
        required = [
            loc for loc in base.touched
            if _eval_at(pre, env, heap, loc) > PV_ZERO
        ]
        if not required:
            continue
        loc = required[0]
        weakened = seed_perm_map(pre, env, heap)
        weakened.overrides[loc] = _eval_at(pre, env, heap, loc) - PV_RD
        out = interpret(s, ProgramState(heap.copy(), weakened, dict(env)))
        assert out.kind == "perm-fail", (loc, out.kind)
        sensitivity_hits += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    assert sensitivity_hits >= 30
    _report("4 loop-free soundness fuzzing", elapsed,
            f"200 programs, {sensitivity_hits} sensitivity checks")


def _contains_inhale(s):
    from permax.frontend import If, Inhale, Seq, While
    if isinstance(s, Inhale):
        return True
    if isinstance(s, Seq):
        return _contains_inhale(s.first) or _contains_inhale(s.second)
    if isinstance(s, If):
        return _contains_inhale(s.then) or _contains_inhale(s.other)
    if isinstance(s, While):
        return _contains_inhale(s.body)
    return False


def _eval_at(p, env, heap, loc):
    e = dict(env)
    e[QA], e[QI] = loc
    return eval_perm(p, e, heap)


def test_criterion_5_postcondition_guarantee():
    t0 = time.perf_counter()
    _, runs = _loop_free_runs()
    normal = 0
    for s, pre, dlt, env, heap in runs:
        perms = seed_perm_map(pre, env, heap)
        out = interpret(s, ProgramState(heap.copy(), perms, dict(env)))
        if out.kind != "normal":
            continue
        normal += 1
        post = simplify_perm(PAdd(pre, dlt))
        aids = {env["a"], env["b"], 9}
        for aid in aids:
            for qi in range(-10, 16):
                want = _eval_at(post, env, heap, (aid, qi))
                assert out.state.perms.get(aid, qi) >= want, (aid, qi)
    elapsed = time.perf_counter() - t0
    assert normal >= 60
    _report("5 postcondition guarantee", elapsed, f"{normal} normal runs, pointwise")


def test_criterion_6_soundness_condition_checker():
    t0 = time.perf_counter()
    # bounded pass for the fork-join program
    prog = parse_file(corpus_path("parCopyEven.arr"))
    spec = infer_method(prog.methods[0])
    cond = spec.loops[0].condition
    names = free_vars(cond)
    ints = sorted(n for n in names if n not in (QA, "a"))
    t_pass = time.perf_counter()
    assert bounded_validity(cond, ints, ["a"], -4, 8) is None
    t_pass = time.perf_counter() - t_pass
    assert t_pass < 5.0
    # bounded counterexample for the repeated full exhale
    prog = parse_file(fixture_path("drain.arr"))
    spec = infer_method(prog.methods[0])
    cond = spec.loops[0].condition
    names = free_vars(cond)
    ints = sorted(n for n in names if n not in (QA, "a"))
    t_cex = time.perf_counter()
    cex = bounded_validity(cond, ints, ["a"], -4, 8)
    t_cex = time.perf_counter() - t_cex
    assert cex is not None
    assert t_cex < 5.0
    elapsed = time.perf_counter() - t0
    _report("6 soundness-condition checker", elapsed,
            f"pass {t_pass:.2f}s, counterexample {t_cex:.2f}s")


def test_criterion_7_corpus_health():
    t0 = time.perf_counter()
    rng = random.Random(777)
    paths = sorted(glob.glob(os.path.join(CORPUS, "*.arr")))
    assert len(paths) >= 10
    analyzed = 0
    seeded_runs = 0
    for path in paths:
        prog = parse_file(path)
        for method in prog.methods:
            spec = infer_method(method)  # must not raise
            analyzed += 1
            if any(not l.exhale_free for l in spec.loops):
                continue
            for length in range(0, 9):
                aids = {p.name: i for i, p in enumerate(method.params) if p.is_array}
                heap = Heap(lengths={i: length for i in aids.values()})
                for aid in aids.values():
                    for i in range(length):
                        heap.contents[(aid, i)] = rng.randint(-5, 5)
                env = dict(aids)
                for p in method.params:
                    if not p.is_array:
                        env[p.name] = rng.randint(-2, length + 2)
                perms = seed_perm_map(spec.precondition, env, heap)
                out = interpret(method.body, ProgramState(heap, perms, dict(env)))
                assert out.kind != "perm-fail", (path, length, env)
                seeded_runs += 1
    elapsed = time.perf_counter() - t0
    _report("7 corpus health", elapsed,
            f"{analyzed} methods analyzed, {seeded_runs} seeded runs")


def test_criterion_8_worked_example_golden_form():
    t0 = time.perf_counter()
    from permax.expr import Cmp, IntConst, PIte, PONE, Var
    node = PointwiseMax(
        ("x",),
        Cmp(Var("x"), ">=", IntConst(0)),
        PIte(Cmp(Var("x"), "==", Var("i")), PONE, PZERO),
    )
    out = eliminate(node)
    golden = parse_perm_expr("ite(i >= 0, 1, 0)")
    assert out == golden
    elapsed = time.perf_counter() - t0
    _report("8 worked example golden form", elapsed, show_perm(out))
