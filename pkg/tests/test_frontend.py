import glob
import os

import pytest

from permax.expr import Divides, IntConst, Mul, Var
from permax.frontend import (
    AssignVar, If, LoadElem, Method, Seq, Skip, SourceError, StoreElem,
    VarDecl, While, parse_file, parse_program, show_program,
)

from conftest import CORPUS


COPY_EVEN = """
method copyEven(a: Int[]) {
    var j, v: Int := 0;
    while (j < length(a)) {
        if (j % 2 == 0) { v := a[j] } else { a[j] := v };
        j := j + 1
    }
}
"""


def _stmts(s):
    if isinstance(s, Seq):
        return _stmts(s.first) + _stmts(s.second)
    return [s]


class TestParsing:
    def test_copy_even_structure(self):
        prog = parse_program(COPY_EVEN, "copyEven.arr")
        assert len(prog.methods) == 1
        m = prog.methods[0]
        assert m.name == "copyEven"
        assert [p.name for p in m.params] == ["a"]
        assert m.params[0].is_array
        body = _stmts(m.body)
        assert isinstance(body[0], VarDecl)
        assert body[0].names == ("j", "v")
        loop = body[1]
        assert isinstance(loop, While)
        inner = _stmts(loop.body)
        branch = inner[0]
        assert isinstance(branch, If)
        assert branch.cond == Divides(2, Var("j"))
        assert isinstance(branch.then, LoadElem)
        assert isinstance(branch.other, StoreElem)

    def test_skip_body(self):
        prog = parse_program("method m(a: Int[]) { skip }")
        assert isinstance(prog.methods[0].body, Skip)

    def test_store_desugaring(self):
        prog = parse_program(
            "method m(a: Int[], i: Int, j: Int) { a[i + 1] := j * 2 }")
        stmts = _stmts(prog.methods[0].body)
        # declaration of the fresh temporary, the assignment, then the store
        decl, assign, store = stmts
        assert isinstance(decl, VarDecl)
        assert isinstance(assign, AssignVar)
        assert assign.value == Mul(2, Var("j"))
        assert isinstance(store, StoreElem)
        assert store.value == assign.name

    def test_store_of_variable_not_desugared(self):
        prog = parse_program("method m(a: Int[], x: Int) { a[0] := x }")
        (store,) = _stmts(prog.methods[0].body)
        assert isinstance(store, StoreElem)
        assert store.value == "x"

    def test_lookup_rhs_becomes_load(self):
        prog = parse_program("method m(a: Int[], x: Int) { x := a[2] }")
        (load,) = _stmts(prog.methods[0].body)
        assert isinstance(load, LoadElem)

    def test_store_of_lookup_goes_through_temp(self):
        prog = parse_program("method m(a: Int[], b: Int[]) { a[0] := b[1] }")
        decl, load, store = _stmts(prog.methods[0].body)
        assert isinstance(load, LoadElem)
        assert isinstance(store, StoreElem)
        assert store.value == load.name

    def test_invariant_annotations(self):
        src = """
        method m(a: Int[]) {
            var j: Int := 0;
            while (j < length(a))
                invariant 0 <= j && j <= length(a)
            { j := j + 1 }
        }
        """
        loop = _stmts(parse_program(src).methods[0].body)[1]
        assert isinstance(loop, While)
        assert len(loop.over_invs) == 1
        assert loop.under_invs == ()

    def test_no_annotations_empty_lists(self):
        src = "method m(x: Int) { var j: Int := 0; while (j < x) { j := j + 1 } }"
        loop = _stmts(parse_program(src).methods[0].body)[1]
        assert loop.over_invs == ()
        assert loop.under_invs == ()

    def test_underinvariant(self):
        src = """
        method m(x: Int) {
            var j: Int := 0;
            while (j < x) underinvariant j >= 0 { j := j + 1 }
        }
        """
        loop = _stmts(parse_program(src).methods[0].body)[1]
        assert len(loop.under_invs) == 1

    def test_divisibility_surface_forms(self):
        a = parse_program("method m(x: Int) { if (x % 3 == 0) { skip } }")
        b = parse_program("method m(x: Int) { if (3 | x) { skip } }")
        assert a == b


class TestErrors:
    def test_undeclared_variable(self):
        with pytest.raises(SourceError, match="undeclared"):
            parse_program("method m(a: Int[]) { x := 1 }")

    def test_array_used_as_int(self):
        with pytest.raises(SourceError):
            parse_program("method m(a: Int[], x: Int) { x := a + 1 }")

    def test_int_indexed(self):
        with pytest.raises(SourceError):
            parse_program("method m(x: Int, y: Int) { y := x[0] }")

    def test_lookup_in_guard_rejected(self):
        with pytest.raises(SourceError, match="lookup"):
            parse_program("method m(a: Int[]) { if (a[0] > 0) { skip } }")

    def test_lookup_nested_in_rhs_rejected(self):
        with pytest.raises(SourceError, match="lookup"):
            parse_program("method m(a: Int[], x: Int) { x := a[0] + 1 }")

    def test_negative_permission_literal(self):
        with pytest.raises(SourceError):
            parse_program("method m(a: Int[]) { exhale(a, 0, 0 - 1) }")

    def test_subtraction_permission_operand(self):
        with pytest.raises(SourceError, match="non-negative"):
            parse_program("method m(a: Int[]) { inhale(a, 0, 1 - rd) }")

    def test_error_message_carries_span(self):
        try:
            parse_program("method m(a: Int[]) {\n    x := 1\n}", "f.arr")
        except SourceError as e:
            assert "f.arr:2" in str(e)
        else:
            pytest.fail("expected a SourceError")

    def test_duplicate_method(self):
        with pytest.raises(SourceError, match="duplicate"):
            parse_program("method m(x: Int) { skip } method m(y: Int) { skip }")

    def test_reserved_names(self):
        with pytest.raises(SourceError, match="reserved"):
            parse_program("method m(qi: Int) { skip }")


class TestRoundTrip:
    @pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(CORPUS, "*.arr"))))
    def test_corpus_roundtrip(self, path):
        prog = parse_file(path)
        printed = show_program(prog)
        assert parse_program(printed, path) == prog

    def test_spans_attached(self):
        prog = parse_program(COPY_EVEN, "copyEven.arr")

        def walk(s):
            assert s.span is not None
            if isinstance(s, Seq):
                walk(s.first)
                walk(s.second)
            elif isinstance(s, If):
                walk(s.then)
                walk(s.other)
            elif isinstance(s, While):
                walk(s.body)

        walk(prog.methods[0].body)
