"""Surface language frontend: lexing, parsing, type checking, desugaring.

Source files use extension `.arr`, UTF-8, with `//` line comments.  The
statement grammar:

    method NAME(x: Int, a: Int[]) { stmts }
    var x, y: Int := e        // initializer optional, defaults to 0
    var b: Int[] := a
    skip | x := e | a1 := a2 | x := a[e] | a[e1] := e2
    inhale(a, e, p) | exhale(a, e, p)
    if (b) { .. } else { .. }
    while (b) invariant b1 underinvariant b2 { .. }

Array lookups may appear only as the entire right-hand side of an
assignment (a load) or as the right-hand side of an array store, which is
desugared through a fresh temporary; everywhere else expressions must be
lookup-free.  Array stores with a non-variable right-hand side are desugared
to `t := e2; a[e1] := t`.  Divisibility is written `e % n == 0` or `n | e`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .expr import (
    Add, ArrayVar, BoolConst, BoolExpr, Cmp, Divides, FALSE, FloorDiv, Frac,
    IntConst, IntExpr, IntIte, Length, Lookup, Mul, NotDivides, Not, And, Or,
    PAdd, PIte, PMax, PMin, PSub, PZERO, PermExpr, PointwiseMax, QA, QI, Rd,
    Sub, TRUE, Var, contains_lookup, show_bool, show_int, show_perm,
)


class SourceError(Exception):
    """Lex, parse, or type error, carrying a source span."""

    def __init__(self, span: "SourceSpan", message: str):
        self.span = span
        self.message = message
        super().__init__(f"{span}: {message}")


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


NO_SPAN = SourceSpan("<internal>", 0, 0)


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stmt:
    pass


@dataclass(frozen=True)
class Skip(Stmt):
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class VarDecl(Stmt):
    names: tuple[str, ...]
    is_array: bool
    init: Optional[IntExpr]          # None only for array declarations
    init_array: Optional[str] = None
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class AssignVar(Stmt):
    name: str
    value: IntExpr
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class AssignArray(Stmt):
    target: str
    source: str
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class LoadElem(Stmt):
    name: str
    array: str
    index: IntExpr
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class StoreElem(Stmt):
    array: str
    index: IntExpr
    value: str                       # always a variable after desugaring
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class Inhale(Stmt):
    array: str
    index: IntExpr
    amount: PermExpr
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class Exhale(Stmt):
    array: str
    index: IntExpr
    amount: PermExpr
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class Seq(Stmt):
    first: Stmt
    second: Stmt
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class If(Stmt):
    cond: BoolExpr
    then: Stmt
    other: Stmt
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class While(Stmt):
    cond: BoolExpr
    over_invs: tuple[BoolExpr, ...]
    under_invs: tuple[BoolExpr, ...]
    body: Stmt
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class Param:
    name: str
    is_array: bool
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class Method:
    name: str
    params: tuple[Param, ...]
    body: Stmt
    span: SourceSpan = field(compare=False, default=NO_SPAN)


@dataclass(frozen=True)
class Program:
    methods: tuple[Method, ...]


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

KEYWORDS = {
    "method", "var", "skip", "while", "if", "else", "invariant",
    "underinvariant", "inhale", "exhale", "length", "ite", "min", "max",
    "rd", "true", "false", "Int",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|==|!=|<=|>=|&&|\|\||[-+*/%<>!|(){}\[\],;:])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str      # 'num' | 'ident' | 'kw' | 'op' | 'eof'
    text: str
    span: SourceSpan


def lex(text: str, filename: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SourceError(SourceSpan(filename, line, col),
                              f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        value = m.group()
        span = SourceSpan(filename, line, col)
        if kind == "num":
            tokens.append(Token("num", value, span))
        elif kind == "ident":
            tokens.append(Token("kw" if value in KEYWORDS else "ident", value, span))
        elif kind == "op":
            tokens.append(Token("op", value, span))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            col = len(value) - value.rfind("\n")
        else:
            col += len(value)
        pos = m.end()
    tokens.append(Token("eof", "", SourceSpan(filename, line, col)))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def at(self, text: str) -> bool:
        return self.cur.kind in ("op", "kw") and self.cur.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise SourceError(self.cur.span, f"expected {text!r}, found {self.cur.text!r}")
        tok = self.cur
        self.pos += 1
        return tok

    def ident(self) -> Token:
        if self.cur.kind != "ident":
            raise SourceError(self.cur.span, f"expected identifier, found {self.cur.text!r}")
        tok = self.cur
        self.pos += 1
        return tok

    def save(self) -> int:
        return self.pos

    def restore(self, mark: int) -> None:
        self.pos = mark

    # -- programs -----------------------------------------------------------

    def program(self) -> Program:
        methods = []
        while not self.cur.kind == "eof":
            methods.append(self.method())
        return Program(tuple(methods))

    def method(self) -> Method:
        span = self.expect("method").span
        name = self.ident().text
        self.expect("(")
        params: list[Param] = []
        if not self.at(")"):
            while True:
                group = [self.ident()]
                while self.accept(","):
                    # lookahead: either another name of this group or the
                    # start of the next group; groups share one type
                    group.append(self.ident())
                    if self.at(":"):
                        break
                    if not self.at(","):
                        break
                self.expect(":")
                is_array = self._parse_type()
                params.extend(Param(t.text, is_array, t.span) for t in group)
                if not self.accept(","):
                    break
        self.expect(")")
        body = self.block()
        return Method(name, tuple(params), body, span)

    def _parse_type(self) -> bool:
        self.expect("Int")
        if self.accept("["):
            self.expect("]")
            return True
        return False

    def block(self) -> Stmt:
        span = self.expect("{").span
        if self.accept("}"):
            return Skip(span)
        stmts = [self.statement()]
        while self.accept(";"):
            if self.at("}"):
                break
            stmts.append(self.statement())
        self.expect("}")
        out = stmts[-1]
        for s in reversed(stmts[:-1]):
            out = Seq(s, out, _stmt_span(s))
        return out

    def statement(self) -> Stmt:
        tok = self.cur
        if self.accept("skip"):
            return Skip(tok.span)
        if self.accept("var"):
            names = [self.ident().text]
            while self.accept(","):
                names.append(self.ident().text)
            self.expect(":")
            is_array = self._parse_type()
            init: Optional[IntExpr] = None
            init_array: Optional[str] = None
            if self.accept(":="):
                if is_array:
                    init_array = self.ident().text
                else:
                    init = self.int_expr()
            if not is_array and init is None:
                init = IntConst(0)
            return VarDecl(tuple(names), is_array, init, init_array, tok.span)
        if self.accept("inhale"):
            return self._permission_stmt(Inhale, tok.span)
        if self.accept("exhale"):
            return self._permission_stmt(Exhale, tok.span)
        if self.accept("if"):
            self.expect("(")
            cond = self.bool_expr()
            self.expect(")")
            then = self.block()
            other: Stmt = Skip(tok.span)
            if self.accept("else"):
                other = self.block()
            return If(cond, then, other, tok.span)
        if self.accept("while"):
            self.expect("(")
            cond = self.bool_expr()
            self.expect(")")
            over: list[BoolExpr] = []
            under: list[BoolExpr] = []
            while True:
                if self.accept("invariant"):
                    over.append(self.bool_expr())
                elif self.accept("underinvariant"):
                    under.append(self.bool_expr())
                else:
                    break
            body = self.block()
            return While(cond, tuple(over), tuple(under), body, tok.span)
        # assignment forms
        name = self.ident()
        if self.accept("["):
            index = self.int_expr()
            self.expect("]")
            self.expect(":=")
            rhs = self.int_expr()
            return self._make_store(name.text, index, rhs, tok.span)
        self.expect(":=")
        rhs = self.int_expr()
        if isinstance(rhs, Lookup):
            return LoadElem(name.text, rhs.array, rhs.index, tok.span)
        # array-to-array assignment is recognised later, once types are known
        return AssignVar(name.text, rhs, tok.span)

    def _make_store(self, array: str, index: IntExpr, rhs: IntExpr,
                    span: SourceSpan) -> Stmt:
        if isinstance(rhs, Var):
            return StoreElem(array, index, rhs.name, span)
        # non-variable right-hand side: route through a fresh temporary
        # (resolved against the method's names in a later pass)
        if isinstance(rhs, Lookup):
            load = LoadElem(_FRESH, rhs.array, rhs.index, span)
            return Seq(load, StoreElem(array, index, _FRESH, span), span)
        return Seq(AssignVar(_FRESH, rhs, span), StoreElem(array, index, _FRESH, span), span)

    def _permission_stmt(self, ctor, span: SourceSpan) -> Stmt:
        self.expect("(")
        array = self.ident().text
        self.expect(",")
        index = self.int_expr()
        self.expect(",")
        amount = self.perm_expr()
        self.expect(")")
        if isinstance(amount, PSub):
            raise SourceError(span, "permission operand must be syntactically non-negative")
        return ctor(array, index, amount, span)

    # -- integer expressions --------------------------------------------------

    def int_expr(self) -> IntExpr:
        e = self.int_term()
        while True:
            if self.accept("+"):
                e = Add(e, self.int_term())
            elif self.accept("-"):
                e = Sub(e, self.int_term())
            else:
                return e

    def int_term(self) -> IntExpr:
        e = self.int_atom()
        while True:
            if self.accept("*"):
                rhs = self.int_atom()
                e = self._make_mul(e, rhs)
            elif self.at("/"):
                # floor division only by a positive integer literal
                mark = self.save()
                self.accept("/")
                if self.cur.kind != "num":
                    self.restore(mark)
                    return e
                n = int(self.cur.text)
                self.pos += 1
                if n <= 0:
                    raise SourceError(self.cur.span, "division by non-positive constant")
                e = FloorDiv(e, n)
            else:
                return e

    def _make_mul(self, left: IntExpr, right: IntExpr) -> IntExpr:
        if isinstance(left, IntConst) and isinstance(right, IntConst):
            return IntConst(left.value * right.value)
        if isinstance(left, IntConst):
            return Mul(left.value, right)
        if isinstance(right, IntConst):
            return Mul(right.value, left)
        raise SourceError(self.cur.span,
                          "products must have a constant operand")

    def int_atom(self) -> IntExpr:
        tok = self.cur
        if tok.kind == "num":
            self.pos += 1
            return IntConst(int(tok.text))
        if self.accept("-"):
            inner = self.int_atom()
            if isinstance(inner, IntConst):
                return IntConst(-inner.value)
            return Sub(IntConst(0), inner)
        if self.accept("("):
            e = self.int_expr()
            self.expect(")")
            return e
        if self.accept("length"):
            self.expect("(")
            a = self.ident().text
            self.expect(")")
            return Length(a)
        if self.accept("ite"):
            self.expect("(")
            cond = self.bool_expr()
            self.expect(",")
            t = self.int_expr()
            self.expect(",")
            o = self.int_expr()
            self.expect(")")
            return IntIte(cond, t, o)
        if tok.kind == "ident":
            self.pos += 1
            if self.accept("["):
                idx = self.int_expr()
                self.expect("]")
                return Lookup(tok.text, idx)
            return Var(tok.text)
        raise SourceError(tok.span, f"expected expression, found {tok.text!r}")

    # -- boolean expressions ---------------------------------------------------

    def bool_expr(self) -> BoolExpr:
        b = self.bool_and()
        while self.accept("||"):
            b = Or(b, self.bool_and())
        return b

    def bool_and(self) -> BoolExpr:
        b = self.bool_atom()
        while self.accept("&&"):
            b = And(b, self.bool_atom())
        return b

    def bool_atom(self) -> BoolExpr:
        tok = self.cur
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        if self.accept("!"):
            return Not(self.bool_atom())
        if self.at("("):
            # could be a parenthesised boolean or the left side of a comparison
            mark = self.save()
            self.accept("(")
            try:
                inner = self.bool_expr()
                self.expect(")")
                return inner
            except SourceError:
                self.restore(mark)
        # `n | e` divisibility form
        if tok.kind == "num":
            mark = self.save()
            self.pos += 1
            if self.accept("|"):
                n = int(tok.text)
                if n < 1:
                    raise SourceError(tok.span, "divisibility modulus must be >= 1")
                return Divides(n, self.int_expr())
            self.restore(mark)
        left = self.int_expr()
        if self.accept("%"):
            if self.cur.kind != "num":
                raise SourceError(self.cur.span, "expected modulus constant")
            n = int(self.cur.text)
            self.pos += 1
            if n < 1:
                raise SourceError(tok.span, "divisibility modulus must be >= 1")
            op = self.cur.text
            if not (self.accept("==") or self.accept("!=")):
                raise SourceError(self.cur.span, "expected == or != after e % n")
            if self.cur.kind != "num":
                raise SourceError(self.cur.span, "expected integer after e % n ==")
            k = int(self.cur.text)
            self.pos += 1
            arg = left if k == 0 else Sub(left, IntConst(k))
            return Divides(n, arg) if op == "==" else NotDivides(n, arg)
        for op in ("==", "!=", "<=", ">=", "<", ">"):
            if self.accept(op):
                return Cmp(left, op, self.int_expr())
        raise SourceError(self.cur.span, f"expected comparison, found {self.cur.text!r}")

    # -- permission expressions --------------------------------------------------

    def perm_expr(self) -> PermExpr:
        p = self.perm_atom()
        while True:
            if self.accept("+"):
                p = PAdd(p, self.perm_atom())
            elif self.accept("-"):
                p = PSub(p, self.perm_atom())
            else:
                return p

    def perm_atom(self) -> PermExpr:
        tok = self.cur
        if self.accept("rd"):
            return Rd()
        if tok.kind == "num":
            self.pos += 1
            num = int(tok.text)
            if self.accept("/"):
                if self.cur.kind != "num":
                    raise SourceError(self.cur.span, "expected denominator")
                den = int(self.cur.text)
                self.pos += 1
                if den <= 0:
                    raise SourceError(tok.span, "denominator must be positive")
                return Frac(Fraction(num, den))
            return Frac(Fraction(num))
        if self.accept("("):
            p = self.perm_expr()
            self.expect(")")
            return p
        if self.at("min") or self.at("max"):
            kw = self.cur.text
            self.pos += 1
            if self.accept("["):
                binders = [self.ident().text]
                while self.accept(","):
                    binders.append(self.ident().text)
                self.expect("|")
                guard = self.bool_expr()
                self.expect("]")
                self.expect("(")
                body = self.perm_expr()
                self.expect(")")
                if kw == "min":
                    raise SourceError(tok.span, "pointwise min is not supported")
                return PointwiseMax(tuple(binders), guard, body)
            self.expect("(")
            a = self.perm_expr()
            self.expect(",")
            b = self.perm_expr()
            self.expect(")")
            return PMin(a, b) if kw == "min" else PMax(a, b)
        if self.accept("ite"):
            self.expect("(")
            cond = self.bool_expr()
            self.expect(",")
            t = self.perm_expr()
            self.expect(",")
            o = self.perm_expr()
            self.expect(")")
            return PIte(cond, t, o)
        raise SourceError(tok.span, f"expected permission expression, found {tok.text!r}")


_FRESH = "$fresh$"  # placeholder temporary name resolved per method


def _stmt_span(s: Stmt) -> SourceSpan:
    return s.span  # type: ignore[attr-defined]


# ---------------------------------------------------------------------------
# Fresh temporary resolution and type checking
# ---------------------------------------------------------------------------

def _collect_names(s: Stmt, out: set[str]) -> None:
    if isinstance(s, VarDecl):
        out.update(s.names)
    elif isinstance(s, (AssignVar, LoadElem)):
        out.add(s.name)
    elif isinstance(s, Seq):
        _collect_names(s.first, out)
        _collect_names(s.second, out)
    elif isinstance(s, If):
        _collect_names(s.then, out)
        _collect_names(s.other, out)
    elif isinstance(s, While):
        _collect_names(s.body, out)


def _resolve_fresh(s: Stmt, counter: list[int], used: set[str],
                   generated: list[str]) -> Stmt:
    """Give each desugaring placeholder a method-unique temporary name."""
    if isinstance(s, Seq):
        first = s.first
        second = s.second
        uses_placeholder = (
            isinstance(first, (AssignVar, LoadElem)) and first.name == _FRESH
        )
        if uses_placeholder:
            while f"_t{counter[0]}" in used:
                counter[0] += 1
            name = f"_t{counter[0]}"
            counter[0] += 1
            used.add(name)
            generated.append(name)
            if isinstance(first, AssignVar):
                first = AssignVar(name, first.value, first.span)
            else:
                first = LoadElem(name, first.array, first.index, first.span)
            assert isinstance(second, StoreElem) and second.value == _FRESH
            second = StoreElem(second.array, second.index, name, second.span)
            return Seq(first, second, s.span)
        return Seq(_resolve_fresh(first, counter, used, generated),
                   _resolve_fresh(second, counter, used, generated), s.span)
    if isinstance(s, If):
        return If(s.cond, _resolve_fresh(s.then, counter, used, generated),
                  _resolve_fresh(s.other, counter, used, generated), s.span)
    if isinstance(s, While):
        return While(s.cond, s.over_invs, s.under_invs,
                     _resolve_fresh(s.body, counter, used, generated), s.span)
    return s


def _renest(s: Stmt) -> Stmt:
    """Canonical right-nested sequencing, so structural equality is
    independent of how statement lists were grouped during parsing."""
    if isinstance(s, Seq):
        parts = [_renest(p) for p in _flatten_seq(s)]
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = Seq(p, out, _stmt_span(p))
        return out
    if isinstance(s, If):
        return If(s.cond, _renest(s.then), _renest(s.other), s.span)
    if isinstance(s, While):
        return While(s.cond, s.over_invs, s.under_invs, _renest(s.body), s.span)
    return s


def _method_arrays(m: Method, body: Stmt) -> set[str]:
    arrays = {p.name for p in m.params if p.is_array}

    def go(s: Stmt) -> None:
        if isinstance(s, VarDecl) and s.is_array:
            arrays.update(s.names)
        elif isinstance(s, Seq):
            go(s.first)
            go(s.second)
        elif isinstance(s, If):
            go(s.then)
            go(s.other)
        elif isinstance(s, While):
            go(s.body)

    go(body)
    return arrays


def _retype_bool(b: BoolExpr, arrays: set[str], span: SourceSpan) -> BoolExpr:
    """Turn comparisons between array-typed variables into ArrayVar nodes."""
    if isinstance(b, Cmp):
        la = isinstance(b.left, Var) and b.left.name in arrays
        ra = isinstance(b.right, Var) and b.right.name in arrays
        if la or ra:
            if not (la and ra) or b.op not in ("==", "!="):
                raise SourceError(span, "arrays compare only with ==/!= to arrays")
            return Cmp(ArrayVar(b.left.name), b.op, ArrayVar(b.right.name))
        return b
    if isinstance(b, And):
        return And(_retype_bool(b.left, arrays, span), _retype_bool(b.right, arrays, span))
    if isinstance(b, Or):
        return Or(_retype_bool(b.left, arrays, span), _retype_bool(b.right, arrays, span))
    if isinstance(b, Not):
        return Not(_retype_bool(b.arg, arrays, span))
    return b


def _retype_stmt(s: Stmt, arrays: set[str]) -> Stmt:
    if isinstance(s, AssignVar):
        if s.name in arrays:
            if not (isinstance(s.value, Var) and s.value.name in arrays):
                raise SourceError(s.span, "array variables are assigned only from arrays")
            return AssignArray(s.name, s.value.name, s.span)
        return s
    if isinstance(s, Seq):
        return Seq(_retype_stmt(s.first, arrays), _retype_stmt(s.second, arrays), s.span)
    if isinstance(s, If):
        return If(_retype_bool(s.cond, arrays, s.span),
                  _retype_stmt(s.then, arrays), _retype_stmt(s.other, arrays), s.span)
    if isinstance(s, While):
        return While(_retype_bool(s.cond, arrays, s.span),
                     tuple(_retype_bool(i, arrays, s.span) for i in s.over_invs),
                     tuple(_retype_bool(i, arrays, s.span) for i in s.under_invs),
                     _retype_stmt(s.body, arrays), s.span)
    return s


class _Checker:
    """Scope and type checking over a method body."""

    def __init__(self, method: Method):
        self.ints: set[str] = set()
        self.arrays: set[str] = set()
        for p in method.params:
            if p.name in self.ints or p.name in self.arrays:
                raise SourceError(p.span, f"duplicate parameter {p.name}")
            self._check_name(p.name, p.span)
            (self.arrays if p.is_array else self.ints).add(p.name)

    def _check_name(self, name: str, span: SourceSpan) -> None:
        if name in (QA, QI):
            raise SourceError(span, f"{name} is reserved")

    def declare(self, name: str, is_array: bool, span: SourceSpan) -> None:
        self._check_name(name, span)
        if name in self.ints or name in self.arrays:
            raise SourceError(span, f"redeclaration of {name}")
        (self.arrays if is_array else self.ints).add(name)

    def int_var(self, name: str, span: SourceSpan) -> None:
        if name in self.arrays:
            raise SourceError(span, f"array variable {name} used as integer")
        if name not in self.ints:
            raise SourceError(span, f"undeclared variable {name}")

    def array_var(self, name: str, span: SourceSpan) -> None:
        if name in self.ints:
            raise SourceError(span, f"integer variable {name} used as array")
        if name not in self.arrays:
            raise SourceError(span, f"undeclared array {name}")

    def int_expr(self, e: IntExpr, span: SourceSpan, allow_lookup: bool = False) -> None:
        if isinstance(e, IntConst):
            return
        if isinstance(e, Var):
            self.int_var(e.name, span)
            return
        if isinstance(e, ArrayVar):
            raise SourceError(span, f"array variable {e.name} used as integer")
        if isinstance(e, Mul):
            self.int_expr(e.arg, span)
            return
        if isinstance(e, (Add, Sub)):
            self.int_expr(e.left, span)
            self.int_expr(e.right, span)
            return
        if isinstance(e, Lookup):
            if not allow_lookup:
                raise SourceError(
                    span, "array lookups are only allowed as the whole "
                          "right-hand side of an assignment")
            self.array_var(e.array, span)
            self.int_expr(e.index, span)
            return
        if isinstance(e, Length):
            self.array_var(e.array, span)
            return
        if isinstance(e, IntIte):
            self.bool_expr(e.cond, span)
            self.int_expr(e.then, span)
            self.int_expr(e.other, span)
            return
        if isinstance(e, FloorDiv):
            self.int_expr(e.arg, span)
            return
        raise SourceError(span, f"unsupported expression {type(e).__name__}")

    def bool_expr(self, b: BoolExpr, span: SourceSpan) -> None:
        if isinstance(b, BoolConst):
            return
        if isinstance(b, Cmp):
            # array equality comparisons appear as ArrayVar after retyping
            if isinstance(b.left, ArrayVar) or isinstance(b.right, ArrayVar):
                if b.op not in ("==", "!=") or not (
                        isinstance(b.left, ArrayVar) and isinstance(b.right, ArrayVar)):
                    raise SourceError(span, "arrays compare only with ==/!= to arrays")
                self.array_var(b.left.name, span)
                self.array_var(b.right.name, span)
                return
            self.int_expr(b.left, span)
            self.int_expr(b.right, span)
            return
        if isinstance(b, (Divides, NotDivides)):
            self.int_expr(b.arg, span)
            return
        if isinstance(b, (And, Or)):
            self.bool_expr(b.left, span)
            self.bool_expr(b.right, span)
            return
        if isinstance(b, Not):
            self.bool_expr(b.arg, span)
            return
        raise SourceError(span, f"unsupported boolean {type(b).__name__}")

    def perm_expr(self, p: PermExpr, span: SourceSpan) -> None:
        if isinstance(p, (Frac, Rd)):
            return
        if isinstance(p, (PAdd, PSub, PMin, PMax)):
            self.perm_expr(p.left, span)
            self.perm_expr(p.right, span)
            return
        if isinstance(p, PIte):
            self.bool_expr(p.cond, span)
            self.perm_expr(p.then, span)
            self.perm_expr(p.other, span)
            return
        raise SourceError(span, f"unsupported permission form {type(p).__name__}")

    def stmt(self, s: Stmt) -> None:
        if isinstance(s, Skip):
            return
        if isinstance(s, VarDecl):
            for name in s.names:
                self.declare(name, s.is_array, s.span)
            if s.is_array:
                if s.init_array is None:
                    raise SourceError(s.span, "array declarations need an initializer")
                self.array_var(s.init_array, s.span)
            else:
                assert s.init is not None
                self.int_expr(s.init, s.span)
            return
        if isinstance(s, AssignVar):
            self.int_var(s.name, s.span)
            self.int_expr(s.value, s.span)
            return
        if isinstance(s, AssignArray):
            self.array_var(s.target, s.span)
            self.array_var(s.source, s.span)
            return
        if isinstance(s, LoadElem):
            self.int_var(s.name, s.span)
            self.array_var(s.array, s.span)
            self.int_expr(s.index, s.span)
            return
        if isinstance(s, StoreElem):
            self.array_var(s.array, s.span)
            self.int_expr(s.index, s.span)
            self.int_var(s.value, s.span)
            return
        if isinstance(s, (Inhale, Exhale)):
            self.array_var(s.array, s.span)
            self.int_expr(s.index, s.span)
            self.perm_expr(s.amount, s.span)
            return
        if isinstance(s, Seq):
            self.stmt(s.first)
            self.stmt(s.second)
            return
        if isinstance(s, If):
            self.bool_expr(s.cond, s.span)
            self.stmt(s.then)
            self.stmt(s.other)
            return
        if isinstance(s, While):
            self.bool_expr(s.cond, s.span)
            for inv in s.over_invs + s.under_invs:
                self.bool_expr(inv, s.span)
            self.stmt(s.body)
            return
        raise SourceError(_stmt_span(s), f"unsupported statement {type(s).__name__}")


def parse_program(text: str, filename: str = "<input>") -> Program:
    """Parse, desugar, and type-check a source file."""
    parser = _Parser(lex(text, filename))
    program = parser.program()
    seen: set[str] = set()
    methods = []
    for m in program.methods:
        if m.name in seen:
            raise SourceError(m.span, f"duplicate method {m.name}")
        seen.add(m.name)
        used: set[str] = {p.name for p in m.params}
        _collect_names(m.body, used)
        used.discard(_FRESH)
        generated: list[str] = []
        body = _resolve_fresh(m.body, [0], used, generated)
        # fresh temporaries must be declared for scope checking
        for t in sorted(generated):
            body = Seq(VarDecl((t,), False, IntConst(0), None, m.span), body, m.span)
        body = _retype_stmt(body, _method_arrays(m, body))
        resolved = Method(m.name, m.params, _renest(body), m.span)
        _Checker(resolved).stmt(resolved.body)
        methods.append(resolved)
    return Program(tuple(methods))


def _declared_names(s: Stmt) -> set[str]:
    out: set[str] = set()

    def go(node: Stmt) -> None:
        if isinstance(node, VarDecl):
            out.update(node.names)
        elif isinstance(node, Seq):
            go(node.first)
            go(node.second)
        elif isinstance(node, If):
            go(node.then)
            go(node.other)
        elif isinstance(node, While):
            go(node.body)

    go(s)
    return out


def parse_file(path: str) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read(), path)


def _parse_with(text: str, production) -> object:
    parser = _Parser(lex(text))
    out = production(parser)
    if parser.cur.kind != "eof":
        raise SourceError(parser.cur.span, f"trailing input {parser.cur.text!r}")
    return out


def _retype_expr(e, arrays: set[str]):
    from .expr import _rebuild

    def go(node):
        if isinstance(node, Cmp):
            return _retype_bool(node, arrays, NO_SPAN)
        if isinstance(node, (Var, ArrayVar, IntConst, Length, BoolConst)):
            return node
        from .expr import Frac, Rd
        if isinstance(node, (Frac, Rd)):
            return node
        return _rebuild(node, go)

    return go(e)


def parse_int_expr(text: str, arrays: tuple[str, ...] = ()) -> IntExpr:
    return _retype_expr(_parse_with(text, _Parser.int_expr), set(arrays))


def parse_bool_expr(text: str, arrays: tuple[str, ...] = ()) -> BoolExpr:
    return _retype_expr(_parse_with(text, _Parser.bool_expr), set(arrays))


def parse_perm_expr(text: str, arrays: tuple[str, ...] = ()) -> PermExpr:
    return _retype_expr(_parse_with(text, _Parser.perm_expr), set(arrays))


# ---------------------------------------------------------------------------
# Program pretty-printing (round-trips through parse_program)
# ---------------------------------------------------------------------------

def show_program(program: Program) -> str:
    return "\n".join(show_method(m) for m in program.methods) + "\n"


def show_method(m: Method, spec_lines: tuple[str, ...] = ()) -> str:
    params = ", ".join(f"{p.name}: Int[]" if p.is_array else f"{p.name}: Int"
                       for p in m.params)
    lines = [f"method {m.name}({params})"]
    for s in spec_lines:
        lines.append(f"    {s}")
    lines.append("{")
    lines.extend(_show_stmt(m.body, 1))
    lines.append("}")
    return "\n".join(lines)


def _flatten_seq(s: Stmt) -> list[Stmt]:
    if isinstance(s, Seq):
        return _flatten_seq(s.first) + _flatten_seq(s.second)
    return [s]


def _show_stmt(s: Stmt, depth: int) -> list[str]:
    ind = "    " * depth
    parts = _flatten_seq(s)
    lines: list[str] = []
    for i, node in enumerate(parts):
        sep = ";" if i + 1 < len(parts) else ""
        lines.extend(_show_one(node, depth))
        lines[-1] += sep
    return lines or [ind + "skip"]


def _show_one(s: Stmt, depth: int) -> list[str]:
    ind = "    " * depth
    if isinstance(s, Skip):
        return [ind + "skip"]
    if isinstance(s, VarDecl):
        names = ", ".join(s.names)
        ty = "Int[]" if s.is_array else "Int"
        if s.is_array:
            return [f"{ind}var {names}: {ty} := {s.init_array}"]
        return [f"{ind}var {names}: {ty} := {show_int(s.init)}"]
    if isinstance(s, AssignVar):
        return [f"{ind}{s.name} := {show_int(s.value)}"]
    if isinstance(s, AssignArray):
        return [f"{ind}{s.target} := {s.source}"]
    if isinstance(s, LoadElem):
        return [f"{ind}{s.name} := {s.array}[{show_int(s.index)}]"]
    if isinstance(s, StoreElem):
        return [f"{ind}{s.array}[{show_int(s.index)}] := {s.value}"]
    if isinstance(s, Inhale):
        return [f"{ind}inhale({s.array}, {show_int(s.index)}, {show_perm(s.amount)})"]
    if isinstance(s, Exhale):
        return [f"{ind}exhale({s.array}, {show_int(s.index)}, {show_perm(s.amount)})"]
    if isinstance(s, If):
        lines = [f"{ind}if ({show_bool(s.cond)}) {{"]
        lines.extend(_show_stmt(s.then, depth + 1))
        if isinstance(s.other, Skip):
            lines.append(ind + "}")
        else:
            lines.append(ind + "} else {")
            lines.extend(_show_stmt(s.other, depth + 1))
            lines.append(ind + "}")
        return lines
    if isinstance(s, While):
        lines = [f"{ind}while ({show_bool(s.cond)})"]
        for inv in s.over_invs:
            lines.append(f"{ind}    invariant {show_bool(inv)}")
        for inv in s.under_invs:
            lines.append(f"{ind}    underinvariant {show_bool(inv)}")
        lines.append(ind + "{")
        lines.extend(_show_stmt(s.body, depth + 1))
        lines.append(ind + "}")
        return lines
    raise SourceError(_stmt_span(s), f"cannot print {type(s).__name__}")
