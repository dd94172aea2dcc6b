"""Backward permission analysis: required permissions and permission
differences for all statements, loop summarization through pointwise
maxima, the loop soundness condition, and method-level assembly.

Loops are summarized by projecting the body's requirement over the integer
variables it modifies, constrained by an over-approximate invariant and the
loop guard; gained permissions are projected over an under-approximate
invariant (false unless annotated).  The resulting pointwise maxima are
eliminated eagerly, so all intermediate expressions stay maximum-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .approx import havoc_over, havoc_under, over_perm, under_perm
from .expr import (
    Add, And, ArrayVar, BoolConst, BoolExpr, Cmp, Divides, FALSE, FloorDiv,
    Frac, IntConst, IntExpr, IntIte, Length, Lookup, Mul, Not, NotDivides,
    Or, PAdd, PIte, PMax, PMin, PSub, PZERO, PermAtLeast, PermExpr,
    PermValue, PointwiseMax, PONE, PRD, QA, QI, Rd, Sub, TRUE, Var,
    fresh_name, free_vars, perm_at, substitute_array_lookups,
    substitute_array_var, substitute_var,
)
from .frontend import (
    AssignArray, AssignVar, Exhale, If, Inhale, LoadElem, Method, Seq, Skip,
    SourceError, SourceSpan, StoreElem, Stmt, VarDecl, While,
)
from .invariants import LoopMeta, forward_intervals, resolve_invariants
from .maxelim import DEFAULT_FILTER_BUDGET, eliminate
from .simplify import nnf, simplify_bool, simplify_perm


class InferenceError(Exception):
    pass


@dataclass
class AnalysisConfig:
    filter_budget: int = DEFAULT_FILTER_BUDGET
    check_range: tuple[int, int] = (-4, 8)
    validity_budget: int = 5_000_000


@dataclass
class LoopReport:
    span: SourceSpan
    invariant_used: BoolExpr
    under_invariant: BoolExpr
    exhale_free: bool
    pre: PermExpr
    delta: PermExpr
    condition: Optional[BoolExpr]   # None for exhale-free loops


@dataclass
class MethodSpec:
    name: str
    precondition: PermExpr
    postcondition: PermExpr
    loops: list[LoopReport]
    unsatisfiable: bool = False


# ---------------------------------------------------------------------------
# Floor-division elimination
# ---------------------------------------------------------------------------

def _contains_floordiv(e: IntExpr) -> bool:
    from .expr import _children
    if isinstance(e, FloorDiv):
        return True
    return any(isinstance(c, IntExpr) and _contains_floordiv(c)
               for c in _children(e))


def elim_floordiv_bool(b: BoolExpr) -> BoolExpr:
    """Rewrite comparisons against floor divisions using the floor laws
    x <= e/n  <=>  n*x <= e   and   e/n <= x  <=>  e <= n*x + n - 1.

    Only single-sided occurrences are supported; the surface language only
    produces divisions in guard positions like j < length(a)/2.
    """
    if isinstance(b, And):
        return And(elim_floordiv_bool(b.left), elim_floordiv_bool(b.right))
    if isinstance(b, Or):
        return Or(elim_floordiv_bool(b.left), elim_floordiv_bool(b.right))
    if isinstance(b, Not):
        return Not(elim_floordiv_bool(b.arg))
    if isinstance(b, Cmp):
        return _elim_floordiv_cmp(b)
    if isinstance(b, (Divides, NotDivides)):
        if _contains_floordiv(b.arg):
            raise InferenceError("floor division inside divisibility is unsupported")
        return b
    return b


def _elim_floordiv_cmp(b: Cmp) -> BoolExpr:
    left_fd = isinstance(b.left, FloorDiv)
    right_fd = isinstance(b.right, FloorDiv)
    if not left_fd and not right_fd:
        if _contains_floordiv(b.left) or _contains_floordiv(b.right):
            raise InferenceError(
                "floor division must stand alone on one side of a comparison")
        return b
    if left_fd and right_fd:
        raise InferenceError("floor division on both comparison sides is unsupported")
    if left_fd:
        # e/n op x  ->  mirror to  x op' e/n
        from .expr import swap_cmp_op
        return _elim_floordiv_cmp(Cmp(b.right, swap_cmp_op(b.op), b.left))
    fd = b.right
    assert isinstance(fd, FloorDiv)
    if _contains_floordiv(fd.arg) or _contains_floordiv(b.left):
        raise InferenceError("nested floor division is unsupported")
    x, e, n = b.left, fd.arg, fd.divisor
    nx = Mul(n, x)
    if b.op == "<=":
        return Cmp(nx, "<=", e)
    if b.op == "<":
        return Cmp(Add(nx, IntConst(n)), "<=", e)
    if b.op == ">=":
        return Cmp(e, "<=", Add(nx, IntConst(n - 1)))
    if b.op == ">":
        return Cmp(e, "<=", Sub(nx, IntConst(1)))
    if b.op == "==":
        return And(Cmp(nx, "<=", e), Cmp(e, "<=", Add(nx, IntConst(n - 1))))
    return Or(Cmp(e, "<", nx), Cmp(Add(nx, IntConst(n - 1)), "<", e))


def _check_no_floordiv(e: IntExpr, span: SourceSpan) -> None:
    if _contains_floordiv(e):
        raise SourceError(span, "floor division is only allowed in comparisons")


# ---------------------------------------------------------------------------
# Backward rules
# ---------------------------------------------------------------------------

def _store_builder(array: str, index: IntExpr, value: str):
    """The aliasing substitution applied to continuations of array stores:
    each lookup a'[e'] becomes ite(index = e' and array = a', value, a'[e'])."""
    def build(a2: str, e2: IntExpr) -> IntExpr:
        cond = And(Cmp(index, "==", e2),
                   Cmp(ArrayVar(array), "==", ArrayVar(a2)))
        return IntIte(cond, Var(value), Lookup(a2, e2))
    return build


class Analyzer:
    def __init__(self, metas: dict[int, LoopMeta],
                 config: Optional[AnalysisConfig] = None):
        self.metas = metas
        self.config = config or AnalysisConfig()
        self.loop_reports: list[LoopReport] = []

    # -- required permissions -------------------------------------------------

    def required(self, s: Stmt, after: PermExpr) -> PermExpr:
        out = self._required(s, after)
        return simplify_perm(out)

    def _required(self, s: Stmt, p: PermExpr) -> PermExpr:
        if isinstance(s, Skip):
            return p
        if isinstance(s, VarDecl):
            if s.is_array:
                out = p
                for name in s.names:
                    out = substitute_array_var(out, name, s.init_array)
                return out
            out = p
            for name in s.names:
                out = substitute_var(out, name, s.init)
            return out
        if isinstance(s, AssignVar):
            _check_no_floordiv(s.value, s.span)
            return substitute_var(p, s.name, s.value)
        if isinstance(s, AssignArray):
            return substitute_array_var(p, s.target, s.source)
        if isinstance(s, LoadElem):
            subbed = substitute_var(p, s.name, Lookup(s.array, s.index))
            return PMax(subbed, perm_at(s.array, s.index, PRD))
        if isinstance(s, StoreElem):
            subbed = substitute_array_lookups(
                p, _store_builder(s.array, s.index, s.value))
            return PMax(subbed, perm_at(s.array, s.index, PONE))
        if isinstance(s, Exhale):
            return PAdd(p, perm_at(s.array, s.index, s.amount))
        if isinstance(s, Inhale):
            weakened = havoc_under(p, s.array, s.index)
            return PMax(PZERO, PSub(weakened, perm_at(s.array, s.index, s.amount)))
        if isinstance(s, Seq):
            return self.required(s.first, self.required(s.second, p))
        if isinstance(s, If):
            guard = elim_floordiv_bool(s.cond)
            return PIte(guard, self.required(s.then, p), self.required(s.other, p))
        if isinstance(s, While):
            return self._required_loop(s, p)
        raise InferenceError(f"unsupported statement {type(s).__name__}")

    # -- permission difference ------------------------------------------------

    def delta(self, s: Stmt, after: PermExpr) -> PermExpr:
        out = self._delta(s, after)
        return simplify_perm(out)

    def _delta(self, s: Stmt, p: PermExpr) -> PermExpr:
        if isinstance(s, Skip):
            return p
        if isinstance(s, VarDecl):
            if s.is_array:
                out = p
                for name in s.names:
                    out = substitute_array_var(out, name, s.init_array)
                return out
            out = p
            for name in s.names:
                out = substitute_var(out, name, s.init)
            return out
        if isinstance(s, AssignVar):
            return substitute_var(p, s.name, s.value)
        if isinstance(s, AssignArray):
            return substitute_array_var(p, s.target, s.source)
        if isinstance(s, LoadElem):
            return substitute_var(p, s.name, Lookup(s.array, s.index))
        if isinstance(s, StoreElem):
            return substitute_array_lookups(
                p, _store_builder(s.array, s.index, s.value))
        if isinstance(s, Exhale):
            return PSub(p, perm_at(s.array, s.index, s.amount))
        if isinstance(s, Inhale):
            widened = havoc_over(p, s.array, s.index)
            return PAdd(widened, perm_at(s.array, s.index, s.amount))
        if isinstance(s, Seq):
            return self.delta(s.first, self.delta(s.second, p))
        if isinstance(s, If):
            guard = elim_floordiv_bool(s.cond)
            return PIte(guard, self.delta(s.then, p), self.delta(s.other, p))
        if isinstance(s, While):
            return self._delta_loop(s, p)
        raise InferenceError(f"unsupported statement {type(s).__name__}")

    # -- loops ----------------------------------------------------------------

    def _loop_parts(self, s: While) -> tuple[LoopMeta, BoolExpr, BoolExpr, BoolExpr, BoolExpr]:
        meta = self.metas[id(s)]
        guard = elim_floordiv_bool(s.cond)
        not_guard = nnf(Not(guard))
        over = elim_floordiv_bool(meta.over)
        under = elim_floordiv_bool(meta.under)
        return meta, guard, not_guard, over, under

    def _project(self, meta: LoopMeta, constraint: BoolExpr,
                 body: PermExpr) -> PermExpr:
        """max over the loop's modified variables, constrained; eliminated
        immediately so results stay maximum-free."""
        body = simplify_perm(body)
        if body == PZERO:
            return PZERO
        if not meta.modified:
            return simplify_perm(PIte(constraint, body, PZERO))
        node = PointwiseMax(meta.modified, constraint, body)
        return eliminate(node, self.config.filter_budget)

    def _loop_d(self, s: While) -> PermExpr:
        """Permissions possibly lost (negative) or definitely gained
        (positive) over all iterations of the loop."""
        meta, guard, _, over, under = self._loop_parts(s)
        dbody = self.delta(s.body, PZERO)
        gained = self._project(
            meta, And(under, guard) if under != TRUE else guard,
            under_perm(PMax(PZERO, dbody)))
        lost = self._project(
            meta, And(over, guard) if over != TRUE else guard,
            over_perm(PMax(PZERO, PSub(PZERO, dbody))))
        return simplify_perm(PSub(gained, lost))

    def _required_loop(self, s: While, p: PermExpr) -> PermExpr:
        meta, guard, not_guard, over, _ = self._loop_parts(s)
        body_pre = self.required(s.body, PZERO)
        m_body = self._project(meta, And(over, guard) if over != TRUE else guard,
                               over_perm(body_pre))
        m_after = self._project(meta, And(over, not_guard) if over != TRUE else not_guard,
                                over_perm(p))
        d = self._loop_d(s)
        claim = PMax(m_body, PSub(m_after, d))
        self._record_loop(s, meta, over, body_pre, m_body)
        return PIte(guard, claim, p)

    def _delta_loop(self, s: While, p: PermExpr) -> PermExpr:
        meta, guard, not_guard, over, under = self._loop_parts(s)
        d = self._loop_d(s)
        after_gain = self._project(
            meta, And(under, not_guard) if under != TRUE else not_guard,
            under_perm(PMax(PZERO, p)))
        after_loss = self._project(
            meta, And(over, not_guard) if over != TRUE else not_guard,
            over_perm(PMax(PZERO, PSub(PZERO, p))))
        carried = PSub(after_gain, after_loss)
        return PIte(guard, PAdd(d, carried), p)

    def _record_loop(self, s: While, meta: LoopMeta, over: BoolExpr,
                     body_pre: PermExpr, m_body: PermExpr) -> None:
        if any(r.span == s.span for r in self.loop_reports):
            return
        condition = None
        if not meta.exhale_free:
            condition = self.soundness_condition(s)
        loop_delta = simplify_perm(self.delta(s, PZERO))
        self.loop_reports.append(LoopReport(
            span=s.span,
            invariant_used=simplify_bool(over),
            under_invariant=simplify_bool(elim_floordiv_bool(meta.under)),
            exhale_free=meta.exhale_free,
            pre=m_body,
            delta=loop_delta,
            condition=condition,
        ))

    # -- soundness condition ----------------------------------------------------

    def soundness_condition(self, s: While) -> BoolExpr:
        """The two-iteration interference check: the joint requirement of
        two distinct iterations may not exceed the pointwise maximum of
        their individual requirements.

        Built with fresh variable vectors substituted for the modified
        variables; qa and qi stay free, encoding a pointwise claim over all
        locations.  When the modified set is empty an implicit iteration
        counter distinguishes iterations, which turns the distinctness
        hypothesis into true.
        """
        meta, guard, _, over, _ = self._loop_parts(s)
        body_pre = over_perm(self.required(s.body, PZERO))
        used = set(free_vars(body_pre)) | set(free_vars(over)) | set(free_vars(guard)) \
            | set(meta.modified)
        v1 = {x: fresh_name(f"{x}_1", used) for x in meta.modified}
        v2 = {x: fresh_name(f"{x}_2", used) for x in meta.modified}

        def subst_all(expr, mapping):
            out = expr
            for x, v in mapping.items():
                out = substitute_var(out, x, Var(v))
            return out

        inv_and_guard = And(over, guard) if over != TRUE else guard
        hyp1 = subst_all(inv_and_guard, v1)
        hyp2 = subst_all(inv_and_guard, v2)
        if meta.counter_added:
            distinct: BoolExpr = TRUE
        else:
            distinct = FALSE
            for x in meta.modified:
                neq = Cmp(Var(v1[x]), "!=", Var(v2[x]))
                distinct = neq if distinct == FALSE else Or(distinct, neq)
        pre_1 = subst_all(body_pre, v1)
        pre_2 = subst_all(body_pre, v2)
        sequential = subst_all(
            over_perm(self.required(s.body, pre_2)), v1)
        lhs = PMax(pre_1, pre_2)
        implication = Or(nnf(Not(And(And(hyp1, hyp2), distinct))),
                         PermAtLeast(simplify_perm(lhs), simplify_perm(sequential)))
        return simplify_bool(implication)


# ---------------------------------------------------------------------------
# Method-level assembly
# ---------------------------------------------------------------------------

def collect_loops(s: Stmt) -> list[While]:
    out: list[While] = []

    def go(node: Stmt) -> None:
        if isinstance(node, While):
            out.append(node)
            go(node.body)
        elif isinstance(node, Seq):
            go(node.first)
            go(node.second)
        elif isinstance(node, If):
            go(node.then)
            go(node.other)

    go(s)
    return out


def loop_metas(method: Method) -> dict[int, LoopMeta]:
    inferred = forward_intervals(method)
    metas: dict[int, LoopMeta] = {}
    for loop in collect_loops(method.body):
        metas[id(loop)] = resolve_invariants(loop, inferred.get(id(loop), TRUE))
    return metas


def infer_method(method: Method,
                 config: Optional[AnalysisConfig] = None) -> MethodSpec:
    """Infer the method's permission precondition and postcondition.

    Both are closed expressions over the distinguished location parameters,
    the method's parameters, and array lengths.
    """
    config = config or AnalysisConfig()
    metas = loop_metas(method)
    analyzer = Analyzer(metas, config)
    pre = analyzer.required(method.body, PZERO)
    dlt = analyzer.delta(method.body, PZERO)
    post = simplify_perm(PAdd(pre, dlt))
    return MethodSpec(
        name=method.name,
        precondition=pre,
        postcondition=post,
        loops=analyzer.loop_reports,
    )


UNSATISFIABLE_MARKER = Frac(Fraction(2))


def flag_unsatisfiable(spec: MethodSpec) -> MethodSpec:
    """Replace the precondition by an amount no valid state can hold
    (permissions never exceed 1), recording that the loop soundness check
    failed."""
    return MethodSpec(
        name=spec.name,
        precondition=UNSATISFIABLE_MARKER,
        postcondition=spec.postcondition,
        loops=spec.loops,
        unsatisfiable=True,
    )
