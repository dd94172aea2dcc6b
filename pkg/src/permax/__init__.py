"""Fractional-permission specification inference for array programs.

Parses a small imperative array language, runs a backward permission
analysis that summarizes loops as pointwise maxima over their iteration
space, eliminates those maxima into closed-form conditional expressions,
and emits solver-free `requires` / `ensures` permission specifications.
"""

from .expr import (
    Add, And, ArrayVar, BoolConst, BoolExpr, Cmp, Divides, EvalStuck, FALSE,
    FloorDiv, Frac, Heap, IntConst, IntExpr, IntIte, Length, Lookup, Mul,
    Not, NotDivides, Or, PAdd, PIte, PMax, PMin, PSub, PZERO, PermAtLeast,
    PermExpr, PermValue, PointwiseMax, PONE, PRD, PV_ONE, PV_RD, PV_ZERO,
    QA, QI, Rd, Sub, TRUE, Var, eval_bool, eval_int, eval_perm, free_vars,
    node_count, show_bool, show_int, show_perm, substitute_array_lookups,
    substitute_array_var, substitute_var,
)
from .frontend import (
    Method, Program, SourceError, SourceSpan, Stmt, parse_file,
    parse_program, show_method, show_program,
)
from .infer import AnalysisConfig, MethodSpec, infer_method
from .maxelim import MaxElimError, eliminate, eliminate_all
from .oracle import (
    Counterexample, PermMap, ProgramState, RunOutcome, bounded_max,
    bounded_validity, interpret, seed_perm_map,
)
from .simplify import nnf, normalize_coefficients, simplify_bool, simplify_perm
from .smt import emit_smtlib

__version__ = "0.1.0"
