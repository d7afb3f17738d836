"""Frontend for the modelling language: parsing, validation and pretty-printing."""

from .ast import (
    BinOp, Condition, DetAssign, For, Independent, LinearDep, Num, OpAssign,
    ProbAssign, Program, RandRef, Seq, SumAssign, Var, unparse,
)
from .parser import parse, parse_file
from .validate import Diagnostic, fold_constant, loop_count, validate

__all__ = [
    "BinOp", "Condition", "DetAssign", "Diagnostic", "For", "Independent",
    "LinearDep", "Num", "OpAssign", "ProbAssign", "Program", "RandRef", "Seq",
    "SumAssign", "Var", "fold_constant", "loop_count", "parse", "parse_file",
    "unparse", "validate",
]
