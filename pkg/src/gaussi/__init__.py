"""Exact Bayesian inference for a linear-Gaussian probabilistic language."""

from .errors import (
    ExecutionError, GaussiError, NumericalError, ParseError, StateError,
    SupportError, ValidationError,
)
from .gaussian import GaussianState
from .interpreter import PosteriorResult, ProgramState, eval_expr, exec_stmt, run_program
from .lang import parse, parse_file, unparse, validate

__version__ = "0.1.0"
