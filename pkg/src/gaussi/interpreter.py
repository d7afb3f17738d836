"""Big-step evaluation of validated programs over Gaussian states."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import ExecutionError, GaussiError, ValidationError
from .gaussian import GaussianState
from .lang import ast
from .lang.validate import loop_count, validate


@dataclass(frozen=True)
class ProgramState:
    gaussian: GaussianState
    det_env: Mapping[str, float] = field(default_factory=lambda: MappingProxyType({}))
    steps: int = 0

    def bind(self, name: str, value: float) -> "ProgramState":
        env = dict(self.det_env)
        env[name] = value
        return ProgramState(self.gaussian, MappingProxyType(env), self.steps + 1)


@dataclass(frozen=True)
class PosteriorResult:
    names: tuple
    mean: np.ndarray
    cov: np.ndarray
    statement_count: int
    elapsed: float
    state: GaussianState = field(repr=False, compare=False)


def eval_expr(e: ast.Expr, env) -> float:
    """Evaluate a deterministic expression; raises :class:`ExecutionError` on failure.

    ``env`` is a :class:`ProgramState` or a plain mapping of deterministic variables.
    """
    if isinstance(env, ProgramState):
        env = env.det_env
    if isinstance(e, ast.Num):
        return e.value
    if isinstance(e, ast.Var):
        try:
            return env[e.name]
        except KeyError:
            raise ExecutionError(f"unbound deterministic variable {e.name}", e.line, e.col) from None
    a = eval_expr(e.left, env)
    b = eval_expr(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if b == 0:
        raise ExecutionError("division by zero", e.line, e.col)
    return a / b


def _name(ref: ast.RandRef, env) -> str:
    if ref.index is None:
        return ref.name
    k = eval_expr(ref.index, env)
    if k < 0 or k != int(k):
        raise ExecutionError(f"index {k!r} of {ref.name} is not a non-negative integer",
                             ref.line, ref.col)
    return f"{ref.name}_{int(k)}"


def exec_stmt(st, s: ProgramState) -> ProgramState:
    """Execute one statement (blocks and loops included) from state ``s``."""
    if isinstance(st, ast.Seq):
        for t in st.body:
            s = exec_stmt(t, s)
        return s
    if isinstance(st, ast.For):
        count = loop_count(st.count)
        if count is None:
            raise ExecutionError("loop bound must be a non-negative integer constant",
                                 st.line, st.col)
        had = st.var in s.det_env
        saved = s.det_env.get(st.var)
        for k in range(count):
            env = dict(s.det_env)
            env[st.var] = float(k)
            s = exec_stmt(st.body, ProgramState(s.gaussian, MappingProxyType(env), s.steps))
        env = dict(s.det_env)
        if had:
            env[st.var] = saved
        else:
            env.pop(st.var, None)
        return ProgramState(s.gaussian, MappingProxyType(env), s.steps)
    if isinstance(st, ast.DetAssign):
        return s.bind(st.name, eval_expr(st.value, s.det_env))
    try:
        g = _exec_random(st, s.gaussian, s.det_env)
    except ExecutionError as exc:
        if exc.line is None:
            raise ExecutionError(exc.message, st.line, st.col) from exc
        raise
    except GaussiError as exc:
        raise ExecutionError(str(exc), st.line, st.col) from exc
    return ProgramState(g, s.det_env, s.steps + 1)


def _exec_random(st, g: GaussianState, env) -> GaussianState:
    if isinstance(st, ast.ProbAssign):
        d = st.dist
        name = _name(st.target, env)
        if isinstance(d, ast.Independent):
            return g.extend_independent(name, eval_expr(d.mean, env), eval_expr(d.variance, env))
        return g.extend_linear(name, eval_expr(d.coeff, env), _name(d.dep, env),
                               eval_expr(d.offset, env), eval_expr(d.variance, env))
    if isinstance(st, ast.OpAssign):
        c = eval_expr(st.operand, env)
        return g.extend_shift_scale(_name(st.target, env), _name(st.src, env), st.op, c)
    if isinstance(st, ast.SumAssign):
        return g.extend_sum(_name(st.target, env), _name(st.left, env), _name(st.right, env))
    if isinstance(st, ast.Condition):
        return g.condition(_name(st.target, env), eval_expr(st.value, env))
    raise TypeError(f"not a statement: {st!r}")


def unrolled_counts(program) -> tuple[int, int]:
    """``(statements, random_assignments)`` executed once loops are unrolled."""
    def go(st):
        if isinstance(st, ast.Seq):
            totals = [go(t) for t in st.body]
            return sum(t[0] for t in totals), sum(t[1] for t in totals)
        if isinstance(st, ast.For):
            k = loop_count(st.count) or 0
            a, b = go(st.body)
            return k * a, k * b
        rand = isinstance(st, (ast.ProbAssign, ast.OpAssign, ast.SumAssign))
        return 1, int(rand)

    body = program.body if isinstance(program, ast.Program) else program
    return go(body)


def run_program(program: ast.Program, *, check: bool = True) -> PosteriorResult:
    """Run ``program`` from the empty state and return the marginal of its return list."""
    if check:
        diags = validate(program)
        if diags:
            raise ValidationError(diags)
    start = time.perf_counter()
    _, capacity = unrolled_counts(program)
    s = ProgramState(GaussianState.empty(capacity=max(capacity, 1)))
    s = exec_stmt(program.body, s)
    names = tuple(_name(r, s.det_env) for r in program.returns)
    try:
        mean, cov = s.gaussian.marginal(names)
    except GaussiError as exc:
        first = program.returns[0] if program.returns else None
        raise ExecutionError(str(exc), getattr(first, "line", None), getattr(first, "col", None)) from exc
    elapsed = time.perf_counter() - start
    return PosteriorResult(names, mean, cov, s.steps, elapsed, s.gaussian)
