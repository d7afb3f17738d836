"""Static well-formedness checks.

Loop bounds are constants, so the checker simply walks the program with
loops unrolled, tracking which random variables are live, which have been
conditioned away, and the values of deterministic variables (needed to
resolve loop-dependent indices such as ``xs[i + 1]``).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ast


@dataclass(frozen=True)
class Diagnostic:
    message: str
    line: int | None = None
    col: int | None = None

    def __str__(self):
        where = f"{self.line}:{self.col}: " if self.line is not None else ""
        return f"{where}{self.message}"


def fold_constant(e: ast.Expr):
    """Value of ``e`` if it contains no variables, else ``None``."""
    return _evaluate(e, {}, strict=True)


def _evaluate(e, env, strict=False):
    if isinstance(e, ast.Num):
        return e.value
    if isinstance(e, ast.Var):
        return None if strict else env.get(e.name)
    a = _evaluate(e.left, env, strict)
    b = _evaluate(e.right, env, strict)
    if a is None or b is None:
        return None
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if b == 0:
        return None
    return a / b


def loop_count(e: ast.Expr):
    """The iteration count of ``range(e)``, or ``None`` if not a constant natural number."""
    v = fold_constant(e)
    if v is None or v < 0 or v != int(v):
        return None
    return int(v)


class _Checker:
    def __init__(self):
        self.diags: list[Diagnostic] = []
        self.seen: set = set()
        self.env: dict = {}
        self.live: set = set()
        self.conditioned: set = set()
        self.random_ever: set = set()
        self.det_ever: set = set()

    def report(self, message, node):
        key = (message, getattr(node, "line", None), getattr(node, "col", None))
        if key not in self.seen:
            self.seen.add(key)
            self.diags.append(Diagnostic(*key))

    # -- helpers --------------------------------------------------------

    def expr(self, e, node):
        for sub in ast.walk_exprs(e):
            if isinstance(sub, ast.Var) and sub.name not in self.env:
                if sub.name in self.random_ever:
                    self.report(f"random variable {sub.name} used as a deterministic value", sub)
                else:
                    self.report(f"undefined deterministic variable {sub.name}", sub)
        return _evaluate(e, self.env)

    def resolve(self, ref: ast.RandRef):
        if ref.index is None:
            return ref.name
        k = self.expr(ref.index, ref)
        if k is None or k < 0 or k != int(k):
            self.report(f"index of {ref.name} does not evaluate to a non-negative integer", ref)
            return None
        return f"{ref.name}_{int(k)}"

    def use(self, ref: ast.RandRef):
        name = self.resolve(ref)
        if name is None:
            return
        if name in self.live:
            return
        if name in self.conditioned:
            self.report(f"random variable {name} used after being conditioned", ref)
        else:
            self.report(f"undefined random variable {name}", ref)

    def define(self, ref: ast.RandRef, stmt):
        name = self.resolve(ref)
        if name is None:
            return
        if name in self.random_ever:
            self.report(f"duplicate assignment to random variable {name}", stmt)
        elif name in self.det_ever:
            self.report(f"{name} is used both as a deterministic and a random variable", stmt)
        self.random_ever.add(name)
        self.live.add(name)

    # -- statements -----------------------------------------------------

    def stmt(self, s):
        if isinstance(s, ast.Seq):
            for t in s.body:
                self.stmt(t)
        elif isinstance(s, ast.ProbAssign):
            d = s.dist
            if isinstance(d, ast.Independent):
                self.expr(d.mean, s)
                var = self.expr(d.variance, s)
            else:
                self.expr(d.coeff, s)
                self.expr(d.offset, s)
                var = self.expr(d.variance, s)
                self.use(d.dep)
            if var is not None and var < 0:
                self.report("negative variance", s)
            self.define(s.target, s)
        elif isinstance(s, ast.OpAssign):
            self.expr(s.operand, s)
            self.use(s.src)
            self.define(s.target, s)
        elif isinstance(s, ast.SumAssign):
            self.use(s.left)
            self.use(s.right)
            self.define(s.target, s)
        elif isinstance(s, ast.Condition):
            self.expr(s.value, s)
            name = self.resolve(s.target)
            self.use(s.target)
            if name in self.live:
                self.live.discard(name)
                self.conditioned.add(name)
        elif isinstance(s, ast.DetAssign):
            if s.name in self.random_ever:
                self.report(f"{s.name} is used both as a deterministic and a random variable", s)
            value = self.expr(s.value, s)
            self.det_ever.add(s.name)
            self.env[s.name] = value
        elif isinstance(s, ast.For):
            count = loop_count(s.count)
            if count is None:
                self.report("loop bound must be a non-negative integer constant", s)
                return
            if s.var in self.random_ever:
                self.report(f"loop variable {s.var} clashes with a random variable", s)
            self.det_ever.add(s.var)
            saved = self.env.get(s.var, _MISSING)
            for k in range(count):
                self.env[s.var] = float(k)
                self.stmt(s.body)
            if saved is _MISSING:
                self.env.pop(s.var, None)
            else:
                self.env[s.var] = saved
        else:
            raise TypeError(f"not a statement: {s!r}")


_MISSING = object()


def _zero_divisions(program: ast.Program):
    for s in ast.walk_statements(program):
        if isinstance(s, ast.OpAssign) and s.op == "/" and isinstance(s.operand, ast.Num) \
                and s.operand.value == 0:
            yield Diagnostic(f"division of {s.src.name} by the literal 0", s.line, s.col)
        for e in ast.statement_exprs(s):
            for sub in ast.walk_exprs(e):
                if isinstance(sub, ast.BinOp) and sub.op == "/" and isinstance(sub.right, ast.Num) \
                        and sub.right.value == 0:
                    yield Diagnostic("division by the literal 0", sub.line, sub.col)


def validate(program: ast.Program) -> list[Diagnostic]:
    """Diagnostics for ``program``; an empty list means it is well formed."""
    checker = _Checker()
    for d in _zero_divisions(program):
        checker.report(d.message, d)
    checker.stmt(program.body)
    if not program.returns:
        checker.report("program must return at least one random variable", None)
    names = []
    for r in program.returns:
        name = checker.resolve(r)
        if name is None:
            continue
        if name in checker.live:
            names.append(name)
        elif name in checker.conditioned:
            checker.report(f"returned variable {name} was conditioned away", r)
        elif name in checker.det_ever:
            checker.report(f"returned variable {name} is deterministic, not random", r)
        else:
            checker.report(f"undefined random variable {name}", r)
    if len(set(names)) != len(names):
        checker.report("return list names a variable twice", None)
    return checker.diags
