"""Abstract syntax of the modelling language and its pretty-printer.

Source positions are carried on every node but excluded from equality, so
``parse(unparse(p)) == p`` holds for parsed programs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

OPERATORS = ("+", "-", "*", "/")


def _pos():
    return field(default=None, compare=False, repr=False)


# -- expressions over deterministic values ---------------------------------

@dataclass(frozen=True)
class Num:
    value: float
    line: int | None = _pos()
    col: int | None = _pos()


@dataclass(frozen=True)
class Var:
    name: str
    line: int | None = _pos()
    col: int | None = _pos()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    line: int | None = _pos()
    col: int | None = _pos()


Expr = Union[Num, Var, BinOp]


@dataclass(frozen=True)
class RandRef:
    """Reference to a random variable.

    ``index`` is only set for indexing that depends on a loop variable; it is
    resolved to ``name_<k>`` when the statement executes.  Constant indices
    are desugared by the parser.
    """

    name: str
    index: Expr | None = None
    line: int | None = _pos()
    col: int | None = _pos()


# -- distributions ---------------------------------------------------------

@dataclass(frozen=True)
class Independent:
    mean: Expr
    variance: Expr


@dataclass(frozen=True)
class LinearDep:
    coeff: Expr
    dep: RandRef
    offset: Expr
    variance: Expr


DistSpec = Union[Independent, LinearDep]


# -- statements ------------------------------------------------------------

@dataclass(frozen=True)
class ProbAssign:
    target: RandRef
    dist: DistSpec
    line: int | None = _pos()
    col: int | None = _pos()


@dataclass(frozen=True)
class OpAssign:
    target: RandRef
    src: RandRef
    op: str
    operand: Expr
    line: int | None = _pos()
    col: int | None = _pos()


@dataclass(frozen=True)
class SumAssign:
    target: RandRef
    left: RandRef
    right: RandRef
    line: int | None = _pos()
    col: int | None = _pos()


@dataclass(frozen=True)
class Condition:
    target: RandRef
    value: Expr
    line: int | None = _pos()
    col: int | None = _pos()


@dataclass(frozen=True)
class DetAssign:
    name: str
    value: Expr
    line: int | None = _pos()
    col: int | None = _pos()


@dataclass(frozen=True)
class Seq:
    body: tuple


@dataclass(frozen=True)
class For:
    var: str
    count: Expr
    body: Seq
    line: int | None = _pos()
    col: int | None = _pos()


Stmt = Union[ProbAssign, OpAssign, SumAssign, Condition, DetAssign, Seq, For]


@dataclass(frozen=True)
class Program:
    body: Seq
    returns: tuple


# -- traversal helpers -----------------------------------------------------

def walk_statements(stmt):
    """Yield every statement in ``stmt`` (pre-order), descending into blocks."""
    if isinstance(stmt, Program):
        stmt = stmt.body
    if isinstance(stmt, Seq):
        for s in stmt.body:
            yield from walk_statements(s)
    elif isinstance(stmt, For):
        yield stmt
        yield from walk_statements(stmt.body)
    else:
        yield stmt


def walk_exprs(e):
    yield e
    if isinstance(e, BinOp):
        yield from walk_exprs(e.left)
        yield from walk_exprs(e.right)


def statement_exprs(stmt):
    """Deterministic expressions appearing directly in ``stmt``."""
    refs = []
    if isinstance(stmt, ProbAssign):
        d = stmt.dist
        refs = [d.mean, d.variance] if isinstance(d, Independent) else [d.coeff, d.offset, d.variance]
        refs += [r.index for r in (stmt.target, getattr(d, "dep", None)) if r is not None and r.index is not None]
    elif isinstance(stmt, OpAssign):
        refs = [stmt.operand] + [r.index for r in (stmt.target, stmt.src) if r.index is not None]
    elif isinstance(stmt, SumAssign):
        refs = [r.index for r in (stmt.target, stmt.left, stmt.right) if r.index is not None]
    elif isinstance(stmt, Condition):
        refs = [stmt.value] + ([stmt.target.index] if stmt.target.index is not None else [])
    elif isinstance(stmt, DetAssign):
        refs = [stmt.value]
    elif isinstance(stmt, For):
        refs = [stmt.count]
    return refs


# -- pretty printing -------------------------------------------------------

def _num(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


def unparse_expr(e: Expr, nested: bool = False) -> str:
    if isinstance(e, Num):
        return _num(e.value)
    if isinstance(e, Var):
        return e.name
    text = f"{unparse_expr(e.left, True)} {e.op} {unparse_expr(e.right, True)}"
    return f"({text})" if nested else text


def unparse_ref(r: RandRef) -> str:
    if r.index is None:
        return r.name
    return f"{r.name}[{unparse_expr(r.index)}]"


def _unparse_dist(d: DistSpec) -> str:
    if isinstance(d, Independent):
        return f"Normal({unparse_expr(d.mean)}, {unparse_expr(d.variance)})"
    return (f"Normal({unparse_expr(d.coeff, True)} * {unparse_ref(d.dep)} + "
            f"{unparse_expr(d.offset, True)}, {unparse_expr(d.variance)})")


def _unparse_stmt(s, indent: str, out: list) -> None:
    if isinstance(s, Seq):
        for t in s.body:
            _unparse_stmt(t, indent, out)
    elif isinstance(s, ProbAssign):
        out.append(f"{indent}{unparse_ref(s.target)} = {_unparse_dist(s.dist)}")
    elif isinstance(s, OpAssign):
        out.append(f"{indent}{unparse_ref(s.target)} = {unparse_ref(s.src)} {s.op} "
                   f"{unparse_expr(s.operand, True)}")
    elif isinstance(s, SumAssign):
        out.append(f"{indent}{unparse_ref(s.target)} = {unparse_ref(s.left)} + {unparse_ref(s.right)}")
    elif isinstance(s, Condition):
        out.append(f"{indent}condition({unparse_ref(s.target)}, {unparse_expr(s.value)})")
    elif isinstance(s, DetAssign):
        out.append(f"{indent}{s.name} = {unparse_expr(s.value)}")
    elif isinstance(s, For):
        out.append(f"{indent}for {s.var} in range({unparse_expr(s.count)}):")
        _unparse_stmt(s.body, indent + "    ", out)
    else:
        raise TypeError(f"not a statement: {s!r}")


def unparse(p: Program) -> str:
    """Render ``p`` in the concrete syntax accepted by :func:`gaussi.lang.parse`."""
    out: list[str] = []
    _unparse_stmt(p.body, "", out)
    out.append(" ".join(["return"] + ([", ".join(unparse_ref(r) for r in p.returns)] if p.returns else [])))
    return "\n".join(out) + "\n"
