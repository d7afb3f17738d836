"""Recursive-descent parser for ``.gpp`` programs.

Parsing happens in two passes.  The first builds a loose syntax tree in
which names are not yet known to be random or deterministic.  A name is
random when some assignment gives it a ``Normal(...)``, a list of them, or an
expression mentioning another random name (iterated to a fixpoint); every
other assigned name is deterministic.  The second pass lowers the loose tree
into :mod:`gaussi.lang.ast` nodes, desugaring lists and constant indices
(``xs[2]`` becomes ``xs_2``) and checking that each statement has one of the
grammar's shapes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ParseError
from . import ast
from .lexer import Token, tokenize


@dataclass
class _Node:
    kind: str   # num name index bin neg call list str
    args: tuple
    line: int
    col: int


@dataclass
class _Assign:
    target: _Node            # name or index node
    value: _Node
    line: int
    col: int


@dataclass
class _CondStmt:
    target: _Node
    value: _Node
    line: int
    col: int


@dataclass
class _ForStmt:
    var: str
    count: _Node
    body: list
    line: int
    col: int


@dataclass
class _Return:
    items: list
    line: int
    col: int


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.col)

    def at(self, kind: str, value=None) -> bool:
        t = self.tok
        return t.kind == kind and (value is None or t.value == value)

    def eat(self, kind: str, value=None) -> Token:
        if not self.at(kind, value):
            want = value if value is not None else kind.lower()
            raise self.error(f"expected {want!r}, found {self.tok}")
        t = self.tok
        self.pos += 1
        return t

    # -- statements -----------------------------------------------------

    def program(self) -> list:
        stmts = []
        while self.at("NEWLINE") or self.at("OP", ";"):
            self.pos += 1
        if self.at("NAME", "def"):
            stmts = self.def_block()
        else:
            stmts = self.statements()
        if not self.at("EOF"):
            raise self.error(f"unexpected {self.tok}")
        return stmts

    def def_block(self) -> list:
        self.eat("NAME", "def")
        self.eat("NAME")
        self.eat("OP", "(")
        self.eat("OP", ")")
        self.eat("OP", ":")
        body = self.suite()
        while self.at("NEWLINE"):
            self.pos += 1
        return body

    def statements(self) -> list:
        out = []
        while not (self.at("EOF") or self.at("DEDENT")):
            if self.at("NEWLINE") or self.at("OP", ";"):
                self.pos += 1
                continue
            if self.at("INDENT"):
                raise self.error("unexpected indentation")
            out.append(self.statement())
            if self.tokens[self.pos - 1].kind == "DEDENT":
                continue
            if self.at("OP", ";"):
                self.pos += 1
            elif not (self.at("NEWLINE") or self.at("EOF") or self.at("DEDENT")):
                raise self.error(f"expected end of statement, found {self.tok}")
        return out

    def suite(self) -> list:
        if self.at("NEWLINE"):
            self.eat("NEWLINE")
            self.eat("INDENT")
            body = self.statements()
            if not self.at("EOF"):
                self.eat("DEDENT")
        else:
            body = [self.statement()]
            while self.at("OP", ";") and self.peek().kind not in ("NEWLINE", "EOF"):
                self.pos += 1
                body.append(self.statement())
        if not body:
            raise self.error("empty block")
        return body

    def statement(self):
        t = self.tok
        if t.kind == "NAME" and t.value == "for":
            return self.for_stmt()
        if t.kind == "NAME" and t.value == "return":
            self.pos += 1
            items = []
            if not (self.at("NEWLINE") or self.at("EOF") or self.at("OP", ";") or self.at("DEDENT")):
                items.append(self.expr())
                while self.at("OP", ","):
                    self.pos += 1
                    items.append(self.expr())
            return _Return(items, t.line, t.col)
        if t.kind == "NAME" and t.value == "condition" and self.peek().kind == "OP" and self.peek().value == "(":
            self.pos += 1
            self.eat("OP", "(")
            target = self.expr()
            self.eat("OP", ",")
            value = self.expr()
            self.eat("OP", ")")
            return _CondStmt(target, value, t.line, t.col)
        if t.kind == "NAME":
            target = self.postfix(self.atom())
            if target.kind not in ("name", "index"):
                raise self.error("assignment target must be a variable", t)
            self.eat("OP", "=")
            return _Assign(target, self.expr(), t.line, t.col)
        raise self.error(f"unexpected {t}")

    def for_stmt(self):
        t = self.eat("NAME", "for")
        var = self.eat("NAME").value
        self.eat("NAME", "in")
        self.eat("NAME", "range")
        self.eat("OP", "(")
        count = self.expr()
        self.eat("OP", ")")
        self.eat("OP", ":")
        return _ForStmt(var, count, self.suite(), t.line, t.col)

    # -- expressions ----------------------------------------------------

    def expr(self) -> _Node:
        node = self.term()
        while self.at("OP") and self.tok.value in ("+", "-"):
            op = self.eat("OP")
            node = _Node("bin", (op.value, node, self.term()), op.line, op.col)
        return node

    def term(self) -> _Node:
        node = self.unary()
        while self.at("OP") and self.tok.value in ("*", "/"):
            op = self.eat("OP")
            node = _Node("bin", (op.value, node, self.unary()), op.line, op.col)
        return node

    def unary(self) -> _Node:
        if self.at("OP", "-"):
            t = self.eat("OP")
            return _Node("neg", (self.unary(),), t.line, t.col)
        if self.at("OP", "+"):
            self.pos += 1
            return self.unary()
        return self.postfix(self.atom())

    def postfix(self, node: _Node) -> _Node:
        while self.at("OP", "[") and node.kind == "name":
            self.eat("OP", "[")
            idx = self.expr()
            self.eat("OP", "]")
            node = _Node("index", (node.args[0], idx), node.line, node.col)
        return node

    def atom(self) -> _Node:
        t = self.tok
        if t.kind == "NUMBER":
            self.pos += 1
            node = _Node("num", (t.value,), t.line, t.col)
            nxt = self.tok
            if nxt.kind == "NAME" and nxt.adjacent:
                # ``2X`` as written in the paper-style listings
                rhs = self.postfix(self.atom())
                node = _Node("bin", ("*", node, rhs), t.line, t.col)
            return node
        if t.kind == "STRING":
            self.pos += 1
            return _Node("str", (t.value,), t.line, t.col)
        if t.kind == "NAME":
            self.pos += 1
            if self.at("OP", "("):
                self.pos += 1
                args = []
                if not self.at("OP", ")"):
                    args.append(self.expr())
                    while self.at("OP", ","):
                        self.pos += 1
                        args.append(self.expr())
                self.eat("OP", ")")
                return _Node("call", (t.value, args), t.line, t.col)
            return _Node("name", (t.value,), t.line, t.col)
        if t.kind == "OP" and t.value == "(":
            self.pos += 1
            node = self.expr()
            self.eat("OP", ")")
            return node
        if t.kind == "OP" and t.value == "[":
            self.pos += 1
            items = []
            while not self.at("OP", "]"):
                items.append(self.expr())
                if not self.at("OP", ","):
                    break
                self.pos += 1
            self.eat("OP", "]")
            return _Node("list", (items,), t.line, t.col)
        raise self.error(f"unexpected {t}")


# -- classification ---------------------------------------------------------

def _base(node: _Node) -> str | None:
    if node.kind in ("name", "index"):
        return node.args[0]
    return None


_ELEMENT = re.compile(r"(.+)_(\d+)$")


def _is_random(name: str, names: set) -> bool:
    """``name`` is random, or is element ``base_k`` of a random list ``base``."""
    if name in names:
        return True
    m = _ELEMENT.match(name)
    return m is not None and _is_random(m.group(1), names)


def _mentions(node: _Node, names: set, lists: set = frozenset()) -> bool:
    if node.kind == "name":
        return _is_random(node.args[0], names)
    if node.kind == "index":
        # base[e] is random when base is, or when some element base_k already is
        return node.args[0] in lists or _is_random(node.args[0], names)
    if node.kind == "bin":
        return _mentions(node.args[1], names, lists) or _mentions(node.args[2], names, lists)
    if node.kind == "neg":
        return _mentions(node.args[0], names, lists)
    if node.kind in ("call", "list"):
        return True
    return False


def _assignments(stmts):
    for s in stmts:
        if isinstance(s, _Assign):
            yield s
        elif isinstance(s, _ForStmt):
            yield from _assignments(s.body)


def _random_names(stmts) -> set:
    random: set = set()
    lists: set = set()
    assigns = list(_assignments(stmts))
    changed = True
    while changed:
        changed = False
        for a in assigns:
            name = _base(a.target)
            if name not in random and _mentions(a.value, random, lists):
                random.add(name)
                m = _ELEMENT.match(name)
                if m:
                    lists.add(m.group(1))
                changed = True
    return random | lists


# -- lowering ---------------------------------------------------------------

def _fold(node: _Node):
    """Value of a variable-free expression, or ``None``."""
    if node.kind == "num":
        return node.args[0]
    if node.kind == "neg":
        v = _fold(node.args[0])
        return None if v is None else -v
    if node.kind == "bin":
        op, a, b = node.args
        a, b = _fold(a), _fold(b)
        if a is None or b is None:
            return None
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if b == 0:
            raise ParseError("division by zero in constant expression", node.line, node.col)
        return a / b
    return None


class _Lowerer:
    def __init__(self, random: set):
        self.random = random

    def expr(self, node: _Node) -> ast.Expr:
        k = node.kind
        if k == "num":
            return ast.Num(float(node.args[0]), node.line, node.col)
        if k == "name":
            name = node.args[0]
            if _is_random(name, self.random):
                raise ParseError(
                    f"random variable {name!r} used in a deterministic expression; "
                    "expressions over random variables are not supported",
                    node.line, node.col)
            return ast.Var(name, node.line, node.col)
        if k == "neg":
            inner = self.expr(node.args[0])
            if isinstance(inner, ast.Num):
                return ast.Num(-inner.value, node.line, node.col)
            return ast.BinOp("-", ast.Num(0.0, node.line, node.col), inner, node.line, node.col)
        if k == "bin":
            op, a, b = node.args
            return ast.BinOp(op, self.expr(a), self.expr(b), node.line, node.col)
        if k == "index":
            raise ParseError(f"{node.args[0]!r} is not a random variable list", node.line, node.col)
        if k == "call":
            raise ParseError(f"{node.args[0]}(...) is not allowed inside an expression", node.line, node.col)
        if k == "list":
            raise ParseError("list literals may only hold Normal(...) priors", node.line, node.col)
        raise ParseError("string literal not allowed here", node.line, node.col)

    def ref(self, node: _Node, allow_str: bool = False) -> ast.RandRef:
        if node.kind == "str" and allow_str:
            return ast.RandRef(node.args[0], None, node.line, node.col)
        if node.kind == "name":
            return ast.RandRef(node.args[0], None, node.line, node.col)
        if node.kind == "index":
            base, idx = node.args
            k = _fold(idx)
            if k is None:
                return ast.RandRef(base, self.expr(idx), node.line, node.col)
            if k < 0 or k != int(k):
                raise ParseError(f"index {k!r} of {base!r} is not a non-negative integer",
                                 node.line, node.col)
            return ast.RandRef(f"{base}_{int(k)}", None, node.line, node.col)
        raise ParseError("expected a random variable", node.line, node.col)

    def is_ref(self, node: _Node) -> bool:
        return node.kind in ("name", "index") and _is_random(node.args[0], self.random)

    def is_det(self, node: _Node) -> bool:
        return not _mentions(node, self.random)

    def linear(self, node: _Node):
        """Split ``c * X + o`` (and its partial spellings) into ``(c, X, o)``."""
        def term(t: _Node):
            if self.is_ref(t):
                return ast.Num(1.0, t.line, t.col), self.ref(t)
            if t.kind == "bin" and t.args[0] == "*":
                _, a, b = t.args
                if self.is_ref(b) and self.is_det(a):
                    return self.expr(a), self.ref(b)
                if self.is_ref(a) and self.is_det(b):
                    return self.expr(b), self.ref(a)
            return None

        found = term(node)
        if found is not None:
            return found[0], found[1], ast.Num(0.0, node.line, node.col)
        if node.kind == "bin" and node.args[0] in "+-":
            op, a, b = node.args
            found = term(a)
            if found is not None and self.is_det(b):
                off = self.expr(b)
                if op == "-":
                    off = (ast.Num(-off.value, off.line, off.col) if isinstance(off, ast.Num)
                           else ast.BinOp("-", ast.Num(0.0, b.line, b.col), off, b.line, b.col))
                return found[0], found[1], off
        raise ParseError(
            "the mean of a dependent Normal must have the form c * X + o",
            node.line, node.col)

    def dist(self, call: _Node) -> ast.DistSpec:
        name, args = call.args
        if name != "Normal":
            raise ParseError(f"unknown distribution {name!r}", call.line, call.col)
        if len(args) != 2:
            raise ParseError(f"Normal expects 2 arguments (mean, variance), got {len(args)}",
                             call.line, call.col)
        mean, var = args
        if not self.is_det(var):
            raise ParseError("the variance of Normal must be deterministic", var.line, var.col)
        if self.is_det(mean):
            return ast.Independent(self.expr(mean), self.expr(var))
        coeff, dep, offset = self.linear(mean)
        return ast.LinearDep(coeff, dep, offset, self.expr(var))

    def assign(self, s: _Assign) -> list:
        target, value = s.target, s.value
        name = _base(target)
        if value.kind == "list":
            if target.kind != "name":
                raise ParseError("a list must be assigned to a plain name", s.line, s.col)
            out = []
            for k, item in enumerate(value.args[0]):
                if item.kind != "call":
                    raise ParseError("list literals may only hold Normal(...) priors",
                                     item.line, item.col)
                ref = ast.RandRef(f"{name}_{k}", None, target.line, target.col)
                out.append(ast.ProbAssign(ref, self.dist(item), item.line, item.col))
            return out
        if value.kind == "call":
            return [ast.ProbAssign(self.ref(target), self.dist(value), s.line, s.col)]
        if self.is_det(value):
            if target.kind != "name":
                raise ParseError("deterministic variables cannot be indexed", s.line, s.col)
            return [ast.DetAssign(name, self.expr(value), s.line, s.col)]
        if self.is_ref(value):
            raise ParseError(f"plain copy of a random variable; write {name} = "
                             f"{_base(value)} + 0", s.line, s.col)
        if value.kind == "bin":
            op, a, b = value.args
            if self.is_ref(a) and self.is_ref(b):
                if op != "+":
                    raise ParseError(f"only '+' may combine two random variables, not {op!r}",
                                     value.line, value.col)
                return [ast.SumAssign(self.ref(target), self.ref(a), self.ref(b), s.line, s.col)]
            if self.is_ref(a) and self.is_det(b):
                return [ast.OpAssign(self.ref(target), self.ref(a), op, self.expr(b), s.line, s.col)]
            if self.is_det(a) and self.is_ref(b):
                raise ParseError(f"write the random variable first: {name} = {_base(b)} {op} ...",
                                 value.line, value.col)
        raise ParseError("unsupported expression over random variables; use one "
                         "operation per statement", value.line, value.col)

    def block(self, stmts) -> tuple[ast.Seq, tuple | None]:
        out: list = []
        returns = None
        for i, s in enumerate(stmts):
            if returns is not None:
                raise ParseError("statement after return", s.line, s.col)
            if isinstance(s, _Assign):
                out.extend(self.assign(s))
            elif isinstance(s, _CondStmt):
                out.append(ast.Condition(self.ref(s.target, allow_str=True), self.expr(s.value),
                                         s.line, s.col))
            elif isinstance(s, _ForStmt):
                body, inner_ret = self.block(s.body)
                if inner_ret is not None:
                    raise ParseError("return inside a loop", s.line, s.col)
                out.append(ast.For(s.var, self.expr(s.count), body, s.line, s.col))
            elif isinstance(s, _Return):
                returns = tuple(self.ref(item, allow_str=True) for item in s.items)
        return ast.Seq(tuple(out)), returns


def parse(text: str) -> ast.Program:
    """Parse program text into a :class:`~gaussi.lang.ast.Program`.

    A missing or empty ``return`` yields an empty return list, which
    :func:`~gaussi.lang.validate.validate` reports.

    >>> p = parse("X = Normal(0, 1)\\nreturn X")
    >>> [r.name for r in p.returns]
    ['X']
    """
    stmts = _Parser(tokenize(text)).program()
    lowerer = _Lowerer(_random_names(stmts))
    body, returns = lowerer.block(stmts)
    return ast.Program(body, returns or ())


def parse_file(path) -> ast.Program:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())
