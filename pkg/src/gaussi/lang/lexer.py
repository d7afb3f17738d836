"""Tokenizer with Python-style indentation for the ``.gpp`` program format."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ParseError


@dataclass(frozen=True)
class Token:
    kind: str          # NUMBER NAME STRING OP NEWLINE INDENT DEDENT EOF
    value: object
    line: int
    col: int
    adjacent: bool = False  # no whitespace between this token and the previous one

    def __str__(self):
        if self.kind in ("NEWLINE", "INDENT", "DEDENT", "EOF"):
            return self.kind.lower()
        return repr(self.value)


_TOKEN = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d[\d_]*(?:\.[\d_]*)?|\.\d[\d_]*)(?:[eE][+-]?\d[\d_]*)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*"|'[^'\n]*')
  | (?P<op>[-+*/=,()\[\]:;]|[−×÷])
""", re.VERBOSE)

_UNICODE_OPS = {"−": "-", "×": "*", "÷": "/"}


def _number(text: str, line: int, col: int) -> float:
    if "__" in text or text.endswith("_") or "_." in text or "._" in text:
        raise ParseError(f"malformed numeric literal {text!r}", line, col)
    return float(text.replace("_", ""))


def tokenize(text: str) -> list[Token]:
    """Split ``text`` into tokens, emitting INDENT/DEDENT like Python does.

    Newlines inside brackets are ignored; ``;`` is returned as an ``OP``.
    """
    tokens: list[Token] = []
    indents = [0]
    depth = 0
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    for lineno, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if depth == 0:
            if not stripped or stripped.startswith("#"):
                continue
            width = len(raw) - len(raw.lstrip(" \t"))
            if "\t" in raw[:width] and " " in raw[:width]:
                raise ParseError("mixed tabs and spaces in indentation", lineno, 1)
            if width > indents[-1]:
                indents.append(width)
                tokens.append(Token("INDENT", width, lineno, 1))
            while width < indents[-1]:
                indents.pop()
                tokens.append(Token("DEDENT", width, lineno, 1))
            if width != indents[-1]:
                raise ParseError("inconsistent dedent", lineno, 1)
        pos = 0
        prev_end = None
        while pos < len(raw):
            m = _TOKEN.match(raw, pos)
            if m is None:
                raise ParseError(f"unexpected character {raw[pos]!r}", lineno, pos + 1)
            kind = m.lastgroup
            col = pos + 1
            adjacent = prev_end == pos
            pos = m.end()
            if kind in ("ws", "comment"):
                continue
            value = m.group()
            if kind == "number":
                tok = Token("NUMBER", _number(value, lineno, col), lineno, col, adjacent)
            elif kind == "name":
                tok = Token("NAME", value, lineno, col, adjacent)
            elif kind == "string":
                tok = Token("STRING", value[1:-1], lineno, col, adjacent)
            else:
                value = _UNICODE_OPS.get(value, value)
                if value in "([":
                    depth += 1
                elif value in ")]":
                    depth = max(depth - 1, 0)
                tok = Token("OP", value, lineno, col, adjacent)
            tokens.append(tok)
            prev_end = pos
        if depth == 0 and tokens and tokens[-1].kind not in ("NEWLINE", "INDENT", "DEDENT"):
            tokens.append(Token("NEWLINE", "\n", lineno, len(raw) + 1))
    last = len(lines)
    if depth:
        raise ParseError("unclosed bracket at end of input", last, 1)
    while len(indents) > 1:
        indents.pop()
        tokens.append(Token("DEDENT", 0, last, 1))
    tokens.append(Token("EOF", None, last, 1))
    return tokens
