"""Tokenizer for ``.alg`` model documents."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import BourbakiError


class ModelError(BourbakiError):
    """A syntax or semantic error in a model document, with its location."""

    def __init__(self, message, line, col, kind="syntax", found=None, expected=None, related=None):
        self.message = message
        self.line = line
        self.col = col
        self.kind = kind
        self.found = found
        self.expected = tuple(sorted(set(expected))) if expected else ()
        self.related = related
        super().__init__(self.render())

    def render(self, filename="<input>"):
        text = f"{filename}:{self.line}:{self.col}: {self.kind} error: {self.message}"
        if self.found is not None:
            text += f"; found {self.found}"
        if self.expected:
            text += "; expected one of " + ", ".join(self.expected)
        if self.related:
            text += f" (declared at line {self.related})"
        return text


@dataclass(frozen=True)
class Token:
    kind: str  # ident, var, int, op, comment, newline, eof
    value: str
    line: int
    col: int  # 1-based
    offset: int = 0

    def describe(self):
        if self.kind == "eof":
            return "end of input"
        if self.kind == "newline":
            return "end of line"
        return repr(self.value)


_PATTERN = re.compile(
    r"(?P<space>[ \t\r]+)|(?P<comment>#[^\n]*)|(?P<newline>\n)|(?P<int>\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[=\[\]{}(),:;*+\-/^])"
)

_OPEN = {"[": "]", "{": "}", "(": ")"}


def tokenize(text):
    """Split ``text`` into tokens; newlines inside brackets are dropped."""
    tokens = []
    line, line_start, pos = 1, 0, 0
    depth = []
    while pos < len(text):
        m = _PATTERN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ModelError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "newline":
            if not depth:
                tokens.append(Token("newline", "\n", line, col, pos))
            line += 1
            line_start = m.end()
        elif kind == "comment":
            if depth:
                raise ModelError("comments are not allowed inside brackets", line, col)
            tokens.append(Token("comment", value[1:].strip(), line, col, pos))
        elif kind == "ident":
            tokens.append(Token("var" if re.fullmatch(r"x\d+", value) else "ident", value, line, col, pos))
        elif kind in ("int", "op"):
            if kind == "op" and value in _OPEN:
                depth.append((_OPEN[value], line, col))
            elif kind == "op" and value in _OPEN.values():
                if not depth or depth[-1][0] != value:
                    raise ModelError(f"unbalanced {value!r}", line, col)
                depth.pop()
            tokens.append(Token(kind, value, line, col, pos))
        pos = m.end()
    if depth:
        closer, l0, c0 = depth[-1]
        raise ModelError(f"unclosed bracket, expected {closer!r}", l0, c0, found="end of input")
    tokens.append(Token("newline", "\n", line, pos - line_start + 1, pos))
    tokens.append(Token("eof", "", line, pos - line_start + 1, pos))
    return tokens
