"""Tokenizer shared by the .domain/.abr/.flow languages and expressions.

Newlines are insignificant; `//` comments run to end of line. The lexer
never raises: lexical problems become diagnostics and the scan continues,
which is what lets the parsers stay total over arbitrary input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .source import Diagnostic, SourceSpan, error

OPERATORS = (
    "->", "<-", "==", "!=", "<=", ">=",
    "{", "}", "(", ")", "[", "]", ",", ":", ".", ";", "=", "<", ">", "+", "-", "*", "/",
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*)
  | (?P<float>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:\\.|[^"\\\n])*")
  | (?P<badstring>"(?:\\.|[^"\\\n])*)
  | (?P<op>->|<-|==|!=|<=|>=|[{}()\[\],:.;=<>+\-*/])
    """,
    re.VERBOSE,
)

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r", "0": "\0"}


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "int" | "float" | "string" | "op" | "eof"
    text: str
    value: object
    span: SourceSpan


def _unescape(raw: str, span: SourceSpan, diags: list[Diagnostic]) -> str:
    out: list[str] = []
    i = 0
    while i < len(raw):
        c = raw[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        if i + 1 >= len(raw):
            diags.append(error(span, "E_SYNTAX", "dangling backslash in string"))
            break
        e = raw[i + 1]
        if e in _ESCAPES:
            out.append(_ESCAPES[e])
            i += 2
        elif e == "u" and i + 6 <= len(raw):
            hexpart = raw[i + 2 : i + 6]
            try:
                out.append(chr(int(hexpart, 16)))
            except ValueError:
                diags.append(error(span, "E_SYNTAX", f"bad unicode escape \\u{hexpart}"))
                out.append(e)
            i += 6
        else:
            diags.append(error(span, "E_SYNTAX", f"unknown escape \\{e}"))
            out.append(e)
            i += 2
    return "".join(out)


def tokenize(text: str, file: str = "<input>") -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    line = 1
    line_start = 0
    pos = 0
    n = len(text)

    def span_at(start: int, length: int) -> SourceSpan:
        return SourceSpan(file, line, start - line_start + 1, max(length, 1))

    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            diags.append(error(span_at(pos, 1), "E_SYNTAX",
                               f"unexpected character {text[pos]!r}"))
            pos += 1
            continue
        kind = m.lastgroup
        raw = m.group()
        start = pos
        pos = m.end()
        if kind in ("ws", "comment"):
            nl = raw.count("\n")
            if nl:
                line += nl
                line_start = start + raw.rindex("\n") + 1
            continue
        sp = span_at(start, len(raw))
        if kind == "float":
            tokens.append(Token("float", raw, float(raw), sp))
        elif kind == "int":
            tokens.append(Token("int", raw, int(raw), sp))
        elif kind == "ident":
            tokens.append(Token("ident", raw, raw, sp))
        elif kind == "string":
            tokens.append(Token("string", raw, _unescape(raw[1:-1], sp, diags), sp))
        elif kind == "badstring":
            diags.append(error(sp, "E_SYNTAX", "unterminated string literal"))
            tokens.append(Token("string", raw, raw[1:], sp))
        elif kind == "op":
            tokens.append(Token("op", raw, raw, sp))
    eof_span = SourceSpan(file, line, max(pos - line_start + 1, 1), 1)
    tokens.append(Token("eof", "", None, eof_span))
    return tokens, diags


class TokenStream:
    """Cursor over a token list with the helpers recursive descent wants."""

    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, ahead: int = 0) -> Token:
        i = min(self.pos + ahead, len(self.tokens) - 1)
        return self.tokens[i]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at_op(self, *ops: str) -> bool:
        t = self.peek()
        return t.kind == "op" and t.text in ops

    def at_word(self, *words: str) -> bool:
        t = self.peek()
        return t.kind == "ident" and t.text in words

    def at_eof(self) -> bool:
        return self.peek().kind == "eof"

    def take_op(self, op: str) -> Optional[Token]:
        if self.at_op(op):
            return self.next()
        return None

    def take_word(self, word: str) -> Optional[Token]:
        if self.at_word(word):
            return self.next()
        return None
