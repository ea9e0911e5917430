"""Outer-syntax tokenizer for Isabelle theory and ROOT files.

Only enough of the outer syntax is recognized to find command keywords
reliably: quoted terms, cartouches, verbatim blocks and nested comments are
single opaque tokens, so keywords inside them are never seen by scanners.
"""

import bisect
import re
from dataclasses import dataclass

IDENT = "ident"
STRING = "string"
CARTOUCHE = "cartouche"
COMMENT = "comment"
VERBATIM = "verbatim"
NAT = "nat"
SYM = "sym"

_IDENT_RE = re.compile(r"\??[A-Za-z_\u0080-\uffff][\w']*(?:\.[A-Za-z_][\w']*)*")
# session names in ROOT files may contain dashes (HOL-Library)
_ROOT_IDENT_RE = re.compile(r"[A-Za-z_][\w'\-]*(?:\.[A-Za-z_][\w'\-]*)*")
_SPACE_RE = re.compile(r"\s+")
_NAT_RE = re.compile(r"\d+")
_SYMBOL_RE = re.compile(r"\\<\^?[A-Za-z_]+>")

OPEN_CARTOUCHE = ("\u2039", "\\<open>")
CLOSE_CARTOUCHE = ("\u203a", "\\<close>")

# Characters treated as part of identifiers above would swallow these.
_SINGLE_SYMBOLS = set("‹›⟹⟶⟷⟦⟧∧∨¬∀∃λ≡≠≤≥⇒⇔∈∉∪∩⊆")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    start: int
    end: int
    line: int
    end_line: int


class LineIndex:
    """Maps character offsets to 1-based line numbers."""

    def __init__(self, text):
        self.starts = [0]
        for m in re.finditer("\n", text):
            self.starts.append(m.end())

    def line_of(self, offset):
        return bisect.bisect_right(self.starts, offset)

    def line_start(self, line):
        return self.starts[line - 1]


def _skip_nested(text, i, opener, closer):
    # i points at the opener; returns offset just past the matching closer.
    depth = 0
    n = len(text)
    while i < n:
        if text.startswith(opener, i):
            depth += 1
            i += len(opener)
        elif text.startswith(closer, i):
            depth -= 1
            i += len(closer)
            if depth == 0:
                return i
        else:
            i += 1
    return n


def _skip_cartouche(text, i):
    depth = 0
    n = len(text)
    while i < n:
        opened = next((o for o in OPEN_CARTOUCHE if text.startswith(o, i)), None)
        if opened:
            depth += 1
            i += len(opened)
            continue
        closed = next((c for c in CLOSE_CARTOUCHE if text.startswith(c, i)), None)
        if closed:
            depth -= 1
            i += len(closed)
            if depth == 0:
                return i
            continue
        i += 1
    return n


def _skip_string(text, i, quote):
    i += 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\\" and i + 1 < n:
            i += 2
            continue
        if c == quote:
            return i + 1
        i += 1
    return n


def tokenize(text, lines=None, root_syntax=False):
    """Split ``text`` into a list of tokens. Whitespace is dropped."""
    lines = lines or LineIndex(text)
    ident_re = _ROOT_IDENT_RE if root_syntax else _IDENT_RE
    tokens = []
    i = 0
    n = len(text)

    def emit(kind, start, end):
        tokens.append(Token(kind, text[start:end], start, end,
                            lines.line_of(start), lines.line_of(max(start, end - 1))))

    while i < n:
        m = _SPACE_RE.match(text, i)
        if m:
            i = m.end()
            continue
        c = text[i]
        if text.startswith("(*", i):
            emit(COMMENT, i, j := _skip_nested(text, i, "(*", "*)"))
            i = j
        elif text.startswith("{*", i):
            emit(VERBATIM, i, j := _skip_nested(text, i, "{*", "*}"))
            i = j
        elif any(text.startswith(o, i) for o in OPEN_CARTOUCHE):
            emit(CARTOUCHE, i, j := _skip_cartouche(text, i))
            i = j
        elif c == '"' or c == "`":
            emit(STRING, i, j := _skip_string(text, i, c))
            i = j
        elif text.startswith("\\<comment>", i):
            emit(COMMENT, i, i + len("\\<comment>"))
            i += len("\\<comment>")
        elif (m := _SYMBOL_RE.match(text, i)) is not None:
            emit(SYM, i, m.end())
            i = m.end()
        elif c in _SINGLE_SYMBOLS:
            emit(SYM, i, i + 1)
            i += 1
        elif (m := ident_re.match(text, i)) is not None and not (c == "?" and m.end() == i + 1):
            emit(IDENT, i, m.end())
            i = m.end()
        elif (m := _NAT_RE.match(text, i)) is not None:
            emit(NAT, i, m.end())
            i = m.end()
        elif text.startswith("..", i):
            emit(SYM, i, i + 2)
            i += 2
        else:
            emit(SYM, i, i + 1)
            i += 1
    return tokens


def significant(tokens):
    return [t for t in tokens if t.kind != COMMENT]


def first_on_line(tokens):
    """Flags, per token, whether it is the first non-comment token on its line."""
    flags = []
    last_line = 0
    for t in tokens:
        if t.kind == COMMENT:
            flags.append(False)
            continue
        flags.append(t.line > last_line)
        last_line = t.end_line
    return flags


def unquote(tok):
    """Return the payload of a name-like token (bare ident or quoted string)."""
    if tok.kind == STRING:
        return tok.text[1:-1]
    if tok.kind == CARTOUCHE:
        for o, c in zip(OPEN_CARTOUCHE, CLOSE_CARTOUCHE):
            if tok.text.startswith(o) and tok.text.endswith(c):
                return tok.text[len(o):-len(c)]
    return tok.text
