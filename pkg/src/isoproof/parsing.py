"""ROOT and theory parsing plus keyword-driven lemma extraction.

This is a deliberately rough parser: proofs are located by scanning the
outer-syntax token stream for command keywords, never by understanding terms.
"""

from __future__ import annotations

import logging
import posixpath
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import lexer
from .corpus import (EXTERNAL_THEORIES, Corpus, ImportResolver, Lemma, SessionSpec, Style,
                     TheoryFile, category_for, is_external_session, theory_id)
from .errors import (CorpusError, MalformedStanza, MissingHeader, UnresolvedImport,
                     UnterminatedProof, UnterminatedTheory)
from .lexer import COMMENT, IDENT, NAT, STRING, SYM, CARTOUCHE

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# ROOT files

ROOT_KEYWORDS = frozenset({
    "session", "chapter", "chapter_definition", "in", "description", "options", "sessions",
    "directories", "theories", "document_theories", "document_files", "export_files",
    "export_classpath", "global",
})
_NAME_KINDS = (IDENT, STRING, NAT)
# opaque directives, emitted back in this order relative to the known ones
_EXTRA_BEFORE_SESSIONS = ("options",)
_EXTRA_AFTER_SESSIONS = ("directories",)
_EXTRA_AFTER_THEORIES = ("document_theories", "document_files", "export_files", "export_classpath")


@dataclass(frozen=True)
class RootFile:
    path: str
    stanzas: tuple[SessionSpec, ...]
    unparsed_regions: tuple[tuple[tuple[int, int], str], ...]
    stanza_spans: tuple[tuple[int, int], ...] = field(default=(), repr=False)

    def reconstruct(self):
        pieces = [(span, s.raw_stanza) for span, s in zip(self.stanza_spans, self.stanzas)]
        pieces += list(self.unparsed_regions)
        return "".join(text for _, text in sorted(pieces))


def _is_name(tok):
    return tok.kind in _NAME_KINDS and not (tok.kind == IDENT and tok.text in ROOT_KEYWORDS)


class _RootParser:
    def __init__(self, text, tokens, root_dir):
        self.text = text
        self.toks = tokens
        self.i = 0
        self.root_dir = root_dir

    def peek(self, k=0):
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def at_kw(self, *words):
        t = self.peek()
        return t is not None and t.kind == IDENT and t.text in words

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def names(self):
        out = []
        while (t := self.peek()) is not None and _is_name(t):
            out.append(lexer.unquote(self.take()))
            # theory qualifiers like "(global)"
            if (p := self.peek()) is not None and p.text == "(" and self.peek(1) is not None \
                    and self.peek(1).text == "global":
                self.skip_group("(", ")")
        return out

    def skip_group(self, open_, close):
        depth = 0
        start = self.peek()
        while (t := self.peek()) is not None:
            self.take()
            if t.text == open_:
                depth += 1
            elif t.text == close:
                depth -= 1
                if depth == 0:
                    return
        raise MalformedStanza(start.line, f"unbalanced {open_}")

    def stanza(self):
        head = self.take()
        line = head.line
        t = self.peek()
        if t is None or not _is_name(t):
            raise MalformedStanza(line, "missing session name")
        name = lexer.unquote(self.take())
        if (t := self.peek()) is not None and t.text == "(":
            self.skip_group("(", ")")  # session groups
        directory = None
        if self.at_kw("in"):
            self.take()
            t = self.peek()
            if t is None or not _is_name(t):
                raise MalformedStanza(line, "missing directory after 'in'")
            directory = lexer.unquote(self.take())
        t = self.peek()
        if t is None or t.text != "=":
            raise MalformedStanza(line, "expected '='")
        self.take()
        parent = None
        t, nxt = self.peek(), self.peek(1)
        if t is not None and _is_name(t) and nxt is not None and nxt.text == "+":
            parent = lexer.unquote(self.take())
            self.take()
        elif t is not None and t.text == "+":
            self.take()
        elif t is not None and _is_name(t) and (nxt is None or (nxt.kind == IDENT and nxt.text in ("session", "chapter"))):
            parent = lexer.unquote(self.take())
        description = None
        sessions, theories, extras = [], [], []
        end = self.toks[self.i - 1].end
        while (t := self.peek()) is not None:
            if not t.kind == IDENT or t.text in ("session", "chapter", "chapter_definition"):
                break
            if t.text == "description":
                self.take()
                d = self.peek()
                if d is None or d.kind not in (STRING, CARTOUCHE):
                    raise MalformedStanza(t.line, "description needs text")
                description = lexer.unquote(self.take())
            elif t.text == "sessions":
                self.take()
                sessions += self.names()
            elif t.text == "theories":
                self.take()
                if (p := self.peek()) is not None and p.text == "[":
                    self.skip_group("[", "]")
                theories += self.names()
            elif t.text in _EXTRA_BEFORE_SESSIONS + _EXTRA_AFTER_SESSIONS + _EXTRA_AFTER_THEORIES:
                start = self.take()
                if (p := self.peek()) is not None and p.text == "[":
                    self.skip_group("[", "]")
                if (p := self.peek()) is not None and p.text == "(":
                    self.skip_group("(", ")")
                self.names()
                extras.append((start.text, self.text[start.start:self.toks[self.i - 1].end]))
            else:
                break  # unknown directive: left for the unparsed regions
            end = self.toks[self.i - 1].end
        if not theories:
            raise MalformedStanza(line, f"session {name} declares no theories")
        if directory is None:
            directory = posixpath.normpath(self.root_dir or ".")
        else:
            directory = posixpath.normpath(posixpath.join(self.root_dir or "", directory))
        spec = SessionSpec(name=name, directory=directory, parent=parent,
                           imported_sessions=tuple(sessions), entry_theories=tuple(theories),
                           description=description, extra_directives=tuple(extras),
                           raw_stanza=self.text[head.start:end])
        return spec, (head.start, end)


def parse_root(text, path="ROOT"):
    """Parse a ROOT file. ``path`` is corpus-relative; session directories are
    resolved against its parent directory."""
    root_dir = posixpath.dirname(path)
    tokens = [t for t in lexer.tokenize(text, root_syntax=True) if t.kind != COMMENT]
    parser = _RootParser(text, tokens, root_dir)
    stanzas, spans = [], []
    while parser.i < len(tokens):
        if parser.at_kw("session"):
            spec, span = parser.stanza()
            stanzas.append(spec)
            spans.append(span)
        else:
            parser.take()
    regions = []
    pos = 0
    for start, end in spans:
        if start > pos:
            regions.append(((pos, start), text[pos:start]))
        pos = end
    if pos < len(text):
        regions.append(((pos, len(text)), text[pos:]))
    return RootFile(path=path, stanzas=tuple(stanzas), unparsed_regions=tuple(regions),
                    stanza_spans=tuple(spans))


_BARE_NAME = re.compile(r"[A-Za-z_][\w'\-]*(?:\.[A-Za-z_][\w'\-]*)*\Z")


def _root_name(name):
    return name if _BARE_NAME.match(name) and name not in ROOT_KEYWORDS else f'"{name}"'


def format_stanza(spec, root_dir=""):
    """Render a session stanza. Keyword order: session, in, =, +, description,
    sessions, theories (opaque directives slot in where Isabelle expects them)."""
    head = f"session {_root_name(spec.name)}"
    rel = posixpath.relpath(spec.directory, root_dir or ".")
    if rel != ".":
        head += f' in "{rel}"'
    head += f" = {_root_name(spec.parent)} +" if spec.parent else " ="
    lines = [head]
    if spec.description is not None:
        lines.append(f"  description \\<open>{spec.description}\\<close>")
    extras = dict()
    for kw, raw in spec.extra_directives:
        extras.setdefault(kw, []).append(raw)

    def put(kws):
        for kw in kws:
            for raw in extras.get(kw, ()):
                lines.append("  " + raw)

    put(_EXTRA_BEFORE_SESSIONS)
    if spec.imported_sessions:
        lines.append("  sessions")
        lines += [f"    {_root_name(s)}" for s in spec.imported_sessions]
    put(_EXTRA_AFTER_SESSIONS)
    lines.append("  theories")
    lines += [f'    "{t}"' for t in spec.entry_theories]
    put(_EXTRA_AFTER_THEORIES)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# theories

# Theory-level commands: a line starting with one of these ends the previous command.
TOP_KEYWORDS = frozenset("""
lemma theorem corollary proposition schematic_goal lemmas theorems declare
definition fun function primrec abbreviation datatype codatatype type_synonym typedecl record
consts axiomatization overloading termination
locale context class instantiation instance interpretation sublocale global_interpretation
experiment notepad bundle unbundle
text txt section subsection subsubsection chapter paragraph subparagraph text_raw
ML ML_file ML_val ML_command setup method_setup attribute_setup simproc_setup method
notation no_notation syntax no_syntax translations type_notation abbreviation
hide_const hide_fact hide_type named_theorems
crunch crunches crunch_ignore requalify_consts requalify_facts arch_requalify_facts
qualified private end
""".split())

LEMMA_KEYWORDS = frozenset({"lemma", "theorem"})
PROOF_START = frozenset({"apply", "apply_end", "by", "proof", "using", "unfolding", "including",
                         "supply", "sorry", "oops", "subgoal", "defer", "prefer", "back"})
STATEMENT_KEYWORDS = frozenset({"assumes", "shows", "fixes", "obtains", "includes", "notes",
                                "defines", "constrains", "for", "if", "and", "is"})
_OPEN = {"(": ")", "[": "]"}


def parse_theory(text, id=None, path=""):
    """Parse the header of a theory file; lemma extraction is a separate step."""
    tokens = lexer.tokenize(text)
    sig = lexer.significant(tokens)
    if not sig or sig[0].kind != IDENT or sig[0].text != "theory":
        raise MissingHeader(f"{path or id}: no 'theory' header")
    if len(sig) < 2:
        raise MissingHeader(f"{path or id}: theory name missing")
    name = lexer.unquote(sig[1])
    imports = []
    i = 2
    collecting = False
    begin = None
    while i < len(sig):
        t = sig[i]
        if t.kind == IDENT and t.text == "begin":
            begin = t
            break
        if t.kind == IDENT and t.text == "imports":
            collecting = True
        elif t.kind == IDENT and t.text in ("keywords", "abbrevs"):
            collecting = False
        elif collecting and t.kind in (IDENT, STRING):
            imports.append(lexer.unquote(t))
        i += 1
    if begin is None:
        raise MissingHeader(f"{path or id}: header has no 'begin'")
    depth = 0
    body_end = None
    for t in sig[i + 1:]:
        if t.kind != IDENT:
            continue
        if t.text == "begin":
            depth += 1
        elif t.text == "end":
            if depth == 0:
                body_end = t.start
                break
            depth -= 1
    if body_end is None:
        raise UnterminatedTheory(f"{path or id}: no closing 'end'")
    tid = id or name
    imports = [imp for imp in imports if imp != name]
    return TheoryFile(id=tid, path=path, imports=tuple(imports), body=text,
                      body_start=begin.end, body_end=body_end)


@dataclass
class _Scan:
    name: str | None
    attributes: tuple[str, ...]
    in_target: bool
    proof_start: lexer.Token
    last: lexer.Token
    terminator: str


def _match_close(toks, i):
    """Index of the token closing the bracket at ``toks[i]`` or None."""
    stack = []
    for j in range(i, len(toks)):
        t = toks[j]
        if t.kind != SYM:
            continue
        if t.text in _OPEN:
            stack.append(_OPEN[t.text])
        elif stack and t.text == stack[-1]:
            stack.pop()
            if not stack:
                return j
        elif t.text in (")", "]"):
            return None
    return None


def _split_attributes(text, toks):
    parts, depth, start = [], 0, None
    for t in toks:
        if t.kind == SYM and t.text in _OPEN:
            depth += 1
        elif t.kind == SYM and t.text in (")", "]"):
            depth -= 1
        if t.kind == SYM and t.text == "," and depth == 0:
            if start is not None:
                parts.append(text[start:prev_end].strip())
            start = None
            continue
        if start is None:
            start = t.start
        prev_end = t.end
    if start is not None:
        parts.append(text[start:prev_end].strip())
    return tuple(parts)


def _method_end(toks, i):
    """Skip one proof method starting at ``toks[i]``; return index of its last token."""
    t = toks[i]
    if t.kind == SYM and t.text == "(":
        j = _match_close(toks, i)
        if j is None:
            return None
    elif t.kind == IDENT and t.text not in PROOF_START and t.text not in ("done", "qed"):
        j = i
    else:
        return None
    # postfix combinators: +, ?, [n]
    while j + 1 < len(toks):
        nxt = toks[j + 1]
        if nxt.kind == SYM and nxt.text in ("+", "?") and nxt.line == toks[j].end_line:
            j += 1
        elif nxt.kind == SYM and nxt.text == "[" and nxt.line == toks[j].end_line:
            k = _match_close(toks, j + 1)
            if k is None:
                return None
            j = k
        else:
            break
    return j


@dataclass
class LemmaHeader:
    name: str | None
    attributes: tuple[str, ...]
    in_target: bool
    statement_index: int  # first token after name/attributes/colon
    proof_index: int | None  # first proof token, None if absent


def lemma_header(text, toks):
    """Parse ``lemma (in loc) name[attrs]: statement`` from significant tokens."""
    i = 1
    in_target = False
    name = None
    attrs = ()
    n = len(toks)
    if i + 1 < n and toks[i].text == "(" and toks[i + 1].text == "in":
        j = _match_close(toks, i)
        if j is None:
            return None
        in_target = True
        i = j + 1
    if i < n and toks[i].kind == IDENT and toks[i].text not in STATEMENT_KEYWORDS | PROOF_START \
            and i + 1 < n and toks[i + 1].text in (":", "["):
        name = toks[i].text
        i += 1
    if i < n and toks[i].text == "[":
        j = _match_close(toks, i)
        if j is None:
            return None
        attrs = _split_attributes(text, toks[i + 1:j])
        i = j + 1
    if i < n and toks[i].text == ":":
        i += 1
    statement = i
    depth = 0
    start = None
    while i < n:
        t = toks[i]
        if t.kind == SYM and t.text in _OPEN:
            depth += 1
        elif t.kind == SYM and t.text in (")", "]"):
            depth = max(0, depth - 1)
        elif depth == 0 and ((t.kind == IDENT and t.text in PROOF_START)
                             or (t.kind == SYM and t.text in (".", ".."))):
            start = i
            break
        i += 1
    return LemmaHeader(name, attrs, in_target, statement, start)


def _scan_lemma(text, toks):
    """``toks``: significant tokens of one lemma command (keyword first)."""
    head = lemma_header(text, toks)
    if head is None or head.proof_index is None:
        return None
    name, attrs, in_target, start = head.name, head.attributes, head.in_target, head.proof_index
    n = len(toks)

    nest = 0
    depth = 0
    unsound = False
    i = start
    while i < n:
        t = toks[i]
        if t.kind == SYM:
            if t.text in _OPEN:
                depth += 1
            elif t.text in (")", "]"):
                depth = max(0, depth - 1)
            elif depth == 0 and t.text in (".", "..") and nest == 0:
                return _Scan(name, attrs, in_target, toks[start], t, "dot")
            i += 1
            continue
        if t.kind != IDENT or depth > 0:
            i += 1
            continue
        w = t.text
        if w == "proof":
            nest += 1
        elif w == "qed":
            nest -= 1
            if nest < 0:
                return None
            if nest == 0:
                last = i
                # optional terminal method on the same line: "qed auto"
                if i + 1 < n and toks[i + 1].line == t.end_line:
                    j = _method_end(toks, i + 1)
                    if j is not None:
                        last = j
                return _Scan(name, attrs, in_target, toks[start], toks[last],
                             "sorry" if unsound else "qed")
        elif w == "done" and nest == 0:
            return _Scan(name, attrs, in_target, toks[start], t, "done")
        elif w == "by":
            if i + 1 >= n:
                return None
            j = _method_end(toks, i + 1)
            if j is None:
                return None
            # "by m1 m2": the second method must start on the line where m1 ends
            if j + 1 < n and toks[j + 1].line == toks[j].end_line:
                k = _method_end(toks, j + 1)
                if k is not None:
                    j = k
            if nest == 0:
                return _Scan(name, attrs, in_target, toks[start], toks[j], "by")
            i = j
        elif w == "sorry" and nest == 0:
            return _Scan(name, attrs, in_target, toks[start], t, "sorry")
        elif w == "sorry":
            unsound = True
        elif w == "oops":
            return _Scan(name, attrs, in_target, toks[start], t, "oops")
        i += 1
    return None


def _commands(theory, tokens):
    """Yield (keyword token index, end index, locale depth) for every top-level
    command inside the theory body."""
    body = [t for t in tokens if theory.body_start <= t.start < theory.body_end]
    flags = lexer.first_on_line(body)
    starts = [i for i, t in enumerate(body)
              if t.kind == IDENT and ((flags[i] and t.text in TOP_KEYWORDS) or t.text == "end")]
    depth = 0
    out = []
    for k, s in enumerate(starts):
        e = starts[k + 1] if k + 1 < len(starts) else len(body)
        kw = body[s].text
        if kw == "end":
            depth = max(0, depth - 1)
        out.append((s, e, depth))
        if kw != "end":
            depth += sum(1 for t in body[s:e] if t.kind == IDENT and t.text == "begin")
    return body, out


def _line_count(text):
    return sum(1 for line in text.splitlines() if line.strip())


def extract_lemmas(theory, errors=None):
    """Extract every ``lemma``/``theorem`` of ``theory``.

    A lemma whose proof cannot be delimited is skipped and reported as
    UnterminatedProof (appended to ``errors`` when given, logged otherwise).
    """
    text = theory.body
    lines = lexer.LineIndex(text)
    tokens = lexer.tokenize(text, lines)
    body, commands = _commands(theory, tokens)
    lemmas = []
    seen_names = {}
    anon = 0
    for s, e, depth in commands:
        kw = body[s]
        if kw.text not in LEMMA_KEYWORDS:
            continue
        toks = [t for t in body[s:e] if t.kind != COMMENT]
        scan = _scan_lemma(text, toks)
        if scan is None:
            err = UnterminatedProof(kw.line, theory.id)
            if errors is not None:
                errors.append(err)
            else:
                log.warning("%s", err)
            continue
        if scan.name is None:
            anon += 1
            name = f"anon#{anon}"
        else:
            name = scan.name
        seen_names[name] = seen_names.get(name, 0) + 1
        key = name if seen_names[name] == 1 else f"{name}#{seen_names[name]}"
        spec_text = text[kw.start:scan.proof_start.start]
        proof_text = text[scan.proof_start.start:scan.last.end]
        style = _style_of(proof_text)
        count = _line_count(proof_text)
        in_locale = depth > 0 or scan.in_target
        lemmas.append(Lemma(
            id=f"{theory.id}.{key}", theory_id=theory.id, name=name,
            attributes=scan.attributes, spec_text=spec_text, proof_text=proof_text,
            proof_line_count=count, style=style,
            category=category_for(style, count, in_locale, scan.terminator),
            span=(kw.line, scan.last.end_line), in_locale=in_locale,
            terminator=scan.terminator, offset=kw.start,
        ))
    return lemmas


def _style_of(proof_text):
    sig = lexer.significant(lexer.tokenize(proof_text))
    if sig and sig[0].kind == IDENT and sig[0].text == "proof":
        return Style.DECLARATIVE
    return Style.PROCEDURAL


def classify_style(lemma):
    return _style_of(lemma.proof_text)


def categorize(lemma):
    return category_for(lemma.style, lemma.proof_line_count, lemma.in_locale, lemma.terminator)


def parse_lemma_text(text, theory_id="Scratch.Scratch"):
    """Parse a standalone lemma by wrapping it into a throwaway theory."""
    header = "theory Scratch imports Main begin\n"
    wrapped = header + text + "\nend\n"
    th = parse_theory(wrapped, id=theory_id)
    return extract_lemmas(th)


# ---------------------------------------------------------------------------
# corpus loading

def _candidate_paths(name, importer_dir, session_dir):
    base = name.rsplit(".", 1)[-1] if "/" not in name else name
    if "/" in name:
        return [posixpath.normpath(posixpath.join(importer_dir, name)) + ".thy"]
    out = [posixpath.normpath(posixpath.join(importer_dir, base)) + ".thy"]
    alt = posixpath.normpath(posixpath.join(session_dir, base)) + ".thy"
    if alt not in out:
        out.append(alt)
    return out


def find_root_files(root):
    root = Path(root)
    return sorted(p for p in root.rglob("ROOT")
                  if p.is_file() and not any(part.startswith(".") for part in p.relative_to(root).parts))


def load_corpus(root, external_sessions=()):
    """Parse every ROOT file and reachable theory under ``root``.

    Per-file problems are collected in ``Corpus.errors`` instead of aborting,
    so one broken theory only removes itself (and anything importing it).
    """
    root = Path(root)
    errors = []
    sessions = {}
    for rp in find_root_files(root):
        rel = rp.relative_to(root).as_posix()
        try:
            rf = parse_root(rp.read_text(encoding="utf-8"), rel)
        except CorpusError as e:
            errors.append((rel, str(e)))
            continue
        for s in rf.stanzas:
            if s.name in sessions:
                errors.append((rel, f"duplicate session {s.name}"))
                continue
            sessions[s.name] = s

    claimed = {}
    theories = {}
    for sname in sorted(sessions):
        s = sessions[sname]
        queue = [(name, s.directory) for name in s.entry_theories]
        while queue:
            name, importer_dir = queue.pop(0)
            if name in EXTERNAL_THEORIES:
                continue
            if "/" not in name and "." in name:
                qual = name.rsplit(".", 1)[0]
                if qual != sname and (qual in sessions or is_external_session(qual, external_sessions)):
                    continue
            path = next((p for p in _candidate_paths(name, importer_dir, s.directory)
                         if (root / p).is_file()), None)
            if path is None or path in claimed:
                continue
            claimed[path] = sname
            tid = theory_id(sname, posixpath.basename(path)[:-4])
            try:
                th = parse_theory((root / path).read_text(encoding="utf-8"), id=tid, path=path)
            except CorpusError as e:
                errors.append((path, str(e)))
                continue
            lemma_errors = []
            th = replace(th, lemmas=tuple(extract_lemmas(th, lemma_errors)))
            errors += [(path, str(e)) for e in lemma_errors]
            theories[tid] = th
            queue += [(imp, posixpath.dirname(path)) for imp in th.imports]

    for s in sessions.values():
        for d in s.dependencies:
            if d not in sessions and not is_external_session(d, external_sessions):
                errors.append((s.directory, f"session {s.name}: unresolved session {d}"))

    # drop theories whose imports do not resolve, to a fixpoint
    while True:
        resolver = ImportResolver(sessions.values(), theories.values(), external_sessions)
        bad = {}
        for t in theories.values():
            for imp in t.imports:
                try:
                    resolver.resolve(imp, t)
                except UnresolvedImport as e:
                    bad[t.id] = (t.path, str(e))
                    break
        if not bad:
            break
        for tid, err in sorted(bad.items()):
            errors.append(err)
            del theories[tid]
    return Corpus(root=root, sessions=[sessions[n] for n in sorted(sessions)],
                  theories=[theories[t] for t in sorted(theories)], errors=errors,
                  external_sessions=tuple(external_sessions))
