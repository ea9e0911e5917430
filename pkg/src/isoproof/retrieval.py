"""Blank-line chunk library with BM25 ranking, plus the two retrieval
augmentations: similar chunks and origin chunks of the facts a proof uses."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from . import lexer
from ._compat import data_text
from .errors import EmptyQuery, NoCandidate

K1 = 1.2
B = 0.75
SIMILAR_LINES = 10
DEPENDENCY_LINES = 5
LIBRARY_FORMAT = "isoproof-chunks"
LIBRARY_VERSION = 1

_TOKEN = re.compile(r"\w+")
DECLARATION_KEYWORDS = ("lemma", "theorem", "corollary", "proposition", "lemmas", "theorems",
                        "definition", "abbreviation", "fun", "function", "primrec", "inductive",
                        "inductive_set", "datatype", "record", "crunch", "crunches", "locale")


def tokenize(text):
    """Lowercase word tokens; underscores stay inside tokens."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Chunk:
    id: int
    theory_id: str
    line_span: tuple[int, int]  # 1-based, inclusive
    text: str

    def head(self, n):
        return "\n".join(self.text.splitlines()[:n])


@dataclass
class ChunkLibrary:
    chunks: list
    doc_freq: dict = field(default_factory=dict)
    term_counts: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    avg_length: float = 0.0

    @classmethod
    def from_chunks(cls, chunks):
        lib = cls(list(chunks))
        lib._index()
        return lib

    def _index(self):
        self.term_counts = [Counter(tokenize(c.text)) for c in self.chunks]
        self.lengths = [sum(tc.values()) for tc in self.term_counts]
        df = Counter()
        for tc in self.term_counts:
            df.update(tc.keys())
        self.doc_freq = dict(df)
        self.avg_length = sum(self.lengths) / len(self.lengths) if self.lengths else 0.0

    def statistics(self):
        return (self.doc_freq, self.term_counts, self.lengths, self.avg_length)

    def consistent(self):
        """Recompute the statistics from the chunks and compare."""
        return ChunkLibrary.from_chunks(self.chunks).statistics() == self.statistics()

    def by_id(self, chunk_id):
        return self.chunks[self._pos()[chunk_id]]

    def _pos(self):
        if not hasattr(self, "_pos_cache"):
            self._pos_cache = {c.id: i for i, c in enumerate(self.chunks)}
        return self._pos_cache

    def __len__(self):
        return len(self.chunks)


def split_chunks(text, theory_id, start_id=0):
    """Split ``text`` on blank lines; returns chunks numbered from ``start_id``."""
    out = []
    current, first = [], None
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.strip():
            if first is None:
                first = lineno
            current.append(line)
        elif current:
            out.append(Chunk(start_id + len(out), theory_id, (first, lineno - 1), "\n".join(current)))
            current, first = [], None
    if current:
        out.append(Chunk(start_id + len(out), theory_id, (first, first + len(current) - 1),
                         "\n".join(current)))
    return out


def build_chunks(theories):
    chunks = []
    for th in sorted(theories, key=lambda t: t.id):
        chunks += split_chunks(th.body, th.id, start_id=len(chunks))
    return ChunkLibrary.from_chunks(chunks)


def bm25_scores(lib, query):
    terms = tokenize(query)
    if not terms:
        raise EmptyQuery(query)
    n = len(lib.chunks)
    avg = lib.avg_length or 1.0
    idf = {}
    for t in set(terms):
        df = lib.doc_freq.get(t, 0)
        idf[t] = math.log((n - df + 0.5) / (df + 0.5) + 1.0)
    scores = []
    for tc, dl in zip(lib.term_counts, lib.lengths):
        norm = K1 * (1 - B + B * dl / avg)
        s = 0.0
        for t in terms:
            f = tc.get(t, 0)
            if f:
                s += idf[t] * f * (K1 + 1) / (f + norm)
        scores.append(s)
    return scores


def bm25_rank(lib, query, top_n=10):
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    scores = bm25_scores(lib, query)
    ranked = sorted(zip((c.id for c in lib.chunks), scores), key=lambda p: (-p[1], p[0]))
    return ranked[:top_n]


def _overlaps(chunk, lemma):
    lo, hi = lemma.span
    return chunk.theory_id == lemma.theory_id and chunk.line_span[0] <= hi and lo <= chunk.line_span[1]


def similar_chunk(lib, lemma):
    """Best-ranked chunk for the lemma statement, never one holding its own proof."""
    for cid, _score in bm25_rank(lib, lemma.spec_text, top_n=max(1, len(lib))):
        chunk = lib.by_id(cid)
        if not _overlaps(chunk, lemma):
            return chunk
    raise NoCandidate(lemma.id)


def similar_augment(lib, lemma, lines=SIMILAR_LINES):
    return f"<sim>\n{similar_chunk(lib, lemma).head(lines)}\n</sim>"


# ---------------------------------------------------------------------------
# applied facts

_STOPLIST = None
FACT_MODIFIERS = frozenset({"add", "only", "simp", "intro", "elim", "dest", "split", "cong",
                            "rule", "del"})
TERM_MODIFIERS = frozenset({"arbitrary", "taking"})
FACT_ATTRIBUTES = frozenset({"OF", "THEN", "unfolded", "folded", "simplified", "trans", "sym"})
TERM_METHODS = frozenset({"cases", "case_tac", "induct", "induct_tac", "induction", "ind_cases",
                          "subgoal_tac", "rename_tac", "rotate_tac", "thin_tac", "mock_sleep"})
FACT_COMMANDS = frozenset({"using", "unfolding", "from", "with", "note"})
LABEL_COMMANDS = frozenset({"have", "show", "hence", "thus", "obtain", "assume", "presume",
                            "note", "define"})


def load_stoplist(path=None):
    """Stop words for fact extraction; the bundled list unless ``path`` is given."""
    global _STOPLIST
    if path is None and _STOPLIST is not None:
        return _STOPLIST
    if path is None:
        text = data_text("fact_stoplist.txt")
    else:
        text = Path(path).read_text(encoding="utf-8")
    words = frozenset(w for line in text.splitlines() if not line.lstrip().startswith("#")
                      for w in line.split())
    if path is None:
        _STOPLIST = words
    return words


def extract_applied_facts(proof, stoplist=None):
    """Fact names used by a proof script, in first-use order."""
    stop = load_stoplist() if stoplist is None else stoplist
    try:
        toks = lexer.significant(lexer.tokenize(proof))
    except Exception:  # the lexer is total, this only guards odd inputs
        return []
    labels = set()
    for i, t in enumerate(toks):
        if (t.kind == lexer.IDENT and t.text in LABEL_COMMANDS and i + 2 < len(toks)
                and toks[i + 1].kind == lexer.IDENT and toks[i + 2].text in (":", "[")):
            labels.add(toks[i + 1].text)
    out = []
    # mode per bracket level: "facts" or "terms"; level 0 is the command level
    stack = [("facts", ")")]
    expect_method = False
    for i, t in enumerate(toks):
        nxt = toks[i + 1] if i + 1 < len(toks) else None
        mode = stack[-1][0]
        if t.kind == lexer.SYM:
            if t.text == "(":
                stack.append(("facts", ")"))
                expect_method = True
            elif t.text == "[":
                stack.append(("attr", "]"))
            elif t.text in (")", "]"):
                if len(stack) > 1:
                    stack.pop()
                expect_method = False
            elif t.text in (",", ";", "|"):
                if stack[-1][1] == ")":
                    expect_method = True
                    stack[-1] = ("facts", ")")
                else:
                    stack[-1] = ("attr", "]")
            continue
        if t.kind != lexer.IDENT:
            continue
        w = t.text
        if len(stack) == 1 and w in ("apply", "by", "proof", "qed"):
            expect_method = True
            continue
        if expect_method:
            expect_method = False
            if w in TERM_METHODS or w.endswith("_tac"):
                stack[-1] = ("terms", stack[-1][1])
                continue
            if w in stop:
                continue
        if mode == "attr":
            stack[-1] = ("facts" if w in FACT_ATTRIBUTES else "terms", "]")
            continue
        if nxt is not None and nxt.kind == lexer.SYM and nxt.text == ":":
            if w in TERM_MODIFIERS:
                stack[-1] = ("terms", stack[-1][1])
            elif w in FACT_MODIFIERS or stack[-1][1] == ")":
                stack[-1] = ("facts", stack[-1][1])
            continue
        if mode == "terms":
            if w == "in":
                stack[-1] = ("facts", stack[-1][1])
            continue
        if (w in stop or w in labels or len(w) < 2 or w.startswith("?") or w == "_"):
            continue
        if w not in out:
            out.append(w)
    return out


# ---------------------------------------------------------------------------
# dependency augmentation

def declared_names(fact):
    """Names whose declaration would introduce ``fact``."""
    names = [fact]
    if fact.endswith("_def"):
        names.append(fact[:-4])
    for suffix in (".simps", ".induct", ".cases", ".intros", ".elims"):
        if fact.endswith(suffix):
            names.append(fact[: -len(suffix)])
    if "." in fact:
        names.append(fact.rsplit(".", 1)[-1])
    return names


def _declaration_pattern(name):
    kws = "|".join(DECLARATION_KEYWORDS)
    return re.compile(rf"^\s*(?:{kws})\s+(?:\(in\s+[\w.']+\)\s+)?\"?{re.escape(name)}(?![\w'.])",
                      re.MULTILINE)


@dataclass
class DependencySources:
    chunks: list  # Chunk objects in emission order
    located: list  # facts with an origin chunk
    skipped: list  # facts without one


def dependency_sources(lib, bench, lemma, facts=None):
    """Find the chunk declaring each applied fact inside the bench's dependency closure.

    Candidate theories are the closure of the target theory plus the part of
    the target theory before the lemma. Among several declarations the one
    nearest to the target wins: the target theory itself first, then closure
    theories later in import order, then the later line.
    """
    facts = extract_applied_facts(lemma.proof_text) if facts is None else facts
    order = {tid: k for k, tid in enumerate(bench.closure)}
    own = lemma.theory_id
    order[own] = len(order) + 1
    start_line = lemma.span[0]
    candidates = [c for c in lib.chunks
                  if c.theory_id in order and (c.theory_id != own or c.line_span[1] < start_line)]
    emitted, located, skipped, seen = [], [], [], set()
    for fact in facts:
        best = None
        for name in declared_names(fact):
            pat = _declaration_pattern(name)
            for c in candidates:
                if pat.search(c.text):
                    rank = (order[c.theory_id], c.line_span[0])
                    if best is None or rank > best[0]:
                        best = (rank, c)
            if best is not None:
                break
        if best is None:
            skipped.append(fact)
            continue
        located.append(fact)
        if best[1].id not in seen:
            seen.add(best[1].id)
            emitted.append(best[1])
    return DependencySources(emitted, located, skipped)


def dependency_augment(lib, graph, bench, lemma, lines=DEPENDENCY_LINES):
    """``<dep>`` blocks with the first lines of each applied fact's origin chunk.

    ``graph`` is accepted for interface symmetry; the closure recorded on the
    bench is what restricts the candidates.
    """
    src = dependency_sources(lib, bench, lemma)
    return "\n".join(f"<dep>\n{c.head(lines)}\n</dep>" for c in src.chunks)


# ---------------------------------------------------------------------------
# persistence

def save_library(lib, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"format": LIBRARY_FORMAT, "version": LIBRARY_VERSION,
                            "chunks": len(lib.chunks), "k1": K1, "b": B}) + "\n")
        for c in lib.chunks:
            f.write(json.dumps({"id": c.id, "theory_id": c.theory_id,
                                "line_span": list(c.line_span), "text": c.text}) + "\n")


def load_library(path):
    with open(path, encoding="utf-8") as f:
        header = json.loads(f.readline())
        if header.get("format") != LIBRARY_FORMAT or header.get("version") != LIBRARY_VERSION:
            raise ValueError(f"{path}: unsupported chunk library format {header}")
        chunks = []
        for line in f:
            if line.strip():
                d = json.loads(line)
                chunks.append(Chunk(d["id"], d["theory_id"], tuple(d["line_span"]), d["text"]))
    if len(chunks) != header["chunks"]:
        raise ValueError(f"{path}: truncated chunk library")
    return ChunkLibrary.from_chunks(chunks)
