"""Corpus data model: sessions, theories, lemmas and their dependency graph."""

from __future__ import annotations

import hashlib
import heapq
import json
import logging
import os
import posixpath
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from .errors import (CorpusError, DependencyCycle, UnknownTheory, UnresolvedImport,
                     UnresolvedSession)

log = logging.getLogger(__name__)

MANIFEST_FORMAT = 1

# Sessions/theories provided by the prover distribution itself.
EXTERNAL_SESSIONS = frozenset({"Pure", "HOL", "HOL-Library", "HOL-Word", "HOL-Eisbach", "ZF"})
EXTERNAL_THEORIES = frozenset({"Pure", "Main", "Complex_Main", "HOL"})


class Style(str, Enum):
    PROCEDURAL = "procedural"
    DECLARATIVE = "declarative"


class Category(str, Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    D = "D"
    EXCLUDED = "excluded"


BENCH_CATEGORIES = (Category.P1, Category.P2, Category.P3, Category.D)

MAX_PROOF_LINES = 20
# terminators that leave the groundtruth unchecked; such lemmas never enter the benchmark
UNSOUND_TERMINATORS = frozenset({"sorry", "oops"})


def category_for(style, proof_line_count, in_locale=False, terminator="done"):
    style = Style(style)
    if in_locale or terminator not in ("qed", "done", "by"):
        return Category.EXCLUDED
    if proof_line_count < 1 or proof_line_count > MAX_PROOF_LINES:
        return Category.EXCLUDED
    if style is Style.DECLARATIVE:
        return Category.D
    if proof_line_count == 1:
        return Category.P1
    if proof_line_count <= 6:
        return Category.P2
    return Category.P3


def is_external_session(name, extra=()):
    return name in EXTERNAL_SESSIONS or name.startswith("HOL-") or name in extra


@dataclass(frozen=True)
class SessionSpec:
    name: str
    directory: str
    parent: str | None
    imported_sessions: tuple[str, ...]
    entry_theories: tuple[str, ...]
    description: str | None = None
    # directives kept opaque but round-tripped: (keyword, raw text)
    extra_directives: tuple[tuple[str, str], ...] = ()
    raw_stanza: str = field(default="", compare=False, repr=False)

    @property
    def dependencies(self):
        deps = [self.parent] if self.parent else []
        return tuple(deps + [s for s in self.imported_sessions if s not in deps])


@dataclass(frozen=True)
class Lemma:
    id: str
    theory_id: str
    name: str
    attributes: tuple[str, ...]
    spec_text: str
    proof_text: str
    proof_line_count: int
    style: Style
    category: Category
    span: tuple[int, int]
    in_locale: bool
    terminator: str = "done"
    offset: int = 0

    @property
    def key(self):
        return hashlib.sha1(self.id.encode()).hexdigest()[:8]

    @property
    def text(self):
        return self.spec_text + self.proof_text

    @property
    def statement(self):
        """Specification as shown to a model: the spec text without trailing blanks."""
        return self.spec_text.rstrip()

    def to_record(self):
        d = asdict(self)
        d["style"] = self.style.value
        d["category"] = self.category.value
        d["span"] = list(self.span)
        d["attributes"] = list(self.attributes)
        return d

    @classmethod
    def from_record(cls, d):
        d = dict(d)
        d.pop("record", None)
        d["style"] = Style(d["style"])
        d["category"] = Category(d["category"])
        d["span"] = tuple(d["span"])
        d["attributes"] = tuple(d["attributes"])
        return cls(**d)


@dataclass(frozen=True)
class TheoryFile:
    id: str
    path: str
    imports: tuple[str, ...]
    body: str
    lemmas: tuple[Lemma, ...] = ()
    body_start: int = 0
    body_end: int = 0

    @property
    def session(self):
        return self.id.rsplit(".", 1)[0] if "." in self.id else ""

    @property
    def name(self):
        return self.id.rsplit(".", 1)[-1]

    @property
    def digest(self):
        return hashlib.sha256(self.body.encode()).hexdigest()


def theory_id(session, name):
    return f"{session}.{name}"


class ImportResolver:
    """Resolves theory import names the way a session build would see them."""

    def __init__(self, sessions, theories, external_sessions=()):
        self.sessions = {s.name: s for s in sessions}
        self.theories = {t.id: t for t in theories}
        self.by_path = {t.path: t.id for t in theories}
        self.external_sessions = frozenset(external_sessions)

    def session_ancestors(self, name):
        """Sessions visible from ``name``: parent chain and imported sessions, BFS order."""
        seen = []
        queue = list(self.sessions[name].dependencies) if name in self.sessions else []
        while queue:
            s = queue.pop(0)
            if s in seen or s not in self.sessions:
                continue
            seen.append(s)
            queue.extend(self.sessions[s].dependencies)
        return seen

    def resolve(self, name, importer):
        """Return the theory id ``name`` denotes inside ``importer``, or None for
        prover-provided theories. Raises UnresolvedImport otherwise."""
        owner = importer.session
        if "/" in name:
            base = posixpath.dirname(importer.path)
            path = posixpath.normpath(posixpath.join(base, name)) + ".thy"
            if path in self.by_path:
                return self.by_path[path]
            raise UnresolvedImport(name, importer.id)
        if name in EXTERNAL_THEORIES:
            return None
        visible = [owner] + self.session_ancestors(owner)
        if "." in name:
            # session-qualified name
            qual, base = name.rsplit(".", 1)
            if qual in self.sessions:
                tid = theory_id(qual, base)
                if qual in visible and tid in self.theories:
                    return tid
                raise UnresolvedImport(name, importer.id)
            if is_external_session(qual, self.external_sessions):
                return None
        for s in visible:
            tid = theory_id(s, name)
            if tid in self.theories:
                return tid
        raise UnresolvedImport(name, importer.id)


@dataclass(frozen=True)
class DependencyGraph:
    sessions: Mapping[str, SessionSpec]
    theories: Mapping[str, TheoryFile]
    theory_imports: Mapping[str, tuple[str, ...]]
    session_deps: Mapping[str, tuple[str, ...]]
    membership: Mapping[str, str]

    @property
    def session_nodes(self):
        return sorted(self.sessions)

    @property
    def theory_nodes(self):
        return sorted(self.theories)

    @property
    def theory_import_edges(self):
        return [(a, b) for a in sorted(self.theory_imports) for b in self.theory_imports[a]]

    @property
    def session_dep_edges(self):
        return [(a, b) for a in sorted(self.session_deps) for b in self.session_deps[a]]

    def unresolved_sessions(self, external_sessions=()):
        return sorted({(d, s) for s, ds in self.session_deps.items() for d in ds
                       if d not in self.sessions and not is_external_session(d, external_sessions)})

    def lemma(self, lemma_id):
        tid = lemma_id.rsplit(".", 1)[0]
        if tid in self.theories:
            for lem in self.theories[tid].lemmas:
                if lem.id == lemma_id:
                    return lem
        raise KeyError(lemma_id)

    def lemmas(self):
        for tid in sorted(self.theories):
            yield from self.theories[tid].lemmas

    def theory_closure(self, theory):
        """All transitive imports of ``theory`` in a deterministic topological order."""
        if theory not in self.theories:
            raise UnknownTheory(theory)
        nodes = set()
        stack = list(self.theory_imports.get(theory, ()))
        while stack:
            t = stack.pop()
            if t not in nodes:
                nodes.add(t)
                stack.extend(self.theory_imports.get(t, ()))
        return lexicographic_toposort({t: [d for d in self.theory_imports.get(t, ()) if d in nodes]
                                       for t in nodes})

    def session_closure(self, session):
        seen = set()
        stack = list(self.session_deps.get(session, ()))
        while stack:
            s = stack.pop()
            if s not in seen:
                seen.add(s)
                stack.extend(self.session_deps.get(s, ()))
        return lexicographic_toposort({s: list(self.session_deps.get(s, ())) for s in seen})


def lexicographic_toposort(deps):
    """Kahn's algorithm; among ready nodes the smallest id goes first.

    ``deps`` maps node -> nodes it depends on; dependencies come first in the result.
    """
    remaining = {n: set(ds) for n, ds in deps.items()}
    users = {n: [] for n in deps}
    for n, ds in deps.items():
        for d in ds:
            users.setdefault(d, []).append(n)
            remaining.setdefault(d, set())
    ready = [n for n, ds in remaining.items() if not ds]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for u in users.get(n, ()):
            remaining[u].discard(n)
            if not remaining[u]:
                heapq.heappush(ready, u)
    if len(order) != len(remaining):
        raise DependencyCycle(find_cycle({n: sorted(ds) for n, ds in deps.items()}))
    return order


def find_cycle(edges):
    """Return one cycle as a closed path [a, b, ..., a], or [] if acyclic.

    Nodes and successors are visited in sorted order so the result is stable.
    """
    WHITE, GREY, BLACK = 0, 1, 2
    color = {}
    for root in sorted(edges):
        if color.get(root, WHITE) != WHITE:
            continue
        path = [root]
        color[root] = GREY
        iters = [iter(sorted(edges.get(root, ())))]
        while iters:
            nxt = next(iters[-1], None)
            if nxt is None:
                color[path.pop()] = BLACK
                iters.pop()
                continue
            c = color.get(nxt, WHITE)
            if c == GREY:
                return path[path.index(nxt):] + [nxt]
            if c == WHITE:
                color[nxt] = GREY
                path.append(nxt)
                iters.append(iter(sorted(edges.get(nxt, ()))))
    return []


def build_dependency_graph(sessions, theories, external_sessions=()):
    sessions = list(sessions)
    theories = list(theories)
    by_name = {}
    for s in sessions:
        if s.name in by_name:
            raise CorpusError(f"duplicate session name {s.name!r}")
        by_name[s.name] = s
    # edges to sessions outside ``sessions`` are kept; see unresolved_sessions()
    session_deps = {s.name: s.dependencies for s in sessions}
    cycle = find_cycle(session_deps)
    if cycle:
        raise DependencyCycle(cycle)

    resolver = ImportResolver(sessions, theories, external_sessions)
    theory_imports = {}
    membership = {}
    for t in theories:
        if t.session not in by_name:
            raise UnresolvedSession(t.session, t.id)
        membership[t.id] = t.session
        resolved = []
        for name in t.imports:
            tid = resolver.resolve(name, t)
            if tid is not None and tid not in resolved:
                resolved.append(tid)
        if t.id in resolved:
            raise DependencyCycle([t.id, t.id])
        theory_imports[t.id] = tuple(resolved)
    cycle = find_cycle(theory_imports)
    if cycle:
        raise DependencyCycle(cycle)
    return DependencyGraph(
        sessions=MappingProxyType(dict(by_name)),
        theories=MappingProxyType({t.id: t for t in theories}),
        theory_imports=MappingProxyType(theory_imports),
        session_deps=MappingProxyType(session_deps),
        membership=MappingProxyType(membership),
    )


# ---------------------------------------------------------------------------
# manifest

@dataclass
class Corpus:
    root: Path
    sessions: list[SessionSpec]
    theories: list[TheoryFile]
    errors: list[tuple[str, str]] = field(default_factory=list)
    external_sessions: tuple[str, ...] = ()

    def graph(self):
        return build_dependency_graph(self.sessions, self.theories, self.external_sessions)

    def lemmas(self):
        for t in sorted(self.theories, key=lambda t: t.id):
            yield from t.lemmas

    def category_counts(self):
        counts = {c.value: 0 for c in Category}
        for lem in self.lemmas():
            counts[lem.category.value] += 1
        return counts


def _session_record(s):
    return {
        "record": "session",
        "name": s.name,
        "directory": s.directory,
        "parent": s.parent,
        "imported_sessions": list(s.imported_sessions),
        "entry_theories": list(s.entry_theories),
        "description": s.description,
        "extra_directives": [list(x) for x in s.extra_directives],
        "raw_stanza": s.raw_stanza,
    }


def write_manifest(corpus, path):
    """One JSON object per line; the first line is a header record."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        header = {"record": "manifest", "format_version": MANIFEST_FORMAT,
                  "corpus_root": relpath(Path(corpus.root).resolve(), path.parent.resolve()),
                  "external_sessions": list(corpus.external_sessions),
                  "counts": corpus.category_counts()}
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for s in sorted(corpus.sessions, key=lambda s: s.name):
            f.write(json.dumps(_session_record(s), sort_keys=True) + "\n")
        for t in sorted(corpus.theories, key=lambda t: t.id):
            rec = {"record": "theory", "id": t.id, "path": t.path, "imports": list(t.imports),
                   "digest": t.digest, "body_start": t.body_start, "body_end": t.body_end}
            f.write(json.dumps(rec, sort_keys=True) + "\n")
            for lem in t.lemmas:
                f.write(json.dumps({"record": "lemma", **lem.to_record()}, sort_keys=True) + "\n")
        for site, message in corpus.errors:
            f.write(json.dumps({"record": "error", "site": site, "message": message}, sort_keys=True) + "\n")


def read_manifest(path, corpus_root=None):
    """Load a manifest. Theory bodies are read back from the corpus tree and
    checked against the recorded digest; nothing is re-parsed."""
    header = None
    sessions, theory_recs, lemmas, errors = [], [], {}, []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("record")
            if kind == "manifest":
                header = rec
            elif kind == "session":
                rec["imported_sessions"] = tuple(rec["imported_sessions"])
                rec["entry_theories"] = tuple(rec["entry_theories"])
                rec["extra_directives"] = tuple(tuple(x) for x in rec["extra_directives"])
                sessions.append(SessionSpec(**rec))
            elif kind == "theory":
                theory_recs.append(rec)
            elif kind == "lemma":
                lem = Lemma.from_record(rec)
                lemmas.setdefault(lem.theory_id, []).append(lem)
            elif kind == "error":
                errors.append((rec["site"], rec["message"]))
    if header is None or header.get("format_version") != MANIFEST_FORMAT:
        raise CorpusError(f"{path}: not a manifest (format {MANIFEST_FORMAT})")
    # corpus_root is stored relative to the manifest's directory
    root = Path(corpus_root) if corpus_root else (Path(path).parent / header["corpus_root"]).resolve()
    theories = []
    for rec in theory_recs:
        body = (root / rec["path"]).read_text(encoding="utf-8")
        t = TheoryFile(id=rec["id"], path=rec["path"], imports=tuple(rec["imports"]), body=body,
                       lemmas=tuple(lemmas.get(rec["id"], ())),
                       body_start=rec["body_start"], body_end=rec["body_end"])
        if t.digest != rec["digest"]:
            raise CorpusError(f"{rec['path']} changed since the manifest was written")
        theories.append(t)
    return Corpus(root=root, sessions=sessions, theories=theories, errors=errors,
                  external_sessions=tuple(header.get("external_sessions", ())))


def relpath(path, start):
    return Path(os.path.relpath(path, start)).as_posix()


def with_lemmas(theory, lemmas):
    return replace(theory, lemmas=tuple(lemmas))
