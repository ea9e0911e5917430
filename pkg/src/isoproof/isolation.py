"""Lemma isolation: a dependency session holding everything before a lemma and
a tiny target session holding only the lemma, so a candidate proof can be
checked without rebuilding the corpus.

Workspace layout::

    <workspace>/benches/<lemma key>/ROOT
    <workspace>/benches/<lemma key>/<theory dir>/<T>_DEP.thy
    <workspace>/benches/<lemma key>/<theory dir>/<T>_TGT.thy
    <workspace>/benches/<lemma key>/bench.json

Closure theories are never copied: same-session imports of the truncated
theory are rewritten to relative paths that point back into the corpus.
"""

from __future__ import annotations

import json
import os
import posixpath
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import lexer
from .corpus import BENCH_CATEGORIES, ImportResolver, SessionSpec
from .errors import LemmaExcluded, MissingPlaceholder, SpliceCollision, TheoryNotInGraph
from .parsing import format_stanza

PLACEHOLDER = "(* PROOF STARTS RIGHT HERE *)"
UNCHECKED, VERIFIED, BROKEN = "unchecked", "verified", "broken"
BENCH_FILE = "bench.json"


@dataclass
class IsolatedBench:
    lemma_id: str
    key: str
    theory_id: str
    dep_session: SessionSpec
    dep_theory_name: str
    dep_theory_text: str
    target_session: SessionSpec
    target_theory_name: str
    target_theory_template: str
    groundtruth_proof: str
    workspace: Path  # the bench directory
    status: str = UNCHECKED
    reason: str = ""
    # closure theory ids the dependency session sees (for retrieval filtering)
    closure: list = field(default_factory=list)

    @property
    def theory_dir(self):
        return self.dep_session.directory

    @property
    def dep_path(self):
        return Path(self.workspace) / self.theory_dir / f"{self.dep_theory_name}.thy"

    @property
    def target_path(self):
        return Path(self.workspace) / self.theory_dir / f"{self.target_theory_name}.thy"

    @property
    def verified(self):
        return self.status == VERIFIED

    def to_json(self):
        d = asdict(self)
        d["workspace"] = str(self.workspace)
        for k in ("dep_session", "target_session"):
            s = getattr(self, k)
            d[k] = {"name": s.name, "directory": s.directory, "parent": s.parent,
                    "imported_sessions": list(s.imported_sessions),
                    "entry_theories": list(s.entry_theories), "description": s.description,
                    "extra_directives": [list(x) for x in s.extra_directives]}
        return d

    @classmethod
    def from_json(cls, d, workspace=None):
        d = dict(d)
        for k in ("dep_session", "target_session"):
            s = dict(d[k])
            s["imported_sessions"] = tuple(s["imported_sessions"])
            s["entry_theories"] = tuple(s["entry_theories"])
            s["extra_directives"] = tuple(tuple(x) for x in s["extra_directives"])
            d[k] = SessionSpec(**s)
        d["workspace"] = Path(workspace) if workspace is not None else Path(d["workspace"])
        return cls(**d)

    def save(self):
        path = Path(self.workspace) / BENCH_FILE
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, path)


def bench_dir(workspace, lemma):
    return Path(workspace) / "benches" / lemma.key


def load_bench(path):
    """Load a bench from its directory (or its bench.json)."""
    path = Path(path)
    if path.is_dir():
        path = path / BENCH_FILE
    return IsolatedBench.from_json(json.loads(path.read_text(encoding="utf-8")), path.parent)


def _rewrite_header(theory, resolver, graph, new_name, bench_theory_dir, corpus_root):
    """Rename the theory and point same-session imports back into the corpus."""
    text = theory.body
    sig = lexer.significant(lexer.tokenize(text[:theory.body_start]))
    pieces = []
    pos = 0
    collecting = False
    for i, t in enumerate(sig):
        if i == 1:
            pieces += [text[pos:t.start], new_name]
            pos = t.end
            continue
        if t.kind == lexer.IDENT and t.text == "imports":
            collecting = True
            continue
        if t.kind == lexer.IDENT and t.text in ("keywords", "abbrevs", "begin"):
            collecting = False
            continue
        if not collecting or t.kind not in (lexer.IDENT, lexer.STRING):
            continue
        name = lexer.unquote(t)
        tid = resolver.resolve(name, theory)
        if tid is None or graph.membership.get(tid) != theory.session:
            continue
        target = Path(corpus_root) / graph.theories[tid].path
        rel = os.path.relpath(target.with_suffix(""), bench_theory_dir)
        pieces += [text[pos:t.start], f'"{Path(rel).as_posix()}"']
        pos = t.end
    pieces.append(text[pos:theory.body_start])
    return "".join(pieces)


def isolate(graph, lemma, workspace, corpus_root, write=True):
    """Build the dependency/target session pair for ``lemma``."""
    if lemma.category not in BENCH_CATEGORIES:
        raise LemmaExcluded(f"{lemma.id} is {lemma.category.value}")
    if lemma.theory_id not in graph.theories:
        raise TheoryNotInGraph(lemma.theory_id)
    theory = graph.theories[lemma.theory_id]
    session = graph.sessions[theory.session]
    root = bench_dir(workspace, lemma)
    theory_dir = posixpath.dirname(theory.path) or "."
    bench_theory_dir = (root / theory_dir).resolve()
    resolver = ImportResolver(graph.sessions.values(), graph.theories.values())

    dep_name = f"{theory.name}_DEP"
    tgt_name = f"{theory.name}_TGT"
    header = _rewrite_header(theory, resolver, graph, dep_name, bench_theory_dir,
                             Path(corpus_root).resolve())
    prefix = theory.body[theory.body_start:lemma.offset]
    dep_text = header + prefix.rstrip() + "\n\nend\n"

    dep_session = SessionSpec(
        name=f"{session.name}_DEP_{lemma.key}", directory=theory_dir, parent=session.parent,
        imported_sessions=session.imported_sessions, entry_theories=(dep_name,),
        extra_directives=tuple(x for x in session.extra_directives if x[0] == "options"))
    target_session = SessionSpec(
        name=f"{session.name}_TGT_{lemma.key}", directory=theory_dir, parent=dep_session.name,
        imported_sessions=(), entry_theories=(tgt_name,))
    template = (f"theory {tgt_name}\n  imports \"{dep_session.name}.{dep_name}\"\nbegin\n\n"
                f"{lemma.spec_text}{PLACEHOLDER}\n\nend\n")
    bench = IsolatedBench(
        lemma_id=lemma.id, key=lemma.key, theory_id=theory.id, dep_session=dep_session,
        dep_theory_name=dep_name, dep_theory_text=dep_text, target_session=target_session,
        target_theory_name=tgt_name, target_theory_template=template,
        groundtruth_proof=lemma.proof_text, workspace=root,
        closure=list(graph.theory_closure(theory.id)))
    if write:
        write_bench(bench)
    return bench


def emit_root(bench):
    """ROOT text with the dependency stanza followed by the target stanza."""
    return format_stanza(bench.dep_session) + "\n" + format_stanza(bench.target_session)


def write_bench(bench):
    root = Path(bench.workspace)
    (root / bench.theory_dir).mkdir(parents=True, exist_ok=True)
    (root / "ROOT").write_text(emit_root(bench), encoding="utf-8")
    bench.dep_path.write_text(bench.dep_theory_text, encoding="utf-8")
    bench.target_path.write_text(bench.target_theory_template, encoding="utf-8")
    bench.save()


def splice_proof(bench, proof):
    template = bench.target_theory_template
    n = template.count(PLACEHOLDER)
    if n == 0:
        raise MissingPlaceholder(bench.lemma_id)
    if n > 1:
        raise SpliceCollision(f"{bench.lemma_id}: template holds {n} placeholders")
    text = template.replace(PLACEHOLDER, proof, 1)
    if PLACEHOLDER in text:
        raise SpliceCollision(f"{bench.lemma_id}: the proof contains the placeholder marker")
    return text


def verify_proof(bench, proof, prover):
    """Splice ``proof`` into the target theory and build the target session."""
    text = splice_proof(bench, proof)
    bench.target_path.parent.mkdir(parents=True, exist_ok=True)
    bench.target_path.write_text(text, encoding="utf-8")
    return prover.build_session(bench.workspace, bench.target_session.name)


def build_dependency(bench, prover):
    return prover.build_session(bench.workspace, bench.dep_session.name)


def check_correctness(bench, prover):
    """Verify the bench with its groundtruth proof; updates and persists the status."""
    if not bench.dep_path.exists():
        write_bench(bench)
    dep = build_dependency(bench, prover)
    if not dep.ok:
        bench.status, bench.reason = BROKEN, f"dependency session {dep.status.value}: {dep.message}"
    else:
        res = verify_proof(bench, bench.groundtruth_proof, prover)
        if res.ok:
            bench.status, bench.reason = VERIFIED, ""
        else:
            bench.status, bench.reason = BROKEN, f"target session {res.status.value}: {res.message}"
    # leave the template in place so the workspace always shows the unspliced bench
    bench.target_path.write_text(bench.target_theory_template, encoding="utf-8")
    bench.save()
    return bench.status
