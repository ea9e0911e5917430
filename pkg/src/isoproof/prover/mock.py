"""Deterministic stand-in for an Isabelle session build.

Sessions are discovered from ROOT files exactly like the real tool would:
entry theories plus everything they import that lives in the session's own
directory tree. Every successfully checked theory is cached on disk under
``<cache_dir>/<session>.json`` keyed by a digest of its text and the keys of
its imports, so a rebuild only re-checks what changed downstream of an edit.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import posixpath
import threading
import time
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from filelock import FileLock

from ..corpus import EXTERNAL_THEORIES, is_external_session, lexicographic_toposort
from ..errors import CorpusError, DependencyCycle
from ..parsing import find_root_files, parse_root, parse_theory
from .base import Deadline, ProverConfig, Status, TimedOut, VerifyResult
from .checker import check_theory, normalize_scope

log = logging.getLogger(__name__)

CACHE_FORMAT = 1


class BuildFailure(Exception):
    pass


@dataclass
class _TheoryRecord:
    path: str
    name: str
    session: str
    key: str
    facts: dict  # name -> frozenset of tags
    imports: list  # absolute paths

    def to_json(self):
        return {"name": self.name, "session": self.session, "key": self.key,
                "facts": {k: sorted(v) for k, v in sorted(self.facts.items())},
                "imports": list(self.imports)}

    @classmethod
    def from_json(cls, path, d):
        return cls(path, d["name"], d["session"], d["key"],
                   {k: frozenset(v) for k, v in d["facts"].items()}, list(d["imports"]))


class MockProver:
    kind = "mock"

    def __init__(self, config: ProverConfig | None = None):
        self.config = config or ProverConfig()
        self.cache_dir = Path(self.config.cache_dir)
        self._guard = threading.Lock()
        self._locks = defaultdict(threading.RLock)

    # -- public API

    def build_session(self, root_dir, session):
        deadline = Deadline(self.config.timeout_seconds)
        counter = [0]
        try:
            registry = self._registry(root_dir)
            self._build(registry, session, deadline, counter, {}, ())
        except TimedOut:
            return VerifyResult(Status.TIMEOUT, f"Timeout after {self.config.timeout_seconds:g}s",
                                max(deadline.elapsed, self.config.timeout_seconds), counter[0])
        except BuildFailure as e:
            return VerifyResult(Status.FAILURE, str(e), deadline.elapsed, counter[0])
        return VerifyResult(Status.SUCCESS, "", deadline.elapsed, counter[0])

    # -- session registry

    def _registry(self, root_dir):
        registry = {}
        for base in [root_dir, *self.config.session_dirs]:
            base = Path(base).resolve()
            for rp in find_root_files(base):
                rel = rp.relative_to(base).as_posix()
                try:
                    rf = parse_root(rp.read_text(encoding="utf-8"), rel)
                except CorpusError as e:
                    raise BuildFailure(f"Bad ROOT file {rp}: {e}")
                for spec in rf.stanzas:
                    # first definition wins: the bench directory shadows the corpus
                    registry.setdefault(spec.name, (spec, base / spec.directory))
        return registry

    def _lock(self, session):
        with self._guard:
            lock = self._locks[session]
        return lock

    # -- building

    def _build(self, registry, session, deadline, counter, memo, chain):
        """Build ``session`` and its ancestors; returns {path: record} of everything visible."""
        if session in memo:
            return memo[session]
        if is_external_session(session):
            memo[session] = {}
            return memo[session]
        if session not in registry:
            raise BuildFailure(f'Undefined session: "{session}"')
        if session in chain:
            raise BuildFailure("Cyclic session dependency: " + " -> ".join(chain + (session,)))
        spec, directory = registry[session]
        visible = {}
        ancestors = []
        for dep in spec.dependencies:
            visible.update(self._build(registry, dep, deadline, counter, memo, chain + (session,)))
            ancestors.append(dep)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        cache_file = self.cache_dir / f"{session}.json"
        with self._lock(session), FileLock(str(cache_file) + ".lock"):
            own = self._build_own(spec, directory, visible, deadline, counter, cache_file)
        visible.update(own)
        memo[session] = visible
        return visible

    def _load_cache(self, cache_file):
        try:
            data = json.loads(cache_file.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            return {}
        if data.get("format") != CACHE_FORMAT:
            return {}
        return {p: _TheoryRecord.from_json(p, d) for p, d in data.get("theories", {}).items()}

    def _save_cache(self, cache_file, session, records):
        data = {"format": CACHE_FORMAT, "session": session,
                "theories": {p: r.to_json() for p, r in sorted(records.items())}}
        tmp = cache_file.with_suffix(".tmp")
        tmp.write_text(json.dumps(data, sort_keys=True), encoding="utf-8")
        os.replace(tmp, cache_file)

    def _build_own(self, spec, directory, visible, deadline, counter, cache_file):
        theories = self._discover(spec, directory, visible)
        deps = {p: [d for d in imps if d in theories] for p, (_, _, imps) in theories.items()}
        try:
            order = lexicographic_toposort(deps)
        except DependencyCycle as e:
            raise BuildFailure("Cyclic theory dependency: " + " -> ".join(
                posixpath.basename(p) for p in e.path))
        cached = self._load_cache(cache_file)
        done = {}
        records = dict(visible)
        try:
            for path in order:
                if deadline.expired():
                    raise TimedOut()
                name, text, imports = theories[path]
                h = hashlib.sha256(text.encode())
                for imp in imports:
                    if imp in records:
                        h.update(b"\0" + records[imp].key.encode())
                key = h.hexdigest()
                hit = cached.get(path)
                if hit is not None and hit.key == key:
                    done[path] = records[path] = hit
                    continue
                scope = self._scope(imports, records)
                counter[0] += 1
                result = check_theory(name, text, scope, deadline)
                if not result.ok:
                    raise BuildFailure(result.message)
                done[path] = records[path] = _TheoryRecord(path, name, spec.name, key,
                                                           dict(result.facts), list(imports))
        finally:
            # keep whatever succeeded, even when a later theory failed
            merged = {p: r for p, r in cached.items() if p in theories and p not in done}
            merged.update(done)
            self._save_cache(cache_file, spec.name, merged)
        return done

    @staticmethod
    def _scope(imports, records):
        scope = {}
        seen = set()
        stack = list(imports)
        while stack:
            p = stack.pop()
            if p in seen or p not in records:
                continue
            seen.add(p)
            scope.update(records[p].facts)
            stack.extend(records[p].imports)
        return normalize_scope(scope)

    def _discover(self, spec, directory, visible):
        """Map path -> (theory name, text, resolved import paths) for the session's own theories."""
        by_name = defaultdict(list)
        for rec in visible.values():
            by_name[(rec.session, rec.name)].append(rec.path)
        visible_sessions = {rec.session for rec in visible.values()}
        out = {}
        queue = [(name, str(directory), None) for name in spec.entry_theories]
        while queue:
            name, importer_dir, importer = queue.pop(0)
            path = self._locate(name, importer_dir, directory, visible, by_name, visible_sessions, importer)
            if path is None or path in visible or path in out:
                if importer is not None and path is not None:
                    out[importer][2].append(path)
                continue
            try:
                text = Path(path).read_text(encoding="utf-8")
                th = parse_theory(text, path=path)
            except OSError:
                raise BuildFailure(f'Bad theory import "{name}"')
            except CorpusError as e:
                raise BuildFailure(f"Outer syntax error: {e}")
            out[path] = (posixpath.basename(path)[:-4], text, [])
            if importer is not None:
                out[importer][2].append(path)
            queue += [(imp, posixpath.dirname(path), path) for imp in th.imports]
        return out

    @staticmethod
    def _locate(name, importer_dir, session_dir, visible, by_name, visible_sessions, importer):
        if name in EXTERNAL_THEORIES:
            return None
        where = f" (imported by {posixpath.basename(importer)})" if importer else ""
        if "/" in name:
            path = posixpath.normpath(posixpath.join(importer_dir, name)) + ".thy"
            if os.path.isfile(path):
                return path
            raise BuildFailure(f'Bad theory import "{name}"{where}')
        if "." in name:
            qual, base = name.rsplit(".", 1)
            if by_name.get((qual, base)):
                return by_name[(qual, base)][0]
            if is_external_session(qual):
                return None
            if qual not in visible_sessions:
                raise BuildFailure(f'Bad theory import "{name}"{where}: session {qual} not accessible')
            raise BuildFailure(f'Bad theory import "{name}"{where}')
        for d in (importer_dir, str(session_dir)):
            path = posixpath.normpath(posixpath.join(d, name)) + ".thy"
            if os.path.isfile(path):
                return path
        hits = sorted(p for (s, n), ps in by_name.items() if n == name for p in ps)
        if hits:
            return hits[0]
        raise BuildFailure(f'Bad theory import "{name}"{where}')


def mock_verify(theory, facts_in_scope, timeout_seconds=None):
    """Check a single theory text against ``facts_in_scope``.

    ``facts_in_scope`` maps fact names to their goal tags; a plain set of
    names is accepted too (those facts then cover no tags).
    """
    start = time.monotonic()
    deadline = Deadline(timeout_seconds) if timeout_seconds else None
    try:
        name = parse_theory(theory).id
    except CorpusError:
        name = "Scratch"
    try:
        result = check_theory(name, theory, normalize_scope(facts_in_scope), deadline)
    except TimedOut:
        return VerifyResult(Status.TIMEOUT, f"Timeout after {timeout_seconds:g}s",
                            max(time.monotonic() - start, timeout_seconds), 1)
    elapsed = time.monotonic() - start
    if result.ok:
        return VerifyResult(Status.SUCCESS, "", elapsed, 1)
    return VerifyResult(Status.FAILURE, result.message, elapsed, 1)
