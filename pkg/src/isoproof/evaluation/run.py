"""End-to-end evaluation runs.

A run directory ``<runs_dir>/<run id>/`` holds:

* ``config.json``: the provenance record of the run config (no credentials),
* ``trials.jsonl``: one TrialRecord per line, each lemma closed by a
  ``lemma_done`` line so an interrupted run resumes at lemma granularity,
* ``report.json`` and ``report.txt``: the aggregated tables,
* ``timing.json``: wall-clock aggregates (kept apart so reports stay
  byte-identical across repeated runs).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, replace
from pathlib import Path

from ..corpus import Category, read_manifest
from ..errors import ConfigError
from ..isolation import VERIFIED, bench_dir, load_bench
from ..prover import make_prover
from ..retrieval import dependency_augment, dependency_sources, load_library, similar_augment
from .endpoint import make_endpoint
from .engine import EvalContext, TrialRecord, bootstrap_fixing_demos, evaluate_lemma
from .prompts import Demonstration, instruction, select_demonstrations
from .report import build_report

log = logging.getLogger(__name__)

TRIALS = "trials.jsonl"
LEMMA_DONE = "lemma_done"


@dataclass
class EvalSetup:
    config: object
    corpus: object
    graph: object
    benches: dict  # lemma id -> IsolatedBench (verified only)
    lemmas: dict  # lemma id -> Lemma
    demos: dict  # category -> list of Lemma
    eval_set: list  # Lemma, sorted by id
    library: object = None


def run_id_for(cfg, now=None):
    stamp = time.strftime("%Y%m%d-%H%M%S", time.localtime(now))
    return f"{stamp}-s{cfg.seed}-{cfg.digest()}"


def prepare(cfg):
    """Load the manifest, the verified benches, and split demonstrations from the evaluation set."""
    corpus = read_manifest(cfg.manifest)
    graph = corpus.graph()
    lemmas, benches = {}, {}
    pools = {c: [] for c in cfg.categories}
    for lem in corpus.lemmas():
        if lem.category.value not in pools:
            continue
        path = bench_dir(cfg.workspace, lem)
        if not (path / "bench.json").is_file():
            continue
        bench = load_bench(path)
        if bench.status != VERIFIED:
            continue
        lemmas[lem.id], benches[lem.id] = lem, bench
        pools[lem.category.value].append(lem)
    demos, rest = select_demonstrations(pools, cfg.seed)
    eval_set = sorted((l for cat in cfg.categories for l in rest[cat]), key=lambda l: l.id)
    library = None
    if cfg.augment.similar or cfg.augment.dependency:
        library = load_library(cfg.chunk_library)
    return EvalSetup(cfg, corpus, graph, benches, lemmas, demos, eval_set, library)


def uses_dependency(cfg, lemma):
    return cfg.augment.dependency and (lemma.category != Category.D or cfg.augment.dependency_on_d)


def retrieval_blocks(setup, lemma):
    """Augmentation blocks shown before ``lemma``'s statement, plus dependency statistics."""
    cfg = setup.config
    parts, stats = [], {"located": 0, "skipped": 0}
    if cfg.augment.similar:
        parts.append(similar_augment(setup.library, lemma))
    if uses_dependency(cfg, lemma):
        bench = setup.benches[lemma.id]
        src = dependency_sources(setup.library, bench, lemma)
        stats = {"located": len(src.located), "skipped": len(src.skipped)}
        dep = dependency_augment(setup.library, setup.graph, bench, lemma)
        if dep:
            parts.append(dep)
    return "\n\n".join(parts), stats


# ---------------------------------------------------------------------------
# fixing demonstrations cache

def fixing_cache_path(cfg):
    ident = {"endpoint": cfg.endpoint.describe(), "seed": cfg.seed,
             "categories": list(cfg.categories), "sampling": cfg.sampling.to_record()}
    digest = hashlib.sha256(json.dumps(ident, sort_keys=True).encode()).hexdigest()[:12]
    return Path(cfg.workspace) / "fixing_demos" / f"{digest}.json"


def bootstrap(setup, prover=None, endpoint=None, force=False):
    """Run (or load) the fixing-demonstration bootstrap for this configuration."""
    cfg = setup.config
    path = fixing_cache_path(cfg)
    if path.is_file() and not force:
        return json.loads(path.read_text(encoding="utf-8")), path
    prover = prover or make_prover(_prover_config(setup))
    endpoint = endpoint or make_endpoint(cfg.endpoint)
    result = bootstrap_fixing_demos(setup.demos, setup.benches, instruction(()), prover, endpoint,
                                    cfg.sampling)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, json.dumps(result, indent=1, sort_keys=True) + "\n")
    return result, path


def demonstrations(setup, fixing_entries=None):
    """Demonstration exchanges per category, with augmentation blocks and fixing rounds attached."""
    cfg = setup.config
    out = {}
    for cat, lems in setup.demos.items():
        extra = {e["lemma_id"]: e for e in (fixing_entries or {}).get(cat, [])}
        ds = []
        for lem in lems:
            blocks, _ = retrieval_blocks(setup, lem)
            d = Demonstration(lem.id, lem.statement, lem.proof_text.strip("\n"), blocks)
            e = extra.get(lem.id)
            if e and e.get("failed_proof") is not None:
                d.failed_proof = e["failed_proof"]
                d.error = e["error"] if cfg.augment.fixing else None
            ds.append(d)
        out[cat] = ds
    return out


def _prover_config(setup):
    pc = setup.config.prover
    dirs = list(pc.session_dirs)
    root = str(Path(setup.corpus.root).resolve())
    if root not in dirs:
        dirs.append(root)
    return replace(pc, session_dirs=dirs)


# ---------------------------------------------------------------------------
# run log

def _atomic_write(path, text):
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def read_trials(run_dir):
    """(completed lemma ids -> retrieval stats, records of completed lemmas).

    Records of a lemma without its ``lemma_done`` line, and a torn last line,
    are ignored.
    """
    path = Path(run_dir) / TRIALS
    done, pending = {}, {}
    if not path.is_file():
        return done, []
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            try:
                d = json.loads(line)
            except ValueError:
                continue
            if d.get("record") == LEMMA_DONE:
                done[d["lemma_id"]] = d.get("retrieval", {})
                records += pending.pop(d["lemma_id"], [])
            elif d.get("record") == "trial":
                pending.setdefault(d["lemma_id"], []).append(TrialRecord.from_record(d))
    return done, records


class TrialLog:
    """Single writer for ``trials.jsonl``; compacts away unfinished lemmas on open."""

    def __init__(self, run_dir):
        self.path = Path(run_dir) / TRIALS
        self.done, records = read_trials(run_dir)
        lines = []
        by_lemma = {}
        for r in records:
            by_lemma.setdefault(r.lemma_id, []).append(r)
        for lemma_id, stats in self.done.items():
            lines += [json.dumps({"record": "trial", **r.to_record()}, sort_keys=True)
                      for r in by_lemma.get(lemma_id, [])]
            lines.append(json.dumps({"record": LEMMA_DONE, "lemma_id": lemma_id, "retrieval": stats},
                                    sort_keys=True))
        _atomic_write(self.path, "".join(l + "\n" for l in lines))
        self._f = open(self.path, "a", encoding="utf-8")
        self._lock = threading.Lock()

    def append(self, lemma_id, records, stats):
        text = "".join(json.dumps({"record": "trial", **r.to_record()}, sort_keys=True) + "\n"
                       for r in records)
        text += json.dumps({"record": LEMMA_DONE, "lemma_id": lemma_id, "retrieval": stats},
                           sort_keys=True) + "\n"
        with self._lock:
            self._f.write(text)
            self._f.flush()
            os.fsync(self._f.fileno())
            self.done[lemma_id] = stats

    def close(self):
        self._f.close()


def write_report(run_dir, config_record=None):
    """Rebuild ``report.json``/``report.txt`` from the run directory alone."""
    run_dir = Path(run_dir)
    if config_record is None:
        config_record = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
    done, records = read_trials(run_dir)
    located = sum(s.get("located", 0) for s in done.values())
    skipped = sum(s.get("skipped", 0) for s in done.values())
    retrieval = {"located": located, "skipped": skipped} if "dependency" in config_record["augmentations"] else {}
    report = build_report(records, config_record["k"], config=config_record, retrieval=retrieval,
                          categories=config_record["categories"])
    _atomic_write(run_dir / "report.json", report.dumps())
    _atomic_write(run_dir / "report.txt", report.render_text())
    return report


def run_eval(cfg, run_id=None, limit=None, endpoint=None, prover=None, progress=None):
    """Evaluate every lemma of the evaluation set not yet finished in the run directory.

    ``limit`` caps how many new lemmas are evaluated in this invocation.
    Returns (run directory, report).
    """
    t0 = time.monotonic()
    setup = prepare(cfg)
    run_id = run_id or run_id_for(cfg)
    run_dir = Path(cfg.runs_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    config_record = cfg.describe()
    cfg_path = run_dir / "config.json"
    if cfg_path.is_file():
        previous = json.loads(cfg_path.read_text(encoding="utf-8"))
        if previous != config_record:
            raise ConfigError(f"run {run_id} was started with a different configuration")
    else:
        _atomic_write(cfg_path, json.dumps(config_record, indent=2, sort_keys=True) + "\n")

    prover = prover or make_prover(_prover_config(setup))
    endpoint = endpoint or make_endpoint(cfg.endpoint)
    fixing_entries = None
    if cfg.augment.fixing or cfg.augment.try_again:
        fixing_entries, _ = bootstrap(setup, prover, endpoint)
    ctx = EvalContext(instruction(cfg.augment.enabled()), demonstrations(setup, fixing_entries),
                      cfg.sampling, frozenset(cfg.augment.enabled()), cfg.short_circuit)

    trial_log = TrialLog(run_dir)
    todo = [l for l in setup.eval_set if l.id not in trial_log.done]
    if limit is not None:
        todo = todo[:limit]
    log.info("run %s: %d lemmas to evaluate (%d already done)", run_id, len(todo), len(trial_log.done))

    def work(lem):
        start = time.monotonic()
        blocks, stats = retrieval_blocks(setup, lem)
        recs = evaluate_lemma(setup.benches[lem.id], lem, cfg.k, None, prover, endpoint, ctx, blocks)
        return lem, recs, stats, time.monotonic() - start

    per_lemma, prover_time, n_trials = [], 0.0, 0
    try:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(work, lem) for lem in todo]
            for fut in as_completed(futures):
                lem, recs, stats, elapsed = fut.result()
                trial_log.append(lem.id, recs, stats)
                per_lemma.append(elapsed)
                n_trials += len(recs)
                prover_time += sum(r.verify.elapsed_seconds for r in recs if r.verify is not None)
                if progress:
                    progress(lem, recs)
    finally:
        trial_log.close()

    report = write_report(run_dir, config_record)
    timing = {"wall_seconds": round(time.monotonic() - t0, 3), "lemmas_this_invocation": len(per_lemma),
              "trials_this_invocation": n_trials,
              "mean_lemma_seconds": round(sum(per_lemma) / len(per_lemma), 4) if per_lemma else 0.0,
              "prover_seconds": round(prover_time, 3)}
    _atomic_write(run_dir / "timing.json", json.dumps(timing, indent=2, sort_keys=True) + "\n")
    return run_dir, report
