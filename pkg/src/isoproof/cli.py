"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 corpus error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .config import load_config
from .corpus import BENCH_CATEGORIES, Category, read_manifest, write_manifest
from .errors import AuthError, ConfigError, CorpusError, IsoproofError
from .isolation import VERIFIED, check_correctness, isolate
from .parsing import find_root_files, load_corpus
from .prover import make_prover
from .prover.base import ProverConfig

log = logging.getLogger("isoproof")

EXIT_OK, EXIT_USAGE, EXIT_CORPUS, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def shown(path, workspace=None):
    """Paths are printed relative to the workspace when they live inside it."""
    path = Path(path).resolve()
    base = Path(workspace).resolve() if workspace else Path.cwd()
    try:
        return path.relative_to(base).as_posix() or "."
    except ValueError:
        return os.path.relpath(path, base)


def _table(rows, header):
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    fmt = lambda r: "  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w)
                              for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in rows])


# ---------------------------------------------------------------------------
# ingest

def cmd_ingest(args):
    root = Path(args.corpus)
    if not root.is_dir() or not find_root_files(root):
        raise CorpusError(f"{root}: no ROOT file found")
    corpus = load_corpus(root)
    out = Path(args.out)
    write_manifest(corpus, out)
    counts = corpus.category_counts()
    total = sum(counts.values())
    for site, message in corpus.errors:
        print(f"warning: {site}: {message}", file=sys.stderr)
    rows = [[c.value, counts[c.value]] for c in Category] + [["total", total]]
    print(f"{len(corpus.sessions)} sessions, {len(corpus.theories)} theories")
    print(_table(rows, ["Category", "Extracted"]))
    # ingest has no --workspace; the manifest directory plays that role
    print(f"manifest: {shown(out, out.parent)}")
    if total == 0:
        raise CorpusError("no lemmas extracted")
    if corpus.errors:
        print(f"warning: {len(corpus.errors)} file(s) had problems; the manifest is partial", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# isolate

def _prover_config(args, corpus_root, workspace):
    if args.config:
        pc = load_config(args.config).prover
    else:
        pc = ProverConfig(cache_dir=str(Path(workspace) / "prover-cache"))
    dirs = list(pc.session_dirs)
    if str(Path(corpus_root).resolve()) not in dirs:
        dirs.append(str(Path(corpus_root).resolve()))
    pc.session_dirs = dirs
    if getattr(args, "timeout", None):
        pc.timeout_seconds = float(args.timeout)
    return pc


def cmd_isolate(args):
    corpus = read_manifest(args.manifest)
    graph = corpus.graph()
    workspace = Path(args.workspace)
    lemmas = {l.id: l for l in corpus.lemmas()}
    if args.all:
        targets = [l for l in lemmas.values() if l.category in BENCH_CATEGORIES]
    else:
        missing = [i for i in args.lemma if i not in lemmas]
        if missing:
            raise UsageError(f"unknown lemma id(s): {', '.join(missing)}")
        targets = [lemmas[i] for i in args.lemma]
        excluded = [l.id for l in targets if l.category not in BENCH_CATEGORIES]
        if excluded:
            raise UsageError(f"excluded lemma(s) cannot be isolated: {', '.join(excluded)}")
    pc = _prover_config(args, corpus.root, workspace)
    prover = make_prover(pc)
    benches = [isolate(graph, l, workspace, corpus.root) for l in targets]

    def check(b):
        try:
            return check_correctness(b, prover)
        except IsoproofError as e:  # a broken bench never aborts the batch
            b.status, b.reason = "broken", f"{type(e).__name__}: {e}"
            b.save()
            return b.status

    with ThreadPoolExecutor(max_workers=max(1, pc.max_workers)) as pool:
        statuses = list(pool.map(check, benches))
    summary = {}
    for lem, bench, status in zip(targets, benches, statuses):
        row = summary.setdefault(lem.category.value, {"extracted": 0, "verified": 0, "broken": 0})
        row["extracted"] += 1
        row["verified" if status == VERIFIED else "broken"] += 1
        if status != VERIFIED:
            print(f"broken: {lem.id}: {bench.reason.splitlines()[0] if bench.reason else ''}", file=sys.stderr)
    record = {"benches": {b.lemma_id: {"status": b.status, "dir": shown(b.workspace, workspace)}
                          for b in benches}, "summary": summary}
    (workspace / "isolation.json").write_text(json.dumps(record, indent=1, sort_keys=True) + "\n",
                                              encoding="utf-8")
    order = [c.value for c in BENCH_CATEGORIES if c.value in summary]
    rows = [[c, summary[c]["extracted"], summary[c]["verified"], summary[c]["broken"]] for c in order]
    rows.append(["total", sum(r[1] for r in rows), sum(r[2] for r in rows), sum(r[3] for r in rows)])
    print(_table(rows, ["Category", "Isolated", "Correctly verified", "Broken"]))
    print(f"benches: {shown(workspace / 'benches', workspace)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# chunks

def cmd_chunks(args):
    from .retrieval import build_chunks, save_library
    corpus = read_manifest(args.manifest)
    lib = build_chunks(corpus.theories)
    out = Path(args.out) if args.out else Path(args.workspace) / "chunks.jsonl"
    save_library(lib, out)
    print(f"{len(lib)} chunks from {len(corpus.theories)} theories -> {shown(out, args.workspace)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluation

def _eval_config(args):
    overrides = {}
    if getattr(args, "augment", None):
        names = [a.strip() for a in args.augment.split(",") if a.strip()]
        bad = [a for a in names if a not in ("similar", "dependency", "fixing")]
        if bad:
            raise UsageError(f"unknown augmentation(s): {', '.join(bad)}")
        for a in names:
            overrides[f"augment.{a}"] = True
    if getattr(args, "try_again", False):
        overrides["augment.try_again"] = True
    if getattr(args, "dependency_on_d", False):
        overrides["augment.dependency_on_d"] = True
    if getattr(args, "k", None):
        overrides["sampling.k"] = args.k
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = args.seed
    return load_config(args.config, overrides).validate()


def cmd_bootstrap(args):
    from .evaluation.run import bootstrap, prepare
    cfg = _eval_config(args)
    setup = prepare(cfg)
    entries, path = bootstrap(setup, force=args.force)
    rows = [[cat, len(es), sum(e["failed_proof"] is not None for e in es)] for cat, es in sorted(entries.items())]
    print(_table(rows, ["Category", "Demonstrations", "With a failed first round"]))
    print(f"fixing demonstrations: {shown(path, cfg.workspace)}")
    return EXIT_OK


def cmd_eval(args):
    from .evaluation.endpoint import ChatEndpoint
    from .evaluation.run import run_eval
    cfg = _eval_config(args)
    if cfg.endpoint.kind == "openai":
        try:
            ChatEndpoint(cfg.endpoint)._key()
        except AuthError as e:
            # a missing credential is a configuration problem, reported before any trial runs
            raise ConfigError(str(e))
    run_dir, report = run_eval(cfg, run_id=args.run_id, limit=args.limit)
    print(report.render_text(), end="")
    print(f"run: {shown(run_dir, cfg.workspace)}")
    return EXIT_OK


def cmd_report(args):
    from .evaluation.run import write_report
    run_dir = Path(args.run_dir)
    if not (run_dir / "config.json").is_file():
        raise UsageError(f"{run_dir} is not a run directory")
    report = write_report(run_dir)
    print(report.render_text(), end="")
    return EXIT_OK


def cmd_gen_synthetic(args):
    from .synthetic import SyntheticParams, generate_corpus
    try:
        params = SyntheticParams(sessions=args.sessions, theories_per_session=args.theories,
                                 lemmas_per_theory=args.lemmas, seed=args.seed)
    except ValueError as e:
        raise UsageError(str(e))
    golden = generate_corpus(args.out, params)
    counts = golden["counts"]
    print(_table([[c, counts.get(c, 0)] for c in ("P1", "P2", "P3", "D", "excluded")],
                 ["Category", "Generated"]))
    print(f"corpus: {shown(args.out)}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="isoproof", description="Isabelle proof benchmark construction and LLM evaluation.")
    p.add_argument("--version", action="version", version=f"isoproof {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="parse a corpus and write the lemma manifest")
    s.add_argument("corpus")
    s.add_argument("--out", required=True, help="manifest path (JSON lines)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("isolate", help="build and check isolated benches")
    s.add_argument("--manifest", required=True)
    s.add_argument("--workspace", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--all", action="store_true")
    g.add_argument("--lemma", action="append", metavar="ID")
    s.add_argument("--config", help="run config whose [prover] section is used")
    s.add_argument("--timeout", type=float, help="prover timeout in seconds")
    s.set_defaults(func=cmd_isolate)

    s = sub.add_parser("chunks", help="build the retrieval chunk library")
    s.add_argument("--manifest", required=True)
    s.add_argument("--workspace", default=".")
    s.add_argument("--out", help="default: <workspace>/chunks.jsonl")
    s.set_defaults(func=cmd_chunks)

    def eval_options(s):
        s.add_argument("--config", required=True)
        s.add_argument("--augment", help="comma-separated: similar,dependency,fixing")
        s.add_argument("--try-again", action="store_true", help="second round without the error message")
        s.add_argument("--dependency-on-d", action="store_true", help="also retrieve dependencies for D")
        s.add_argument("--k", type=int)
        s.add_argument("--seed", type=int)

    s = sub.add_parser("bootstrap-fixing-demos", help="collect first-round errors on demonstration lemmas")
    eval_options(s)
    s.add_argument("--force", action="store_true", help="recompute even when cached")
    s.set_defaults(func=cmd_bootstrap)

    s = sub.add_parser("eval", help="run an evaluation")
    eval_options(s)
    s.add_argument("--run-id", help="resume or name a run (default: timestamp-seed-digest)")
    s.add_argument("--limit", type=int, help="evaluate at most N more lemmas")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="rebuild a run's report from its trial log")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("gen-synthetic", help="write the synthetic corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sessions", type=int, default=4)
    s.add_argument("--theories", type=int, default=4, help="theories per session")
    s.add_argument("--lemmas", type=int, default=7, help="lemmas per theory")
    s.set_defaults(func=cmd_gen_synthetic)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CorpusError as e:
        print(f"corpus error: {e}", file=sys.stderr)
        return EXIT_CORPUS
    except (IsoproofError, OSError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
