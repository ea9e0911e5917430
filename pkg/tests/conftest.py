import json
from pathlib import Path

import pytest

from isoproof.corpus import BENCH_CATEGORIES, read_manifest, write_manifest
from isoproof.isolation import check_correctness, isolate
from isoproof.parsing import load_corpus
from isoproof.prover import ProverConfig, make_prover
from isoproof.synthetic import SyntheticParams, fixture_script, generate_corpus

REPO = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).resolve().parent / "fixtures"
COMMITTED_CORPUS = REPO / "corpus" / "synthetic"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory):
    """A fresh default synthetic corpus (seed 0), generated once per test session."""
    out = tmp_path_factory.mktemp("synthetic")
    generate_corpus(out, SyntheticParams())
    return out


@pytest.fixture(scope="session")
def corpus(synthetic_dir):
    return load_corpus(synthetic_dir)


@pytest.fixture(scope="session")
def graph(corpus):
    return corpus.graph()


@pytest.fixture(scope="session")
def workspace(tmp_path_factory, corpus):
    """Manifest, verified benches and chunk library for the synthetic corpus."""
    from isoproof.retrieval import build_chunks, save_library

    ws = tmp_path_factory.mktemp("workspace")
    write_manifest(corpus, ws / "manifest.jsonl")
    loaded = read_manifest(ws / "manifest.jsonl")
    g = loaded.graph()
    prover = make_prover(bench_prover_config(ws, loaded.root))
    for lem in loaded.lemmas():
        if lem.category in BENCH_CATEGORIES:
            check_correctness(isolate(g, lem, ws, loaded.root), prover)
    save_library(build_chunks(loaded.theories), ws / "chunks.jsonl")
    return ws


def bench_prover_config(ws, corpus_root, **kw):
    return ProverConfig(cache_dir=str(Path(ws) / "prover-cache"), session_dirs=[str(corpus_root)], **kw)


@pytest.fixture(scope="session")
def bench_lemmas(workspace):
    loaded = read_manifest(workspace / "manifest.jsonl")
    return [l for l in loaded.lemmas() if l.category in BENCH_CATEGORIES]


@pytest.fixture()
def run_config_file(workspace, bench_lemmas, tmp_path):
    """A TOML run config with a scripted endpoint over the synthetic corpus."""
    def make(extra="", script=None, timeout=5):
        if script is None:
            script, _ = fixture_script(bench_lemmas, seed=0)
        (tmp_path / "script.json").write_text(json.dumps(script), encoding="utf-8")
        text = f"""
[run]
manifest = "{workspace / 'manifest.jsonl'}"
workspace = "{workspace}"
runs_dir = "{tmp_path / 'runs'}"
seed = 0

[prover]
kind = "mock"
cache_dir = "{workspace / 'prover-cache'}"
timeout_seconds = {timeout}

[endpoint]
kind = "scripted"
script = "script.json"
model = "scripted"
{extra}
"""
        path = tmp_path / "run.toml"
        path.write_text(text, encoding="utf-8")
        return path
    return make


# one PASS/FAIL line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
