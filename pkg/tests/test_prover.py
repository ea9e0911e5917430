import shutil
import time

import pytest

from isoproof.errors import ConfigError, ExecutableNotFound
from isoproof.parsing import load_corpus
from isoproof.prover import ProverConfig, make_prover
from isoproof.prover.base import Status
from isoproof.prover.external import ExternalProver, first_error
from isoproof.prover.mock import mock_verify

SCOPE = {"lem_a": {"foo", "bar"}, "lem_b": {"baz"}}


def one(lemma_line):
    return f"theory T imports Main begin\n{lemma_line}\nend\n"


def test_verify_success():
    assert mock_verify(one('lemma t: "foo bar" by lem_a'), SCOPE).ok
    assert mock_verify(one('lemma t: "foo bar baz" by (simp add: lem_a lem_b)'), SCOPE).ok


def test_verify_undefined_fact():
    r = mock_verify(one('lemma t: "foo bar" by (simp add: ghost_fact)'), SCOPE)
    assert r.status is Status.FAILURE
    assert r.message.startswith('Undefined fact: "ghost_fact"')


def test_verify_unfinished():
    r = mock_verify(one('lemma t: "foo bar baz" by (simp add: lem_a)'), SCOPE)
    assert r.status is Status.FAILURE
    assert r.message.startswith("Failed to finish proof")
    assert "baz" in r.message


def test_verify_syntax():
    r = mock_verify(one('lemma t: "foo bar" by (simp add:'), SCOPE)
    assert r.message.startswith("Outer syntax error")


def test_verify_undefined_method():
    r = mock_verify(one('lemma t: "foo bar" by (frobnicate lem_a)'), SCOPE)
    assert r.message.startswith("Undefined method")


def test_verify_is_deterministic():
    th = one('lemma t: "foo bar baz" by (simp add: lem_a)')
    assert len({mock_verify(th, SCOPE).message for _ in range(5)}) == 1


def test_timeout_is_enforced():
    start = time.monotonic()
    r = mock_verify(one('lemma t: "foo bar" by (mock_sleep 30)'), SCOPE, timeout_seconds=1)
    wall = time.monotonic() - start
    assert r.status is Status.TIMEOUT
    assert 1.0 <= wall < 3.0


def test_prover_config_validation():
    with pytest.raises(ConfigError):
        ProverConfig(kind="nope")
    with pytest.raises(ConfigError):
        ProverConfig(timeout_seconds=0)


def test_external_prover_missing_executable(tmp_path):
    with pytest.raises(ExecutableNotFound):
        make_prover(ProverConfig(kind="external", executable=str(tmp_path / "no-isabelle")))


def test_external_prover_command_line(tmp_path):
    exe = tmp_path / "isabelle"
    exe.write_text("#!/bin/sh\necho '*** Undefined fact: \"x\"'\necho '*** At command \"by\"'\nexit 1\n")
    exe.chmod(0o755)
    p = ExternalProver(ProverConfig(kind="external", executable=str(exe), session_dirs=["/lib"],
                                    cache_dir=str(tmp_path)))
    assert p.command("/bench", "S_TGT") == [str(exe), "build", "-b", "-d", "/bench", "-d", "/lib", "S_TGT"]
    r = p.build_session(tmp_path, "S_TGT")
    assert r.status is Status.FAILURE
    assert r.message == 'Undefined fact: "x"\nAt command "by"'


def test_external_prover_timeout(tmp_path):
    exe = tmp_path / "isabelle"
    exe.write_text("#!/bin/sh\nsleep 30\n")
    exe.chmod(0o755)
    p = ExternalProver(ProverConfig(kind="external", executable=str(exe), timeout_seconds=1,
                                    cache_dir=str(tmp_path)))
    start = time.monotonic()
    r = p.build_session(tmp_path, "S")
    assert r.status is Status.TIMEOUT
    assert time.monotonic() - start < 3.0


def test_first_error_fallback():
    assert first_error("Building S ...\nS FAILED\n") == "S FAILED"
    assert first_error("") == "build failed"


# ---------------------------------------------------------------------------
# session builds and the theory cache

@pytest.fixture()
def corpus_copy(tmp_path, synthetic_dir):
    root = tmp_path / "corpus"
    shutil.copytree(synthetic_dir, root)
    return root


def dependents(graph, tid):
    return {t for t in graph.theory_nodes if t == tid or tid in graph.theory_closure(t)}


def test_session_build_and_cache_soundness(tmp_path, corpus_copy):
    corpus = load_corpus(corpus_copy)
    graph = corpus.graph()
    prover = make_prover(ProverConfig(cache_dir=str(tmp_path / "cache")))
    top = "SynRefine"
    cold = prover.build_session(corpus_copy, top)
    assert cold.ok, cold.message
    assert cold.rebuilt_theories == len(graph.theory_nodes)
    warm = prover.build_session(corpus_copy, top)
    assert warm.ok and warm.rebuilt_theories == 0

    victim = "SynInvs.Invs_Objects"
    path = corpus_copy / graph.theories[victim].path
    path.write_text(path.read_text().replace("begin\n", "begin\n(* edited *)\n", 1))
    again = prover.build_session(corpus_copy, top)
    assert again.ok
    assert again.rebuilt_theories == len(dependents(graph, victim))


def test_session_build_reports_failure(tmp_path, corpus_copy):
    corpus = load_corpus(corpus_copy)
    lem = next(l for l in corpus.lemmas() if l.theory_id.startswith("SynLib.") and l.terminator == "by")
    path = corpus_copy / corpus.graph().theories[lem.theory_id].path
    text = path.read_text()
    broken = text.replace(lem.proof_text, " by (simp add: no_such_fact)\n", 1)
    assert broken != text
    path.write_text(broken)
    r = make_prover(ProverConfig(cache_dir=str(tmp_path / "cache"))).build_session(corpus_copy, "SynLib")
    assert r.status is Status.FAILURE
    assert 'Undefined fact: "no_such_fact"' in r.message


def test_unknown_session(tmp_path, corpus_copy):
    r = make_prover(ProverConfig(cache_dir=str(tmp_path / "cache"))).build_session(corpus_copy, "Nope")
    assert r.status is Status.FAILURE
