import filecmp

import pytest

from isoproof.corpus import Category
from isoproof.parsing import load_corpus
from isoproof.synthetic import SyntheticParams, fixture_script, generate_corpus, load_golden
from conftest import COMMITTED_CORPUS


def tree(root):
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file())


def test_size_contract(corpus, synthetic_dir):
    golden = load_golden(synthetic_dir)
    counts = corpus.category_counts()
    bench = sum(counts[c] for c in ("P1", "P2", "P3", "D"))
    assert bench >= 100
    assert min(counts[c] for c in ("P1", "P2", "P3", "D")) >= 10
    assert counts == {**{c.value: 0 for c in Category}, **golden["counts"]}


def test_generation_is_byte_identical_per_seed(tmp_path, synthetic_dir):
    generate_corpus(tmp_path / "again", SyntheticParams())
    assert tree(tmp_path / "again") == tree(synthetic_dir)
    for rel in tree(synthetic_dir):
        assert (tmp_path / "again" / rel).read_bytes() == (synthetic_dir / rel).read_bytes(), rel


def test_other_seed_differs(tmp_path, synthetic_dir):
    generate_corpus(tmp_path / "s1", SyntheticParams(seed=1))
    assert (tmp_path / "s1" / "golden.json").read_text() != (synthetic_dir / "golden.json").read_text()


def test_committed_corpus_is_current(synthetic_dir):
    assert tree(COMMITTED_CORPUS) == tree(synthetic_dir)
    _, mismatch, errors = filecmp.cmpfiles(COMMITTED_CORPUS, synthetic_dir, tree(synthetic_dir), shallow=False)
    assert mismatch == [] and errors == []


def test_golden_matches_parser(corpus, synthetic_dir):
    golden = {g["id"]: g for g in load_golden(synthetic_dir)["lemmas"]}
    parsed = {l.id: l for l in corpus.lemmas()}
    assert sorted(golden) == sorted(parsed)
    for lid, g in golden.items():
        lem = parsed[lid]
        assert (lem.category.value, lem.style.value, lem.proof_line_count, lem.in_locale, lem.terminator) == \
            (g["category"], g["style"], g["proof_line_count"], g["in_locale"], g["terminator"]), lid
        assert list(lem.attributes) == g["attributes"]


def test_all_theories_parse_cleanly(corpus):
    assert corpus.errors == []


@pytest.mark.parametrize("bad", [dict(sessions=0), dict(theories_per_session=0), dict(sessions=99)])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        SyntheticParams(**bad)


def test_fixture_script_is_deterministic(bench_lemmas):
    a = fixture_script(bench_lemmas, seed=0)
    b = fixture_script(bench_lemmas, seed=0)
    assert a == b
    script, outcomes = a
    assert len(script) == len(outcomes) > 0
    assert {"groundtruth", "undefined_then_fixed", "sorry", "too_long"} <= set(outcomes.values())


def test_small_corpus(tmp_path):
    generate_corpus(tmp_path, SyntheticParams(sessions=2, theories_per_session=2, lemmas_per_theory=3))
    c = load_corpus(tmp_path)
    assert c.errors == []
    assert len(c.sessions) == 2
    c.graph()
