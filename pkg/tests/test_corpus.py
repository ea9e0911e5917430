import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoproof.corpus import (Category, SessionSpec, TheoryFile, build_dependency_graph, find_cycle,
                             lexicographic_toposort, read_manifest, write_manifest)
from isoproof.errors import CorpusError, DependencyCycle, UnknownTheory, UnresolvedImport
from isoproof.parsing import parse_root


def session(name, parent="HOL", imported=(), directory=None):
    return SessionSpec(name=name, directory=directory or name.lower(), parent=parent,
                       imported_sessions=tuple(imported), entry_theories=("X",))


def thy(sess, name, imports=()):
    body = f"theory {name}\n  imports {' '.join(imports) or 'Main'}\nbegin\nend\n"
    return TheoryFile(id=f"{sess}.{name}", path=f"{sess.lower()}/{name}.thy",
                      imports=tuple(imports) or ("Main",), body=body, lemmas=())


def test_base_refine_session_edges(fixtures_dir):
    (spec,) = parse_root((fixtures_dir / "base_refine.ROOT").read_text()).stanzas
    g = build_dependency_graph([spec], [])
    assert g.session_dep_edges == [("BaseRefine", "AInvs"), ("BaseRefine", "Lib"), ("BaseRefine", "CorresK")]
    assert [d for d, _ in g.unresolved_sessions()] == ["AInvs", "CorresK", "Lib"]


def test_diamond_closure_order():
    s = [session("S")]
    ts = [thy("S", "A"), thy("S", "C", ["A"]), thy("S", "B", ["A"]), thy("S", "D", ["C", "B"])]
    g = build_dependency_graph(s, ts)
    assert g.theory_closure("S.D") == ["S.A", "S.B", "S.C"]
    assert g.theory_closure("S.A") == []
    with pytest.raises(UnknownTheory):
        g.theory_closure("S.Nope")


def test_cross_session_import():
    s = [session("Lo"), session("Hi", parent="Lo")]
    ts = [thy("Lo", "Base"), thy("Hi", "Top", ["Base"]), thy("Hi", "Top2", ["Lo.Base"])]
    g = build_dependency_graph(s, ts)
    assert g.theory_imports["Hi.Top"] == ("Lo.Base",)
    assert g.theory_imports["Hi.Top2"] == ("Lo.Base",)


def test_unresolved_import():
    with pytest.raises(UnresolvedImport):
        build_dependency_graph([session("S")], [thy("S", "A", ["Missing"])])


def test_theory_cycle_detected():
    ts = [thy("S", "A", ["B"]), thy("S", "B", ["C"]), thy("S", "C", ["A"])]
    with pytest.raises(DependencyCycle) as err:
        build_dependency_graph([session("S")], ts)
    assert "S.A" in str(err.value)


def test_session_cycle_detected():
    with pytest.raises(DependencyCycle):
        build_dependency_graph([session("A", parent="B"), session("B", parent="A")], [])


def test_find_cycle_examples():
    assert find_cycle({"a": ["b"], "b": []}) == []
    assert find_cycle({"a": ["b"], "b": ["a"]}) == ["a", "b", "a"]


@st.composite
def dags(draw):
    n = draw(st.integers(1, 12))
    nodes = [f"n{i:02d}" for i in range(n)]
    perm = draw(st.permutations(nodes))
    # edges only from later to earlier positions in ``perm`` keep the graph acyclic
    deps = {}
    for i, node in enumerate(perm):
        deps[node] = draw(st.lists(st.sampled_from(perm[:i]), unique=True)) if i else []
    return deps


@settings(max_examples=100, deadline=None)
@given(dags())
def test_toposort_respects_edges_and_is_lexicographic(deps):
    order = lexicographic_toposort(deps)
    assert sorted(order) == sorted(deps)
    pos = {n: i for i, n in enumerate(order)}
    for n, ds in deps.items():
        assert all(pos[d] < pos[n] for d in ds)
    # oracle for the tie rule: repeatedly take the smallest ready node
    left, expected = dict(deps), []
    while left:
        ready = min(n for n, ds in left.items() if all(d in expected for d in ds))
        expected.append(ready)
        del left[ready]
    assert order == expected


def test_toposort_cycle():
    with pytest.raises(DependencyCycle):
        lexicographic_toposort({"a": ["b"], "b": ["a"]})


def test_synthetic_graph_shape(corpus, graph):
    assert graph.session_nodes == sorted(s.name for s in corpus.sessions)
    for tid, imps in graph.theory_imports.items():
        for d in imps:
            assert d in graph.theory_closure(tid)
    # every closure is closed under imports
    for tid in graph.theory_nodes:
        closure = set(graph.theory_closure(tid))
        for t in closure:
            assert set(graph.theory_imports[t]) <= closure


def test_manifest_round_trip(tmp_path, corpus):
    path = tmp_path / "m" / "manifest.jsonl"
    write_manifest(corpus, path)
    loaded = read_manifest(path)
    assert loaded.root == corpus.root.resolve()
    assert sorted(loaded.sessions, key=lambda s: s.name) == sorted(corpus.sessions, key=lambda s: s.name)
    assert [t.id for t in loaded.theories] == sorted(t.id for t in corpus.theories)
    assert list(loaded.lemmas()) == list(corpus.lemmas())
    assert loaded.category_counts() == corpus.category_counts()
    # writing again gives the same bytes
    again = tmp_path / "m" / "again.jsonl"
    write_manifest(loaded, again)
    assert again.read_bytes() == path.read_bytes()


def test_manifest_detects_edited_theory(tmp_path, corpus, synthetic_dir):
    import shutil
    root = tmp_path / "copy"
    shutil.copytree(synthetic_dir, root)
    from isoproof.parsing import load_corpus
    c = load_corpus(root)
    write_manifest(c, tmp_path / "manifest.jsonl")
    victim = root / c.theories[0].path
    victim.write_text(victim.read_text() + "\n", encoding="utf-8")
    with pytest.raises(CorpusError):
        read_manifest(tmp_path / "manifest.jsonl")


def test_lemma_record_round_trip(corpus):
    from isoproof.corpus import Lemma
    lems = list(corpus.lemmas())
    for lem in random.Random(0).sample(lems, 20):
        assert Lemma.from_record(lem.to_record()) == lem
    assert {l.category for l in lems} == set(Category)
