import numpy as np
import pytest

from conftest import EX, ONTOLOGY, PREFIXES, iri, tweet
from layers.Algebra import Dataset, evaluate
from layers.Query_Parser import parse_query
from layers.RDF_Terms import RDF_TYPE, Term, Triple
from layers.Triple_Store import (
    SAMEAS,
    SUBCLASSOF,
    AccessTracker,
    KbLoadError,
    TriplePattern,
    TripleStore,
    Var,
    extract_used_kb,
)
from scep.window import Window

TYPE = Term.iri(RDF_TYPE)


def reachability(n, edges):
    reach = np.eye(n, dtype=bool)
    for a, b in edges:
        reach[a, b] = True
    for _ in range(n):
        step = (reach.astype(int) @ reach.astype(int)) > 0
        if (step == reach).all():
            break
        reach = step
    return reach


@pytest.mark.parametrize("dag", [True, False])
@pytest.mark.parametrize("seed", range(50))
def test_subclass_closure_matches_reachability(seed, dag):
    rng = np.random.default_rng(seed)
    n = 12
    edges = {(int(a), int(b)) for a, b in rng.integers(0, n, size=(20, 2)) if a != b}
    if dag:
        edges = {(min(a, b), max(a, b)) for a, b in edges}
    classes = [iri(f"c{i}") for i in range(n)]
    store = TripleStore.from_triples([Triple(classes[a], SUBCLASSOF, classes[b]) for a, b in edges])
    reach = reachability(n, edges)
    for i in {x for e in edges for x in e}:
        up = {classes[j] for j in range(n) if reach[i, j]}
        down = {classes[j] for j in range(n) if reach[j, i]}
        assert store.superclasses_of(classes[i]) == up
        assert store.subclasses_of(classes[i]) == down


def union_find(pairs):
    parent = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            x = parent[x]
        return x

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    return {x: find(x) for x in list(parent)}


@pytest.mark.parametrize("seed", range(50))
def test_sameas_representative_is_least_member(seed):
    rng = np.random.default_rng(seed)
    nodes = [iri(f"n{i:02d}") for i in range(15)]
    pairs = [(nodes[a], nodes[b]) for a, b in rng.integers(0, 15, size=(10, 2))]
    store = TripleStore.from_triples([Triple(a, SAMEAS, b) for a, b in pairs])
    assert store.sameas_rep == union_find(pairs)


def test_canonicalize_collapses_aliases(raw_kb_store, kb_store):
    assert len(raw_kb_store) == 11
    assert len(kb_store) == 10
    born = kb_store.match(TriplePattern(Var("a"), Term.iri(ONTOLOGY + "birthPlace"), iri("paris")))
    assert [t.s for t in born] == [iri("bob")]
    assert not kb_store.has_predicate(SAMEAS)


def test_duplicate_lines_are_one_triple():
    line = f"<{EX}s> <{EX}p> <{EX}o> .\n"
    assert len(TripleStore.load([line, line, "# comment\n"])) == 1


def test_malformed_line_reports_line_number():
    lines = [f"<{EX}s> <{EX}p> <{EX}o> .\n", "not a triple\n"]
    with pytest.raises(KbLoadError) as info:
        TripleStore.load(lines)
    assert info.value.lineno == 2


def test_load_keeps_only_requested_predicates(kb_lines):
    store = TripleStore.load(kb_lines, predicates={ONTOLOGY + "country"})
    assert store.predicates() == {Term.iri(ONTOLOGY + "country")}
    assert len(store) == 2


def test_kb_blank_nodes_are_renamed():
    store = TripleStore.load([f"_:b0 <{EX}p> <{EX}o> .\n"])
    assert store.triples()[0].s == Term.blank("kb-b0")


def test_match_uses_every_index(kb_store):
    singer = Term.iri(ONTOLOGY + "Singer")
    assert len(kb_store.match(TriplePattern(iri("alice"), Var("p"), Var("o")))) == 2
    assert len(kb_store.match(TriplePattern(Var("s"), TYPE, Var("o")))) == 3
    into_singer = kb_store.match(TriplePattern(Var("s"), Var("p"), singer))
    assert {t.s for t in into_singer} == {iri("alice"), Term.iri(ONTOLOGY + "Rapper")}
    assert len(kb_store.match(TriplePattern(Var("s"), Var("p"), Var("o")))) == len(kb_store)


def test_repeated_variable_must_agree():
    store = TripleStore.from_triples([Triple(iri("a"), iri("p"), iri("a")), Triple(iri("a"), iri("p"), iri("b"))])
    assert store.match(TriplePattern(Var("x"), iri("p"), Var("x"))) == [Triple(iri("a"), iri("p"), iri("a"))]


def test_entailed_types_follow_subclass_closure(kb_store):
    artist = Term.iri(ONTOLOGY + "MusicalArtist")
    typed = kb_store.match_entailed(TriplePattern(Var("x"), TYPE, artist))
    assert {t.s for t in typed} == {iri("alice"), iri("bob")}
    bob = {t.o for t in kb_store.match_entailed(TriplePattern(iri("bob"), TYPE, Var("c")))}
    assert bob == {Term.iri(ONTOLOGY + c) for c in ("Rapper", "Singer", "MusicalArtist")}


def test_tracker_counts_kb_lookups(kb_store):
    tracker = AccessTracker()
    kb_store.match(TriplePattern(Var("s"), TYPE, Var("o")), tracker)
    assert tracker.hits == 3
    assert len(tracker.touched) == 3


def test_used_kb_reproduces_results(kb_store, tweets):
    q = parse_query(PREFIXES + """
        CONSTRUCT { ?t vocab:mentionsArtist ?e }
        WHERE { ?t vocab:mentions ?e . ?e rdf:type/rdfs:subClassOf* dbo:MusicalArtist }
    """)
    windows = [Window.of(0, tweets[:2]), Window.of(1, tweets[2:])]
    used = extract_used_kb(kb_store, q, windows)
    assert len(used) < len(kb_store)
    for window in windows:
        ws = TripleStore(window.triples(), closures=False)
        full = evaluate(q, Dataset(ws, kb_store))
        again = evaluate(q, Dataset(TripleStore(window.triples(), closures=False), used))
        assert {frozenset(g) for g in full} == {frozenset(g) for g in again}
    assert sum(len(evaluate(q, Dataset(TripleStore(w.triples(), closures=False), used))) for w in windows) == 4


def test_to_ntriples_reloads_to_same_store(kb_store):
    again = TripleStore.load([line + "\n" for line in kb_store.to_ntriples()])
    assert set(again.triples()) == set(kb_store.triples())


def test_unknown_tweet_entity_has_no_type(kb_store):
    event = tweet(9, ["nobody"])
    window = Window.of(0, [event])
    q = parse_query(PREFIXES + "SELECT ?e WHERE { ?t vocab:mentions ?e . ?e a dbo:MusicalArtist }")
    assert evaluate(q, Dataset(TripleStore(window.triples(), closures=False), kb_store)) == []
