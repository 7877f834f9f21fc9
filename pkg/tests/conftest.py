import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from layers.RDF_Terms import XSD_DECIMAL, GraphEvent, Term, Triple  # noqa: E402
from layers.Triple_Store import TripleStore, load_kb  # noqa: E402

EX = "http://example.org/"
VOCAB = "http://dscep.example.org/vocab#"
ONTOLOGY = "http://dscep.example.org/kb/ontology/"
PREFIXES = (
    "PREFIX rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#>\n"
    "PREFIX rdfs: <http://www.w3.org/2000/01/rdf-schema#>\n"
    f"PREFIX ex: <{EX}>\n"
    f"PREFIX vocab: <{VOCAB}>\n"
    f"PREFIX dbo: <{ONTOLOGY}>\n"
)

KB_TEXT = """\
<http://dscep.example.org/kb/ontology/Singer> <http://www.w3.org/2000/01/rdf-schema#subClassOf> <http://dscep.example.org/kb/ontology/MusicalArtist> .
<http://dscep.example.org/kb/ontology/Rapper> <http://www.w3.org/2000/01/rdf-schema#subClassOf> <http://dscep.example.org/kb/ontology/Singer> .
<http://example.org/alice> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://dscep.example.org/kb/ontology/Singer> .
<http://example.org/bob> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://dscep.example.org/kb/ontology/Rapper> .
<http://example.org/carol> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://dscep.example.org/kb/ontology/TelevisionShow> .
<http://example.org/bob_alias> <http://dscep.example.org/kb/ontology/birthPlace> <http://example.org/paris> .
<http://example.org/bob_alias> <http://www.w3.org/2002/07/owl#sameAs> <http://example.org/bob> .
<http://example.org/alice> <http://dscep.example.org/kb/ontology/birthPlace> <http://example.org/lyon> .
<http://example.org/paris> <http://dscep.example.org/kb/ontology/country> <http://example.org/france> .
<http://example.org/lyon> <http://dscep.example.org/kb/ontology/country> <http://example.org/france> .
<http://example.org/france> <http://dscep.example.org/kb/ontology/countryCode> "FR" .
"""


def iri(local):
    return Term.iri(EX + local)


def v(local):
    return Term.iri(VOCAB + local)


def dec(text):
    return Term.literal(text, XSD_DECIMAL)


def tweet(i, entities, pos="1.0", neg="0.5", ts=None):
    """One small tweet event mentioning ``entities`` (local names under ex:)."""
    t = iri(f"tweet_{i}")
    triples = [
        Triple(t, Term.iri("http://www.w3.org/1999/02/22-rdf-syntax-ns#type"), v("Tweet")),
        Triple(t, v("hasSentimentPos"), dec(pos)),
        Triple(t, v("hasSentimentNeg"), dec(neg)),
    ]
    triples.extend(Triple(t, v("mentions"), iri(e)) for e in entities)
    return GraphEvent.stamped(f"g{i}", triples, 1000 + i if ts is None else ts)


@pytest.fixture
def kb_lines():
    return KB_TEXT.splitlines(keepends=True)


@pytest.fixture
def kb_store(kb_lines):
    return load_kb(kb_lines)


@pytest.fixture
def raw_kb_store(kb_lines):
    return TripleStore.load(kb_lines)


@pytest.fixture
def tweets():
    return [
        tweet(0, ["alice", "carol"], "3.0", "1.0"),
        tweet(1, ["bob"], "0.5", "2.0"),
        tweet(2, ["bob", "alice"], "2.5", "2.5"),
        tweet(3, ["carol"], "4.0", "0.0"),
    ]
