import json
import socket

import pytest

from conftest import ONTOLOGY, iri
from layers.KB_Service import ServiceClient, ServiceError, pattern_from_obj, pattern_to_obj, serve
from layers.RDF_Terms import RDF_TYPE, RDFS_SUBCLASSOF, Term
from layers.Triple_Store import TriplePattern, Var
from layers.Wire_Codec import WireDecodeError
from utils.tools import parse_address


@pytest.fixture
def service(kb_store):
    handle = serve(kb_store)
    client = ServiceClient(handle.address, name="kb")
    yield handle, client
    client.close()
    handle.close()


def raw_request(address, payload):
    with socket.create_connection(parse_address(address), timeout=5) as sock:
        f = sock.makefile("rwb")
        f.write(payload + b"\n")
        f.flush()
        return json.loads(f.readline())


def test_subclass_question_answered_with_closure(service):
    _, client = service
    rows = client.query([TriplePattern(Var("c"), Term.iri(RDFS_SUBCLASSOF), Term.iri(ONTOLOGY + "MusicalArtist"))])
    assert {r["c"].value.rsplit("/", 1)[-1] for r in rows} == {"MusicalArtist", "Singer", "Rapper"}


def test_join_over_two_patterns(service):
    _, client = service
    rows = client.query([
        TriplePattern(Var("e"), Term.iri(RDF_TYPE), Term.iri(ONTOLOGY + "MusicalArtist")),
        TriplePattern(Var("e"), Term.iri(ONTOLOGY + "birthPlace"), Var("city")),
    ])
    assert {(r["e"], r["city"]) for r in rows} == {(iri("alice"), iri("lyon")), (iri("bob"), iri("paris"))}


def test_empty_pattern_list_gives_one_empty_row(service):
    _, client = service
    assert client.query([]) == [{}]


def test_requested_variables_only(service):
    handle, client = service
    rows = client.query([TriplePattern(Var("e"), Term.iri(ONTOLOGY + "birthPlace"), Var("city"))], names=["e"])
    assert all(set(r) == {"e"} for r in rows)
    assert handle.requests == 1


@pytest.mark.parametrize("payload", [b"not json", b'{"op": "drop"}', b'{"op": "query", "bgp": [{"s": 1}]}'])
def test_malformed_requests_get_bad_request(service, payload):
    handle, _ = service
    reply = raw_request(handle.address, payload)
    assert reply["op"] == "error"
    assert reply["code"] == "bad-request"


def test_unreachable_service_raises():
    client = ServiceClient("127.0.0.1:1", name="gone", timeout=1.0)
    with pytest.raises(ServiceError, match="gone"):
        client.query([])


def test_pattern_objects_keep_variables():
    pattern = TriplePattern(Var("s"), Term.iri(RDF_TYPE), Term.literal("x", lang="en"))
    assert pattern_from_obj(pattern_to_obj(pattern)) == pattern
    with pytest.raises(WireDecodeError):
        pattern_from_obj({"s": {"k": "var", "v": "s"}})
