from decimal import Decimal

import numpy as np
import pytest

from layers.NTriples import NTriplesParseError, iter_ntriples, parse_ntriple, serialize_ntriple
from layers.RDF_Terms import (
    XSD_DECIMAL,
    XSD_DOUBLE,
    XSD_INTEGER,
    GraphEvent,
    Term,
    TermError,
    TimestampedTriple,
    Triple,
    number_literal,
    numeric_value,
)
from layers.Wire_Codec import (
    WireDecodeError,
    decode_event,
    encode_eos,
    encode_event,
    event_from_obj,
    is_eos,
    loads,
)

S = Term.iri("http://example.org/s")
P = Term.iri("http://example.org/p")


def test_explicit_xsd_string_equals_plain_literal():
    plain = Term.literal("x")
    typed = Term.literal("x", "http://www.w3.org/2001/XMLSchema#string")
    assert plain == typed
    assert typed.datatype is None


def test_term_order_is_iri_blank_literal():
    terms = [Term.literal("a"), Term.blank("b0"), Term.iri("http://z.org/")]
    assert [t.kind for t in sorted(terms)] == ["iri", "blank", "literal"]


def test_literal_subject_rejected():
    with pytest.raises(TermError):
        Triple(Term.literal("x"), P, S)


def test_literal_with_datatype_and_language_rejected():
    with pytest.raises(TermError):
        Term.literal("x", XSD_INTEGER, "en")


def test_numeric_values():
    assert numeric_value(Term.literal("42", XSD_INTEGER)) == 42
    assert numeric_value(Term.literal("2.5", XSD_DECIMAL)) == Decimal("2.5")
    assert numeric_value(Term.literal("x")) is None
    assert numeric_value(S) is None


def test_number_literal_decimal_is_normalized():
    term = number_literal(Decimal("2.50"))
    assert term == Term.literal("2.5", XSD_DECIMAL)
    assert number_literal(3) == Term.literal("3", XSD_INTEGER)
    assert number_literal(0.5).datatype == XSD_DOUBLE


def test_graph_event_ts_is_max_triple_ts():
    event = GraphEvent("g", (TimestampedTriple(Triple(S, P, S), 5), TimestampedTriple(Triple(S, P, P), 9)))
    assert event.event_ts == 9
    assert len(event) == 2


def test_graph_event_ts_mismatch_rejected():
    with pytest.raises(TermError, match="event_ts mismatch"):
        GraphEvent("g", (TimestampedTriple(Triple(S, P, S), 5),), 7)


def test_empty_graph_event_rejected():
    with pytest.raises(TermError):
        GraphEvent("g", ())


# ---- N-Triples ----

def test_ntriple_with_escapes_and_language():
    t = parse_ntriple('<http://example.org/s> <http://example.org/p> "a\\"b\\n\\u00e9"@en .\n')
    assert t.o.value == 'a"b\né'
    assert t.o.lang == "en"
    assert parse_ntriple(serialize_ntriple(t)) == t


def test_ntriple_serializer_escapes_quotes_and_line_breaks():
    t = Triple(S, P, Term.literal('tab\there "q" back\\slash\r\n'))
    line = serialize_ntriple(t)
    assert '\\"q\\"' in line and "\\\\slash" in line and "\\r\\n" in line
    assert "\n" not in line
    assert parse_ntriple(line) == t


def test_ntriple_typed_literal_and_blank_subject():
    t = parse_ntriple('_:b1 <http://example.org/p> "7"^^<http://www.w3.org/2001/XMLSchema#integer> .')
    assert t.s == Term.blank("b1")
    assert numeric_value(t.o) == 7


def test_ntriple_error_reports_byte_offset():
    with pytest.raises(NTriplesParseError) as info:
        parse_ntriple('<http://example.org/s> <http://example.org/p> "unterminated .')
    assert info.value.offset == 46
    assert "at byte offset 46" in str(info.value)


def test_ntriple_offset_counts_utf8_bytes():
    with pytest.raises(NTriplesParseError) as info:
        parse_ntriple('<http://example.org/é> <http://example.org/p> <http://example.org/o> junk')
    assert info.value.offset == len('<http://example.org/é> <http://example.org/p> <http://example.org/o> '.encode())


def test_iter_ntriples_skips_comments_and_blank_lines():
    lines = ["# header\n", "\n", "<http://a.org/s> <http://a.org/p> <http://a.org/o> .\n"]
    assert [n for n, _ in iter_ntriples(lines)] == [3]


# ---- wire format ----

def test_wire_event_round_trip():
    event = GraphEvent.stamped("g1", [Triple(S, P, Term.literal("1.5", XSD_DECIMAL)), Triple(S, P, Term.blank("x"))], 12)
    assert decode_event(encode_event(event)) == event
    single = TimestampedTriple(Triple(S, P, Term.literal("hi", lang="en")), 3)
    assert decode_event(encode_event(single)) == single


def test_wire_missing_ts_names_the_field():
    obj = {"s": {"k": "iri", "v": S.value}, "p": {"k": "iri", "v": P.value}, "o": {"k": "lit", "v": "x"}}
    with pytest.raises(WireDecodeError) as info:
        event_from_obj(obj)
    assert info.value.field == "ts"


def test_wire_event_ts_mismatch():
    obj = loads(encode_event(GraphEvent.stamped("g", [Triple(S, P, S)], 4)))
    obj["ets"] = 5
    with pytest.raises(WireDecodeError, match="event_ts mismatch") as info:
        event_from_obj(obj)
    assert info.value.field == "ets"


def test_wire_rejects_non_json():
    with pytest.raises(WireDecodeError):
        decode_event(b"{not json")


def test_eos_marker_carries_extra_fields():
    obj = loads(encode_eos(windows=3))
    assert is_eos(obj)
    assert obj["windows"] == 3
    assert not is_eos({"graph": "g"})


@pytest.mark.parametrize("label", ["a b", "x.", ".x", "", "a/b"])
def test_bad_blank_node_labels_rejected(label):
    with pytest.raises(TermError):
        Term.blank(label)


def test_blank_node_label_may_contain_inner_dots_and_dashes():
    assert Term.blank("a.b-c").value == "a.b-c"


def test_iri_with_angle_bracket_rejected():
    with pytest.raises(TermError):
        Term.iri("http://example.org/a>b")


def test_wire_rejects_invalid_utf8():
    with pytest.raises(WireDecodeError, match="UTF-8"):
        loads(b'{"graph": "\xff"}')


_CHARS = list('abcXYZ019 "\\\t\r\néü€')
_LANGS = ["en", "de", "pt-br"]
_DATATYPES = [XSD_INTEGER, XSD_DECIMAL, "http://example.org/custom"]


def random_term(rng, position):
    kind = rng.integers(0, 3 if position == "o" else 2) if position != "p" else 0
    if kind == 0:
        return Term.iri(f"http://example.org/{position}{int(rng.integers(0, 10**6))}")
    if kind == 1:
        return Term.blank(f"b{int(rng.integers(0, 1000))}.x-{int(rng.integers(0, 9))}")
    text = "".join(rng.choice(_CHARS, size=int(rng.integers(0, 12))))
    flavour = rng.integers(0, 3)
    if flavour == 1:
        return Term.literal(text, lang=str(rng.choice(_LANGS)))
    if flavour == 2:
        datatype = str(rng.choice(_DATATYPES))
        if datatype == XSD_INTEGER:
            text = str(int(rng.integers(-1000, 1000)))
        elif datatype == XSD_DECIMAL:
            text = f"{int(rng.integers(0, 100))}.{int(rng.integers(1, 10))}"
        return Term.literal(text, datatype)
    return Term.literal(text)


def test_ntriples_line_reads_back_as_the_same_triple():
    rng = np.random.default_rng(7)
    for _ in range(500):
        t = Triple(random_term(rng, "s"), random_term(rng, "p"), random_term(rng, "o"))
        line = serialize_ntriple(t)
        assert "\n" not in line
        assert parse_ntriple(line + "\n") == t
