import json

from layers.RDF_Terms import (
    BLANK,
    IRI,
    LITERAL,
    GraphEvent,
    Term,
    TermError,
    TimestampedTriple,
    Triple,
)

_KIND_TO_WIRE = {IRI: "iri", BLANK: "bnode", LITERAL: "lit"}
_WIRE_TO_KIND = {v: k for k, v in _KIND_TO_WIRE.items()}

EOS = {"op": "eos"}


class WireDecodeError(ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


def dumps(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def loads(payload):
    try:
        if isinstance(payload, (bytes, bytearray)):
            payload = payload.decode("utf-8")
        return json.loads(payload)
    except UnicodeDecodeError as e:
        raise WireDecodeError(f"payload is not UTF-8: {e}") from e
    except json.JSONDecodeError as e:
        raise WireDecodeError(f"payload is not JSON: {e}") from e


def term_to_obj(term: Term) -> dict:
    obj = {"k": _KIND_TO_WIRE[term.kind], "v": term.value}
    if term.datatype:
        obj["dt"] = term.datatype
    if term.lang:
        obj["lang"] = term.lang
    return obj


def term_from_obj(obj, field="term") -> Term:
    if not isinstance(obj, dict):
        raise WireDecodeError(f"field {field!r} is not a term object", field)
    for key in ("k", "v"):
        if key not in obj:
            raise WireDecodeError(f"missing required field {key!r} in {field!r}", key)
    kind = _WIRE_TO_KIND.get(obj["k"])
    if kind is None:
        raise WireDecodeError(f"unknown term kind {obj['k']!r} in {field!r}", "k")
    try:
        return Term(kind, obj["v"], obj.get("dt"), obj.get("lang"))
    except TermError as e:
        raise WireDecodeError(f"invalid term in {field!r}: {e}", field) from e


def triple_to_obj(triple: Triple) -> dict:
    return {"s": term_to_obj(triple.s), "p": term_to_obj(triple.p), "o": term_to_obj(triple.o)}


def triple_from_obj(obj) -> Triple:
    if not isinstance(obj, dict):
        raise WireDecodeError("triple is not an object")
    for key in ("s", "p", "o"):
        if key not in obj:
            raise WireDecodeError(f"missing required field {key!r}", key)
    try:
        return Triple(*(term_from_obj(obj[k], k) for k in ("s", "p", "o")))
    except TermError as e:
        raise WireDecodeError(f"invalid triple: {e}") from e


def _ts_from_obj(obj, key="ts"):
    if key not in obj:
        raise WireDecodeError(f"missing required field {key!r}", key)
    ts = obj[key]
    if not isinstance(ts, int) or isinstance(ts, bool) or ts < 0:
        raise WireDecodeError(f"field {key!r} must be a non-negative integer", key)
    return ts


def event_to_obj(event) -> dict:
    if isinstance(event, TimestampedTriple):
        obj = triple_to_obj(event.triple)
        obj["ts"] = event.ts
        return obj
    return {
        "graph": event.graph_id,
        "ets": event.event_ts,
        "triples": [event_to_obj(t) for t in event.triples],
    }


def event_from_obj(obj):
    if not isinstance(obj, dict):
        raise WireDecodeError("event is not an object")
    if "graph" not in obj:
        return TimestampedTriple(triple_from_obj(obj), _ts_from_obj(obj))
    triples = obj.get("triples")
    if not isinstance(triples, list):
        raise WireDecodeError("missing required field 'triples'", "triples")
    members = tuple(TimestampedTriple(triple_from_obj(t), _ts_from_obj(t)) for t in triples)
    if not members:
        raise WireDecodeError(f"graph event {obj['graph']!r} has no triples", "triples")
    high = max(t.ts for t in members)
    if "ets" in obj and obj["ets"] != high:
        raise WireDecodeError(
            f"event_ts mismatch in graph {obj['graph']!r}: carried {obj['ets']}, max triple ts {high}",
            "ets",
        )
    return GraphEvent(str(obj["graph"]), members, high)


def encode_event(event) -> bytes:
    return dumps(event_to_obj(event))


def decode_event(payload):
    """Decode a TimestampedTriple or GraphEvent from its wire bytes."""
    return event_from_obj(loads(payload))


def is_eos(obj) -> bool:
    return isinstance(obj, dict) and obj.get("op") == "eos"


def encode_eos(**extra) -> bytes:
    return dumps({**EOS, **extra})
