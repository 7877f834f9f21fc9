import functools
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional, Tuple, Union

from rdflib import Literal, URIRef
from rdflib.namespace import OWL, RDF, RDFS, XSD
from rdflib.plugins.parsers.ntriples import r_nodeid

IRI = "iri"
BLANK = "blank"
LITERAL = "literal"

_KIND_RANK = {IRI: 0, BLANK: 1, LITERAL: 2}
_IRI_FORBIDDEN = frozenset('<>"{}|^`\\')

XSD_STRING = str(XSD.string)
XSD_INTEGER = str(XSD.integer)
XSD_DECIMAL = str(XSD.decimal)
XSD_DOUBLE = str(XSD.double)
XSD_BOOLEAN = str(XSD.boolean)

RDF_TYPE = str(RDF.type)
RDFS_SUBCLASSOF = str(RDFS.subClassOf)
OWL_SAMEAS = str(OWL.sameAs)

NUMERIC_DATATYPES = frozenset(
    str(XSD[name])
    for name in (
        "integer", "decimal", "double", "float", "int", "long", "short", "byte",
        "nonNegativeInteger", "positiveInteger", "negativeInteger", "nonPositiveInteger",
        "unsignedInt", "unsignedLong", "unsignedShort", "unsignedByte",
    )
)


class TermError(ValueError):
    pass


@functools.total_ordering
@dataclass(frozen=True)
class Term:
    """
    An RDF term: IRI, blank node or literal.

    Literals without datatype and language are xsd:string; an explicit
    xsd:string datatype is folded into that form so both spellings compare equal.
    """

    kind: str
    value: str
    datatype: Optional[str] = None
    lang: Optional[str] = None

    def __post_init__(self):
        if self.kind not in _KIND_RANK:
            raise TermError(f"unknown term kind {self.kind!r}")
        if self.kind == IRI:
            if not self.value or any(c.isspace() or c in _IRI_FORBIDDEN for c in self.value):
                raise TermError(f"invalid IRI {self.value!r}")
        elif self.kind == BLANK:
            if r_nodeid.fullmatch(f"_:{self.value}") is None:
                raise TermError(f"invalid blank node label {self.value!r}")
        if self.kind != LITERAL:
            if self.datatype is not None or self.lang is not None:
                raise TermError("only literals carry a datatype or language")
            return
        if self.datatype == XSD_STRING:
            object.__setattr__(self, "datatype", None)
        if self.datatype is not None and self.lang is not None:
            raise TermError("a literal has either a datatype or a language tag")

    @classmethod
    def iri(cls, value):
        return cls(IRI, str(value))

    @classmethod
    def blank(cls, label):
        return cls(BLANK, label)

    @classmethod
    def literal(cls, value, datatype=None, lang=None):
        return cls(LITERAL, str(value), None if datatype is None else str(datatype), lang)

    @property
    def is_iri(self):
        return self.kind == IRI

    @property
    def is_blank(self):
        return self.kind == BLANK

    @property
    def is_literal(self):
        return self.kind == LITERAL

    @property
    def is_numeric(self):
        return self.kind == LITERAL and self.datatype in NUMERIC_DATATYPES

    def sort_key(self):
        return (_KIND_RANK[self.kind], self.value, self.datatype or "", self.lang or "")

    def __lt__(self, other):
        if not isinstance(other, Term):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def __str__(self):
        if self.kind == IRI:
            return f"<{self.value}>"
        if self.kind == BLANK:
            return f"_:{self.value}"
        if self.lang:
            return f'"{self.value}"@{self.lang}'
        if self.datatype:
            return f'"{self.value}"^^<{self.datatype}>'
        return f'"{self.value}"'


def numeric_value(term) -> Optional[Union[int, Decimal, float]]:
    """Python number for a numeric literal, None for anything else or an ill-typed lexical form."""
    if not isinstance(term, Term) or not term.is_numeric:
        return None
    value = Literal(term.value, datatype=URIRef(term.datatype)).toPython()
    if isinstance(value, bool) or not isinstance(value, (int, Decimal, float)):
        return None
    return value


def number_literal(value) -> Term:
    if isinstance(value, bool):
        return Term.literal("true" if value else "false", XSD_BOOLEAN)
    if isinstance(value, int):
        return Term.literal(str(value), XSD_INTEGER)
    if isinstance(value, Decimal):
        text = format(value.normalize(), "f")
        return Term.literal(text, XSD_DECIMAL)
    return Term.literal(repr(float(value)), XSD_DOUBLE)


@dataclass(frozen=True)
class Triple:
    s: Term
    p: Term
    o: Term

    def __post_init__(self):
        if self.s.kind not in (IRI, BLANK):
            raise TermError(f"subject must be an IRI or blank node, got {self.s}")
        if self.p.kind != IRI:
            raise TermError(f"predicate must be an IRI, got {self.p}")

    def terms(self):
        return (self.s, self.p, self.o)

    def sort_key(self):
        return (self.s.sort_key(), self.p.sort_key(), self.o.sort_key())

    def __str__(self):
        return f"{self.s} {self.p} {self.o} ."


@dataclass(frozen=True)
class TimestampedTriple:
    triple: Triple
    ts: int

    def __post_init__(self):
        if not isinstance(self.ts, int) or isinstance(self.ts, bool) or self.ts < 0:
            raise TermError(f"timestamp must be a non-negative integer, got {self.ts!r}")


@dataclass(frozen=True)
class GraphEvent:
    """A batch of timestamped triples sharing one graph id; event_ts is the max triple ts."""

    graph_id: str
    triples: Tuple[TimestampedTriple, ...]
    event_ts: int = field(default=-1)

    def __post_init__(self):
        if not self.triples:
            raise TermError(f"graph event {self.graph_id!r} has no triples")
        object.__setattr__(self, "triples", tuple(self.triples))
        high = max(t.ts for t in self.triples)
        if self.event_ts == -1:
            object.__setattr__(self, "event_ts", high)
        elif self.event_ts != high:
            raise TermError(
                f"event_ts mismatch in {self.graph_id!r}: carried {self.event_ts}, max triple ts {high}"
            )

    @classmethod
    def stamped(cls, graph_id, triples, ts):
        return cls(graph_id, tuple(TimestampedTriple(t, ts) for t in triples))

    def plain_triples(self):
        return [t.triple for t in self.triples]

    def __len__(self):
        return len(self.triples)
