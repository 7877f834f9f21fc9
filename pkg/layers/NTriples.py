from rdflib import BNode, Literal, URIRef
from rdflib.plugins.parsers.ntriples import ParseError, W3CNTriplesParser
from rdflib.plugins.serializers.nt import _quoteLiteral

from layers.RDF_Terms import Term, TermError, Triple


class NTriplesParseError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class _SourceLabels(dict):
    """Blank node context that keeps the labels written in the source."""

    def __contains__(self, label):
        return True

    def __missing__(self, label):
        return BNode(label)

    def get(self, label, default=None):
        return BNode(label)

    def setdefault(self, label, default=None):
        return BNode(label)


class _Sink:
    def __init__(self):
        self.found = None

    def triple(self, s, p, o):
        self.found = (s, p, o)


def _to_term(node) -> Term:
    if isinstance(node, URIRef):
        return Term.iri(str(node))
    if isinstance(node, BNode):
        return Term.blank(str(node))
    return Term.literal(
        str(node),
        datatype=None if node.datatype is None else str(node.datatype),
        lang=node.language,
    )


def parse_ntriple(line: str) -> Triple:
    """
    Parse one N-Triples line.

    Typed literals come back in rdflib's canonical lexical form ("01"^^xsd:integer reads as "1").

    :param line: a single statement, optionally newline-terminated.
    :return: the Triple.
    :raises NTriplesParseError: with the byte offset of the first bad character.
    """
    text = line.rstrip("\r\n")
    sink = _Sink()
    parser = W3CNTriplesParser(sink, bnode_context=_SourceLabels())
    parser.line = text
    try:
        parser.parseline()
    except ParseError as e:
        rest = (parser.line or "").lstrip(" \t")
        offset = len(text.encode("utf-8")) - len(rest.encode("utf-8"))
        raise NTriplesParseError(str(e).split(" at ", 1)[0], offset) from e
    if sink.found is None:
        raise NTriplesParseError("no statement", 0)
    try:
        return Triple(*(_to_term(node) for node in sink.found))
    except TermError as e:
        raise NTriplesParseError(str(e), 0) from e


def is_statement(line: str) -> bool:
    stripped = line.strip()
    return bool(stripped) and not stripped.startswith("#")


def iter_ntriples(lines):
    """Yield (line number, Triple) for every statement line, skipping blanks and comments."""
    for lineno, line in enumerate(lines, start=1):
        if is_statement(line):
            yield lineno, parse_ntriple(line)


def to_rdflib(term: Term):
    if term.is_iri:
        return URIRef(term.value)
    if term.is_blank:
        return BNode(term.value)
    return Literal(
        term.value,
        lang=term.lang,
        datatype=None if term.datatype is None else URIRef(term.datatype),
        normalize=False,
    )


def serialize_term(term: Term) -> str:
    if term.is_literal:
        return _quoteLiteral(to_rdflib(term))
    return to_rdflib(term).n3()


def serialize_ntriple(triple: Triple) -> str:
    return f"{serialize_term(triple.s)} {serialize_term(triple.p)} {serialize_term(triple.o)} ."
