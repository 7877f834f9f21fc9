import logging
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from layers.NTriples import NTriplesParseError, is_statement, parse_ntriple, serialize_ntriple
from layers.RDF_Terms import OWL_SAMEAS, RDF_TYPE, RDFS_SUBCLASSOF, Term, Triple

logger = logging.getLogger(__name__)

TYPE = Term.iri(RDF_TYPE)
SUBCLASSOF = Term.iri(RDFS_SUBCLASSOF)
SAMEAS = Term.iri(OWL_SAMEAS)

# subject token, then the predicate IRI; used to skip lines before a full parse
_PREDICATE = re.compile(r'\s*(?:<[^>]*>|_:\S+)\s*<([^>]*)>')


class KbLoadError(ValueError):
    def __init__(self, message, lineno):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return f"?{self.name}"


PatternTerm = Union[Term, Var]


@dataclass(frozen=True)
class TriplePattern:
    s: PatternTerm
    p: PatternTerm
    o: PatternTerm

    def slots(self):
        return (self.s, self.p, self.o)

    def variables(self):
        seen = []
        for slot in self.slots():
            if isinstance(slot, Var) and slot.name not in seen:
                seen.append(slot.name)
        return seen

    def substitute(self, mapping):
        if not mapping:
            return self
        return TriplePattern(*(mapping.get(x.name, x) if isinstance(x, Var) else x for x in self.slots()))

    def __str__(self):
        return " ".join(str(x) for x in self.slots())


class AccessTracker:
    """Collects KB triples returned by lookups while one evaluation runs."""

    def __init__(self):
        self.hits = 0
        self.touched = set()

    def record(self, triples):
        self.hits += len(triples)
        self.touched.update(triples)


def _closure_maps(edges):
    """Reflexive-transitive up/down closures of a directed class graph, cycles allowed."""
    if not edges:
        return {}, {}
    classes = sorted({c for e in edges for c in e})
    index = {c: i for i, c in enumerate(classes)}
    rows = np.array([index[a] for a, _ in edges])
    cols = np.array([index[b] for _, b in edges])
    n = len(classes)
    graph = csr_matrix((np.ones(len(edges)), (rows, cols)), shape=(n, n))
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    members = [[] for _ in range(n_comp)]
    for i, label in enumerate(labels):
        members[label].append(classes[i])
    condensed = csr_matrix(
        (np.ones(len(edges)), (labels[rows], labels[cols])), shape=(n_comp, n_comp)
    )
    reverse = condensed.transpose().tocsr()
    up, down = {}, {}
    for comp in range(n_comp):
        above = breadth_first_order(condensed, comp, directed=True, return_predecessors=False)
        below = breadth_first_order(reverse, comp, directed=True, return_predecessors=False)
        up_set = frozenset(c for k in above for c in members[k])
        down_set = frozenset(c for k in below for c in members[k])
        for c in members[comp]:
            up[c] = up_set
            down[c] = down_set
    return up, down


def _sameas_representatives(pairs):
    if not pairs:
        return {}
    nodes = sorted({t for pair in pairs for t in pair})
    index = {t: i for i, t in enumerate(nodes)}
    rows = np.array([index[a] for a, _ in pairs])
    cols = np.array([index[b] for _, b in pairs])
    graph = csr_matrix((np.ones(len(pairs)), (rows, cols)), shape=(len(nodes), len(nodes)))
    _, labels = connected_components(graph, directed=False)
    least = {}
    for term, label in zip(nodes, labels):
        # nodes are sorted, so the first member seen is the least
        least.setdefault(label, term)
    return {term: least[label] for term, label in zip(nodes, labels)}


class TripleStore:
    """
    Immutable triple set with SPO/POS/OSP indexes and materialized closures.

    The three indexes map to the stored Triple objects so lookups never
    allocate new triples. Closures (subclass up/down, owl:sameAs
    representatives) are computed once when the store is built.
    """

    def __init__(self, triples: Iterable[Triple] = (), closures=True, sameas_rep=None):
        self._spo, self._pos, self._osp = {}, {}, {}
        unique = {}
        for t in triples:
            if t in unique:
                continue
            unique[t] = t
            self._spo.setdefault(t.s, {}).setdefault(t.p, {})[t.o] = t
            self._pos.setdefault(t.p, {}).setdefault(t.o, {})[t.s] = t
            self._osp.setdefault(t.o, {}).setdefault(t.s, {})[t.p] = t
        self._triples = unique
        self._nodes = None
        self.superclass_closure, self.subclass_closure = {}, {}
        self.sameas_rep = dict(sameas_rep or {})
        if closures:
            self._compute_closures()

    @classmethod
    def from_triples(cls, triples, closures=True):
        return cls(triples, closures=closures)

    @classmethod
    def load(cls, source: Iterable[str], rename_blanks=True, predicates=None, closures=True):
        """
        Build a store from N-Triples lines.

        :param source: iterable of lines (an open file works).
        :param rename_blanks: prefix blank labels with ``kb-`` so they never meet window blank nodes.
        :param predicates: when given, lines whose predicate IRI is not in this set are skipped
            before full parsing.
        :raises KbLoadError: on the first malformed line.
        """
        triples = []
        for lineno, line in enumerate(source, start=1):
            if not is_statement(line):
                continue
            if predicates is not None:
                m = _PREDICATE.match(line)
                if m and m.group(1) not in predicates:
                    continue
            try:
                t = parse_ntriple(line)
            except NTriplesParseError as e:
                raise KbLoadError(str(e), lineno) from e
            if rename_blanks and (t.s.is_blank or t.o.is_blank):
                t = Triple(_kb_blank(t.s), t.p, _kb_blank(t.o))
            triples.append(t)
        return cls(triples, closures=closures)

    def _compute_closures(self):
        edges = [
            (t.s, t.o)
            for t in self.match(TriplePattern(Var("s"), SUBCLASSOF, Var("o")))
            if t.s.is_iri and t.o.is_iri
        ]
        self.superclass_closure, self.subclass_closure = _closure_maps(edges)
        pairs = [
            (t.s, t.o)
            for t in self.match(TriplePattern(Var("s"), SAMEAS, Var("o")))
            if not t.o.is_literal
        ]
        if pairs:
            self.sameas_rep = _sameas_representatives(pairs)

    def __len__(self):
        return len(self._triples)

    def __iter__(self):
        return iter(self._triples)

    def __contains__(self, triple):
        return triple in self._triples

    def triples(self):
        return list(self._triples)

    def has_predicate(self, p: Term):
        return p in self._pos

    def predicates(self):
        return set(self._pos)

    def nodes(self):
        if self._nodes is None:
            self._nodes = frozenset(self._spo) | frozenset(self._osp)
        return self._nodes

    def terms(self):
        return self.nodes() | frozenset(self._pos)

    def _lookup(self, s, p, o):
        if s is not None:
            by_p = self._spo.get(s)
            if not by_p:
                return []
            if p is not None:
                by_o = by_p.get(p, {})
                if o is not None:
                    t = by_o.get(o)
                    return [t] if t is not None else []
                return list(by_o.values())
            if o is not None:
                return list(self._osp.get(o, {}).get(s, {}).values())
            return [t for by_o in by_p.values() for t in by_o.values()]
        if p is not None:
            by_o = self._pos.get(p)
            if not by_o:
                return []
            if o is not None:
                return list(by_o.get(o, {}).values())
            return [t for by_s in by_o.values() for t in by_s.values()]
        if o is not None:
            return [t for by_p in self._osp.get(o, {}).values() for t in by_p.values()]
        return list(self._triples)

    def match(self, pattern: TriplePattern, tracker: Optional[AccessTracker] = None):
        """Triples unifying with ``pattern``; the index is picked from the bound positions."""
        s, p, o = (None if isinstance(x, Var) else x for x in pattern.slots())
        found = self._lookup(s, p, o)
        names = [x.name for x in pattern.slots() if isinstance(x, Var)]
        if len(names) != len(set(names)):
            found = [t for t in found if _consistent(pattern, t)]
        if tracker is not None:
            tracker.record(found)
        return found

    def subclasses_of(self, c: Term):
        return self.subclass_closure.get(c, frozenset((c,)))

    def superclasses_of(self, c: Term):
        return self.superclass_closure.get(c, frozenset((c,)))

    def is_class(self, c: Term):
        return c in self.subclass_closure

    def record_closure(self, classes, tracker: Optional[AccessTracker]):
        """Mark the rdfs:subClassOf edges inside ``classes`` as touched."""
        if tracker is None:
            return
        for c in classes:
            edges = [t for t in self._spo.get(c, {}).get(SUBCLASSOF, {}).values() if t.o in classes]
            if edges:
                tracker.record(edges)

    def canonicalize_sameas(self):
        """New store with every owl:sameAs component collapsed onto its least member."""
        rep = self.sameas_rep
        if not rep:
            return self
        rewritten = (
            Triple(rep.get(t.s, t.s), rep.get(t.p, t.p), rep.get(t.o, t.o))
            for t in self._triples
            if t.p != SAMEAS
        )
        return TripleStore(rewritten, sameas_rep=rep)

    def match_entailed(self, pattern: TriplePattern, tracker: Optional[AccessTracker] = None):
        """
        Like ``match`` but over the store's RDFS entailments: rdf:type is inherited up
        the subclass closure and rdfs:subClassOf is reflexive-transitive.
        """
        p = pattern.p
        if isinstance(p, Var):
            found = dict.fromkeys(self.match(pattern, tracker))
            for pred in (TYPE, SUBCLASSOF):
                narrowed = TriplePattern(pattern.s, pred, pattern.o)
                for t in self.match_entailed(narrowed, tracker):
                    if _consistent(pattern, t):
                        found.setdefault(t)
            return list(found)
        if p == TYPE:
            return self._entailed_types(pattern, tracker)
        if p == SUBCLASSOF:
            return self._entailed_subclasses(pattern, tracker)
        return self.match(pattern, tracker)

    def _entailed_types(self, pattern, tracker):
        s, o = pattern.s, pattern.o
        found = {}
        if not isinstance(o, Var):
            below = self.subclasses_of(o)
            self.record_closure(below, tracker)
            for c in sorted(below):
                for t in self.match(TriplePattern(s, TYPE, c), tracker):
                    found.setdefault(Triple(t.s, TYPE, o))
            return list(found)
        for t in self.match(TriplePattern(s, TYPE, Var("_class")), tracker):
            above = self.superclasses_of(t.o)
            self.record_closure(above, tracker)
            for c in sorted(above):
                found.setdefault(Triple(t.s, TYPE, c))
        return [t for t in found if _consistent(pattern, t)]

    def _entailed_subclasses(self, pattern, tracker):
        s, o = pattern.s, pattern.o
        if not isinstance(s, Var):
            if not self.is_class(s):
                return self.match(pattern, tracker)
            above = self.superclasses_of(s)
            self.record_closure(above, tracker)
            return [Triple(s, SUBCLASSOF, c) for c in sorted(above) if isinstance(o, Var) or c == o]
        if not isinstance(o, Var):
            if not self.is_class(o):
                return self.match(pattern, tracker)
            below = self.subclasses_of(o)
            self.record_closure(below, tracker)
            return [Triple(c, SUBCLASSOF, o) for c in sorted(below)]
        found = []
        for c in sorted(self.superclass_closure):
            above = self.superclass_closure[c]
            self.record_closure(above, tracker)
            found.extend(Triple(c, SUBCLASSOF, x) for x in sorted(above))
        return [t for t in found if _consistent(pattern, t)]

    def to_ntriples(self):
        return sorted(serialize_ntriple(t) for t in self._triples)


def _kb_blank(term):
    return Term.blank(f"kb-{term.value}") if term.is_blank else term


def _consistent(pattern, triple):
    seen = {}
    for slot, term in zip(pattern.slots(), triple.terms()):
        if isinstance(slot, Var):
            if seen.setdefault(slot.name, term) != term:
                return False
        elif slot != term:
            return False
    return True


def load_kb(source, predicates=None):
    """Load KB text and collapse owl:sameAs aliases; the form every operator evaluates against."""
    store = TripleStore.load(source, predicates=predicates)
    logger.debug("loaded KB with %d triples", len(store))
    return store.canonicalize_sameas()


def extract_used_kb(store: TripleStore, q, sample):
    """
    Subset of ``store`` touched while evaluating ``q`` over every window in ``sample``.

    Re-evaluating ``q`` against the subset reproduces the results on that sample.
    """
    from layers.Algebra import Dataset, evaluate

    tracker = AccessTracker()
    for window in sample:
        window_store = TripleStore(window.triples(), closures=False)
        evaluate(q, Dataset(window_store, store, tracker))
    return TripleStore(tracker.touched, sameas_rep=store.sameas_rep)
