import logging
from collections import deque
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, List, Optional

from layers.Query_AST import (
    BGP,
    And,
    Comparison,
    Filter,
    Join,
    LeftJoin,
    Not,
    Or,
    PathPattern,
    Service,
    UnionPattern,
)
from layers.RDF_Terms import Term, TermError, Triple, number_literal, numeric_value
from layers.Triple_Store import SUBCLASSOF, TriplePattern, Var

logger = logging.getLogger(__name__)

MAX_PATH_VISITS = 10_000

SolutionMapping = Dict[str, object]


class EvaluationError(RuntimeError):
    def __init__(self, message, endpoint=None):
        super().__init__(f"[{endpoint}] {message}" if endpoint else message)
        self.endpoint = endpoint


@dataclass
class WindowResult:
    window_seq: int
    form: str
    solutions: List[SolutionMapping] = field(default_factory=list)
    groups: List[List[Triple]] = field(default_factory=list)
    eval_millis: float = 0.0
    kb_triples_touched: int = 0
    projection: tuple = ()


def compatible(a, b):
    if len(a) > len(b):
        a, b = b, a
    return all(b.get(k, v) == v for k, v in a.items())


def merge(a, b):
    out = dict(a)
    out.update(b)
    return out


def join(left, right):
    if not right or not left:
        return []
    return [merge(a, b) for a in left for b in right if compatible(a, b)]


class Dataset:
    """
    The graph a window is evaluated against: window triples layered over an
    optional KB store. A triple present in both is seen once.
    """

    def __init__(self, window, kb=None, tracker=None, service=None):
        self.window = window
        self.kb = kb
        self.tracker = tracker
        self.service = service
        self._service_cache = {}
        self._closure_ready = (
            kb is not None and not window.has_predicate(SUBCLASSOF)
        )

    def match(self, pattern: TriplePattern):
        found = self.window.match(pattern)
        if self.kb is not None:
            found.extend(t for t in self.kb.match(pattern, self.tracker) if t not in self.window)
        return found

    def nodes(self):
        if self.kb is None:
            return self.window.nodes()
        return self.window.nodes() | self.kb.nodes()

    def service_rows(self, node: Service):
        key = (node.endpoint, node.bgp)
        if key not in self._service_cache:
            if self.service is None:
                raise EvaluationError("no KB service configured", node.endpoint)
            self._service_cache[key] = self.service(node.endpoint, node.bgp)
        return self._service_cache[key]

    # ---- path steps ----

    def _direct(self, node, iri, forward):
        if forward:
            return {t.o for t in self.match(TriplePattern(node, iri, Var("_o")))}
        return {t.s for t in self.match(TriplePattern(Var("_s"), iri, node))}

    def _closure(self, node, forward):
        closure = self.kb.superclasses_of(node) if forward else self.kb.subclasses_of(node)
        self.kb.record_closure(closure, self.tracker)
        return closure

    def step(self, node, step, forward=True):
        iri = Term.iri(step.iri)
        if step.marker is None:
            return self._direct(node, iri, forward)
        if iri == SUBCLASSOF and self._closure_ready:
            if step.marker == "*":
                return set(self._closure(node, forward))
            reached = set()
            for d in self._direct(node, iri, forward):
                reached |= self._closure(d, forward)
            return reached
        return self._bfs(node, iri, step.marker == "*", forward)

    def _bfs(self, node, iri, reflexive, forward):
        reached = {node} if reflexive else set()
        queue = deque([node])
        expanded = set()
        while queue:
            current = queue.popleft()
            if current in expanded:
                continue
            expanded.add(current)
            for nxt in self._direct(current, iri, forward):
                if nxt not in reached:
                    reached.add(nxt)
                    if len(reached) >= MAX_PATH_VISITS:
                        logger.warning("path expansion over <%s> stopped at %d nodes", iri.value, MAX_PATH_VISITS)
                        return reached
                queue.append(nxt)
        return reached


# ---- filters ----

def _operand(x, mapping):
    return mapping.get(x.name) if isinstance(x, Var) else x


def eval_expr(expr, mapping):
    """Three-valued filter evaluation: True, False or None for an error."""
    if isinstance(expr, Comparison):
        left, right = _operand(expr.left, mapping), _operand(expr.right, mapping)
        if left is None or right is None:
            return None
        a, b = numeric_value(left), numeric_value(right)
        if a is None or b is None:
            if expr.op == "=":
                return left == right
            if expr.op == "!=":
                return left != right
            if left.kind != right.kind:
                return None
            a, b = left.value, right.value
        try:
            return {
                "=": a == b, "!=": a != b, "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b,
            }[expr.op]
        except TypeError:
            return None
    if isinstance(expr, And):
        a, b = eval_expr(expr.left, mapping), eval_expr(expr.right, mapping)
        if a is False or b is False:
            return False
        return None if a is None or b is None else True
    if isinstance(expr, Or):
        a, b = eval_expr(expr.left, mapping), eval_expr(expr.right, mapping)
        if a is True or b is True:
            return True
        return None if a is None or b is None else False
    if isinstance(expr, Not):
        value = eval_expr(expr.expr, mapping)
        return None if value is None else not value
    raise TypeError(f"not a filter expression: {expr!r}")


def holds(expr, mapping):
    return eval_expr(expr, mapping) is True


# ---- pattern evaluation ----

def _extend(mapping, pattern, triple):
    out = dict(mapping)
    for slot, term in zip(pattern.slots(), triple.terms()):
        if isinstance(slot, Var):
            if out.setdefault(slot.name, term) != term:
                return None
    return out


def _eval_bgp(patterns, ds, seeds):
    rows = seeds
    for pattern in patterns:
        nxt = []
        for mapping in rows:
            ground = pattern.substitute(mapping)
            for t in ds.match(ground):
                extended = _extend(mapping, ground, t)
                if extended is not None:
                    nxt.append(extended)
        rows = nxt
        if not rows:
            break
    return rows


def _eval_path(node, ds, seeds):
    out = []
    for mapping in seeds:
        s = mapping.get(node.s.name) if isinstance(node.s, Var) else node.s
        o = mapping.get(node.o.name) if isinstance(node.o, Var) else node.o
        if s is not None:
            pairs = [(s, t) for t in _walk(ds, node.steps, s, True) if o is None or t == o]
        elif o is not None:
            pairs = [(t, o) for t in _walk(ds, node.steps, o, False)]
        else:
            pairs = [(n, t) for n in sorted(ds.nodes()) for t in _walk(ds, node.steps, n, True)]
        for a, b in pairs:
            extended = dict(mapping)
            ok = True
            for slot, term in ((node.s, a), (node.o, b)):
                if isinstance(slot, Var) and extended.setdefault(slot.name, term) != term:
                    ok = False
            if ok:
                out.append(extended)
    return out


def _walk(ds, steps, start, forward):
    frontier = {start}
    for step in (steps if forward else reversed(steps)):
        nxt = set()
        for n in frontier:
            nxt |= ds.step(n, step, forward)
        frontier = nxt
        if not frontier:
            break
    return sorted(frontier)


def _seedable(node):
    if isinstance(node, (BGP, PathPattern)):
        return True
    if isinstance(node, (Join, UnionPattern)):
        return _seedable(node.left) and _seedable(node.right)
    return False


def _eval(node, ds, seeds):
    if not _seedable(node) and seeds != [{}]:
        return join(seeds, _eval(node, ds, [{}]))
    if isinstance(node, BGP):
        return _eval_bgp(node.patterns, ds, seeds)
    if isinstance(node, PathPattern):
        return _eval_path(node, ds, seeds)
    if isinstance(node, Join):
        left = _eval(node.left, ds, seeds)
        if not left:
            return []
        if _seedable(node.right):
            return _eval(node.right, ds, left)
        return join(left, _eval(node.right, ds, [{}]))
    if isinstance(node, UnionPattern):
        return _eval(node.left, ds, seeds) + _eval(node.right, ds, seeds)
    if isinstance(node, Filter):
        return [m for m in _eval(node.child, ds, seeds) if holds(node.expr, m)]
    if isinstance(node, LeftJoin):
        return _left_join(node, ds)
    if isinstance(node, Service):
        return [dict(r) for r in ds.service_rows(node)]
    raise TypeError(f"unknown pattern node {node!r}")


def _left_join(node, ds):
    left = _eval(node.left, ds, [{}])
    right, condition = node.right, None
    if isinstance(right, Filter):
        right, condition = right.child, right.expr
    out = []
    if _seedable(right):
        for mapping in left:
            matches = _eval(right, ds, [mapping])
            if condition is not None:
                matches = [m for m in matches if holds(condition, m)]
            out.extend(matches or [mapping])
        return out
    candidates = _eval(right, ds, [{}])
    for mapping in left:
        matches = [merge(mapping, r) for r in candidates if compatible(mapping, r)]
        if condition is not None:
            matches = [m for m in matches if holds(condition, m)]
        out.extend(matches or [mapping])
    return out


def eval_pattern(expr, dataset, bound: Optional[SolutionMapping] = None):
    return _eval(expr, dataset, [dict(bound or {})])


# ---- solution modifiers ----

def _average(values):
    if all(isinstance(v, (int, Decimal)) for v in values):
        return sum((Decimal(v) for v in values), Decimal(0)) / Decimal(len(values))
    return sum(float(v) for v in values) / len(values)


def aggregate(solutions, group_by):
    """
    Group solutions on ``group_by.vars`` and compute the aggregates per group.

    COUNT counts rows where its argument is bound; AVG averages the numeric
    bindings and leaves its output unbound when a group has none.
    """
    groups = {}
    for mapping in solutions:
        key = tuple(mapping.get(v) for v in group_by.vars)
        groups.setdefault(key, []).append(mapping)
    if not groups and not group_by.vars:
        groups[()] = []
    out = []
    for key, rows in groups.items():
        result = {v: t for v, t in zip(group_by.vars, key) if t is not None}
        for agg in group_by.aggregates:
            if agg.fn == "count":
                result[agg.out] = number_literal(sum(1 for r in rows if agg.arg in r))
            else:
                values = [numeric_value(r[agg.arg]) for r in rows if agg.arg in r]
                values = [v for v in values if v is not None]
                if values:
                    result[agg.out] = number_literal(_average(values))
        out.append(result)
    return out


def project(solutions, names):
    return [{n: m[n] for n in names if n in m} for m in solutions]


def construct_output(ast, solutions):
    """One ground triple group per solution; a group with an unbound template variable is dropped."""
    groups = []
    for mapping in solutions:
        group = []
        for pattern in ast.template:
            ground = pattern.substitute(mapping)
            if any(isinstance(x, Var) for x in ground.slots()):
                group = None
                break
            try:
                group.append(Triple(ground.s, ground.p, ground.o))
            except TermError:
                group = None
                break
        if group:
            groups.append(group)
    return groups


def evaluate(ast, dataset):
    """Evaluate a whole query: body, grouping, projection or construction."""
    solutions = eval_pattern(ast.body, dataset)
    if ast.group_by is not None:
        solutions = aggregate(solutions, ast.group_by)
    if ast.is_construct:
        return construct_output(ast, solutions)
    return project(solutions, ast.projection)
