import time

from layers.Algebra import (
    WindowResult,
    aggregate,
    compatible,
    construct_output,
    holds,
    merge,
    project,
)
from layers.KB_Access import KbAccessMode
from layers.Query_AST import (
    BGP,
    Filter,
    Join,
    LeftJoin,
    PathPattern,
    Service,
    UnionPattern,
    constants,
)
from layers.RDF_Terms import Term, Triple
from layers.Triple_Store import Var


class Model:
    """
    Reference engine that follows the algebra definitions literally.

    A basic graph pattern is answered by trying every assignment of its
    variables over the term universe (dataset terms and query constants) and
    keeping those whose instantiated triples are all in the dataset. Paths
    are relations composed step by step, with closures iterated to a fixpoint.
    Slow on purpose; used as the oracle for the indexed engine.
    """

    def __init__(self, configs):
        self.kb = configs.kb or KbAccessMode.none()
        self.engine_id = configs.engine_id or "naive-0"

    def evaluate_window(self, ast, window, kb=None):
        kb = kb or self.kb
        start = time.perf_counter()
        result = WindowResult(window.seq_no, ast.form, projection=ast.projection)
        if not window.events:
            return result
        graph = set(window.triples())
        store = kb.store_for(ast)
        if store is not None:
            graph.update(store.triples())
        universe = {x for t in graph for x in t.terms()} | constants(ast)
        solutions = _Evaluator(graph, sorted(universe)).eval(ast.body)
        if ast.group_by is not None:
            solutions = aggregate(solutions, ast.group_by)
        if ast.is_construct:
            result.groups = construct_output(ast, solutions)
        else:
            result.solutions = project(solutions, ast.projection)
        result.eval_millis = (time.perf_counter() - start) * 1000.0
        return result

    def close(self):
        pass


class _Evaluator:
    def __init__(self, graph, universe):
        self.graph = graph
        self.universe = universe
        self.nodes = sorted({x for t in graph for x in (t.s, t.o)})

    def eval(self, node):
        if isinstance(node, BGP):
            return self.bgp(node.patterns)
        if isinstance(node, PathPattern):
            return self.path(node)
        if isinstance(node, Join):
            left, right = self.eval(node.left), self.eval(node.right)
            return [merge(a, b) for a in left for b in right if compatible(a, b)]
        if isinstance(node, UnionPattern):
            return self.eval(node.left) + self.eval(node.right)
        if isinstance(node, Filter):
            return [m for m in self.eval(node.child) if holds(node.expr, m)]
        if isinstance(node, LeftJoin):
            right, condition = node.right, None
            if isinstance(right, Filter):
                right, condition = right.child, right.expr
            candidates = self.eval(right)
            out = []
            for a in self.eval(node.left):
                matches = [merge(a, b) for b in candidates if compatible(a, b)]
                if condition is not None:
                    matches = [m for m in matches if holds(condition, m)]
                out.extend(matches or [a])
            return out
        if isinstance(node, Service):
            raise NotImplementedError("the naive engine does not call KB services")
        raise TypeError(f"unknown pattern node {node!r}")

    def bgp(self, patterns):
        names = []
        for p in patterns:
            names.extend(n for n in p.variables() if n not in names)
        # check each pattern as soon as its last variable is assigned
        due = {i: [] for i in range(len(names) + 1)}
        for p in patterns:
            last = max((names.index(n) + 1 for n in p.variables()), default=0)
            due[last].append(p)
        if any(not self._holds(p, {}) for p in due[0]):
            return []
        out = []

        def assign(i, mapping):
            if i == len(names):
                out.append(dict(mapping))
                return
            for term in self.universe:
                mapping[names[i]] = term
                if all(self._holds(p, mapping) for p in due[i + 1]):
                    assign(i + 1, mapping)
            del mapping[names[i]]

        assign(0, {})
        return out

    def _holds(self, pattern, mapping):
        ground = pattern.substitute(mapping)
        s, p, o = ground.slots()
        if s.is_literal or not p.is_iri:
            return False
        return Triple(s, p, o) in self.graph

    def relation(self, step):
        iri = Term.iri(step.iri)
        pairs = {(t.s, t.o) for t in self.graph if t.p == iri}
        if step.marker is None:
            return pairs
        closure = set(pairs)
        while True:
            grown = closure | {(a, d) for a, b in closure for c, d in pairs if b == c}
            if grown == closure:
                break
            closure = grown
        if step.marker == "*":
            closure |= {(x, x) for x in self.universe}
        return closure

    def path(self, node):
        pairs = None
        for step in node.steps:
            r = self.relation(step)
            if pairs is None:
                pairs = r
            else:
                pairs = {(a, d) for a, b in pairs for c, d in r if b == c}
        both_open = isinstance(node.s, Var) and isinstance(node.o, Var)
        out = []
        for a, b in sorted(pairs):
            if both_open and a == b and a not in self.nodes and all(s.marker == "*" for s in node.steps):
                # zero-length pairs with both ends open range over graph nodes only
                continue
            mapping = {}
            ok = True
            for slot, term in ((node.s, a), (node.o, b)):
                if isinstance(slot, Var):
                    if mapping.setdefault(slot.name, term) != term:
                        ok = False
                elif slot != term:
                    ok = False
            if ok:
                out.append(mapping)
        return out
