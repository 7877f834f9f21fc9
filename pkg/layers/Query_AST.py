from dataclasses import dataclass
from typing import Optional, Tuple

from layers.NTriples import serialize_term
from layers.Triple_Store import TriplePattern, Var

SELECT = "select"
CONSTRUCT = "construct"


# ---- pattern nodes ----

@dataclass(frozen=True)
class BGP:
    patterns: Tuple[TriplePattern, ...] = ()


@dataclass(frozen=True)
class PathStep:
    iri: str
    marker: Optional[str] = None  # None, "*" or "+"


@dataclass(frozen=True)
class PathPattern:
    s: object
    steps: Tuple[PathStep, ...]
    o: object


@dataclass(frozen=True)
class Join:
    left: object
    right: object


@dataclass(frozen=True)
class LeftJoin:
    """OPTIONAL; a Filter directly under ``right`` is the join condition."""

    left: object
    right: object


@dataclass(frozen=True)
class UnionPattern:
    left: object
    right: object


@dataclass(frozen=True)
class Filter:
    expr: object
    child: object


@dataclass(frozen=True)
class Service:
    endpoint: str
    bgp: BGP


# ---- filter expressions ----

@dataclass(frozen=True)
class Comparison:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class Not:
    expr: object


# ---- query ----

@dataclass(frozen=True)
class Aggregate:
    fn: str  # "count" or "avg"
    arg: str
    out: str


@dataclass(frozen=True)
class GroupBy:
    vars: Tuple[str, ...]
    aggregates: Tuple[Aggregate, ...] = ()


@dataclass(frozen=True)
class QueryAst:
    form: str
    body: object
    projection: Tuple[str, ...] = ()
    template: Tuple[TriplePattern, ...] = ()
    prefixes: Tuple[Tuple[str, str], ...] = ()
    group_by: Optional[GroupBy] = None

    @property
    def is_construct(self):
        return self.form == CONSTRUCT


def pattern_variables(node):
    """Variables a pattern node can bind, in first-appearance order."""
    out = []

    def add(names):
        for n in names:
            if n not in out:
                out.append(n)

    def walk(n):
        if isinstance(n, BGP):
            for p in n.patterns:
                add(p.variables())
        elif isinstance(n, PathPattern):
            add(x.name for x in (n.s, n.o) if isinstance(x, Var))
        elif isinstance(n, (Join, LeftJoin, UnionPattern)):
            walk(n.left)
            walk(n.right)
        elif isinstance(n, Filter):
            walk(n.child)
        elif isinstance(n, Service):
            walk(n.bgp)

    walk(node)
    return out


def free_variables(ast_or_node):
    body = ast_or_node.body if isinstance(ast_or_node, QueryAst) else ast_or_node
    return set(pattern_variables(body))


def expr_variables(expr):
    if isinstance(expr, Comparison):
        return {x.name for x in (expr.left, expr.right) if isinstance(x, Var)}
    if isinstance(expr, (And, Or)):
        return expr_variables(expr.left) | expr_variables(expr.right)
    if isinstance(expr, Not):
        return expr_variables(expr.expr)
    return set()


def walk_nodes(node):
    yield node
    if isinstance(node, (Join, LeftJoin, UnionPattern)):
        yield from walk_nodes(node.left)
        yield from walk_nodes(node.right)
    elif isinstance(node, Filter):
        yield from walk_nodes(node.child)
    elif isinstance(node, Service):
        yield node.bgp


def all_patterns(node):
    """Every triple pattern of a body, including those inside SERVICE blocks."""
    for n in walk_nodes(node):
        if isinstance(n, BGP):
            yield from n.patterns


def constants(ast):
    terms = set()
    for n in walk_nodes(ast.body):
        if isinstance(n, BGP):
            for p in n.patterns:
                terms.update(x for x in p.slots() if not isinstance(x, Var))
        elif isinstance(n, PathPattern):
            terms.update(x for x in (n.s, n.o) if not isinstance(x, Var))
        elif isinstance(n, Filter):
            terms.update(_expr_constants(n.expr))
    return terms


def _expr_constants(expr):
    if isinstance(expr, Comparison):
        return {x for x in (expr.left, expr.right) if not isinstance(x, Var)}
    if isinstance(expr, (And, Or)):
        return _expr_constants(expr.left) | _expr_constants(expr.right)
    if isinstance(expr, Not):
        return _expr_constants(expr.expr)
    return set()


# ---- pretty printing ----

def _term_text(x):
    return str(x) if isinstance(x, Var) else serialize_term(x)


def _pattern_text(p):
    return " ".join(_term_text(x) for x in p.slots())


def _path_text(node):
    steps = "/".join(f"<{s.iri}>{s.marker or ''}" for s in node.steps)
    return f"{_term_text(node.s)} {steps} {_term_text(node.o)}"


def expr_text(expr):
    if isinstance(expr, Comparison):
        return f"{_term_text(expr.left)} {expr.op} {_term_text(expr.right)}"
    if isinstance(expr, And):
        return f"({expr_text(expr.left)} && {expr_text(expr.right)})"
    if isinstance(expr, Or):
        return f"({expr_text(expr.left)} || {expr_text(expr.right)})"
    return f"!({expr_text(expr.expr)})"


def _spine(node):
    # left-folded group elements; an empty left-most bgp is the fold seed
    if isinstance(node, Join):
        return _spine(node.left) + [node.right]
    if isinstance(node, LeftJoin):
        left = [] if node.left == BGP() else _spine(node.left)
        return left + [("optional", node.right)]
    return [node]


def _group_lines(node, indent):
    filters = []
    while isinstance(node, Filter):
        filters.insert(0, node.expr)
        node = node.child
    elements = _spine(node)
    if elements == [BGP()]:
        elements = []
    pad = "  " * indent
    lines = []
    previous = None
    for element in elements:
        if isinstance(element, tuple):
            lines.append(f"{pad}OPTIONAL {{")
            lines.extend(_group_lines(element[1], indent + 1))
            lines.append(f"{pad}}}")
        elif isinstance(element, BGP) and element.patterns and not isinstance(previous, BGP):
            lines.extend(f"{pad}{_pattern_text(p)} ." for p in element.patterns)
        elif isinstance(element, PathPattern):
            lines.append(f"{pad}{_path_text(element)} .")
        elif isinstance(element, UnionPattern):
            branches = []
            while isinstance(element, UnionPattern):
                branches.insert(0, element.right)
                element = element.left
            branches.insert(0, element)
            for i, branch in enumerate(branches):
                lines.append(f"{pad}{'UNION ' if i else ''}{{")
                lines.extend(_group_lines(branch, indent + 1))
                lines.append(f"{pad}}}")
        elif isinstance(element, Service):
            lines.append(f"{pad}SERVICE <{element.endpoint}> {{")
            lines.extend(f"{pad}  {_pattern_text(p)} ." for p in element.bgp.patterns)
            lines.append(f"{pad}}}")
        else:
            lines.append(f"{pad}{{")
            lines.extend(_group_lines(element, indent + 1))
            lines.append(f"{pad}}}")
        previous = element
    lines.extend(f"{pad}FILTER({expr_text(e)})" for e in filters)
    return lines


def to_text(ast: QueryAst) -> str:
    """Canonical query text; parsing it gives back an equal QueryAst."""
    lines = [f"PREFIX {prefix}: <{iri}>" for prefix, iri in ast.prefixes]
    if ast.is_construct:
        lines.append("CONSTRUCT {")
        lines.extend(f"  {_pattern_text(p)} ." for p in ast.template)
        lines.append("}")
    else:
        aggregates = {a.out: a for a in (ast.group_by.aggregates if ast.group_by else ())}
        items = []
        for name in ast.projection:
            a = aggregates.get(name)
            items.append(f"({a.fn.upper()}(?{a.arg}) AS ?{a.out})" if a else f"?{name}")
        lines.append("SELECT " + " ".join(items))
    lines.append("WHERE {")
    lines.extend(_group_lines(ast.body, 1))
    lines.append("}")
    if ast.group_by is not None and ast.group_by.vars:
        lines.append("GROUP BY " + " ".join(f"?{v}" for v in ast.group_by.vars))
    return "\n".join(lines) + "\n"
