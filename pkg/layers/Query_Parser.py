from pyparsing import ParseBaseException, ParseResults, col, lineno
from rdflib import BNode, Literal, URIRef, Variable
from rdflib.plugins.sparql.parser import parseQuery
from rdflib.plugins.sparql.parserutils import CompValue, ParamValue

from layers.Query_AST import (
    BGP,
    CONSTRUCT,
    SELECT,
    Aggregate,
    And,
    Comparison,
    Filter,
    GroupBy,
    Join,
    LeftJoin,
    Not,
    Or,
    PathPattern,
    PathStep,
    QueryAst,
    Service,
    UnionPattern,
    expr_variables,
    free_variables,
    walk_nodes,
)
from layers.RDF_Terms import Term, TermError
from layers.Triple_Store import TriplePattern, Var

MAX_PATH_LENGTH = 3

_COMPARISONS = {"=", "!=", "<", "<=", ">", ">="}
_AGGREGATES = {"Aggregate_Count": "count", "Aggregate_Avg": "avg"}
_UNSUPPORTED_CLAUSES = (
    ("modifier", "DISTINCT/REDUCED"),
    ("datasetClause", "FROM"),
    ("having", "HAVING"),
    ("orderby", "ORDER BY"),
    ("limitoffset", "LIMIT/OFFSET"),
    ("valuesClause", "VALUES"),
)


class QuerySyntaxError(ValueError):
    def __init__(self, message, line=None, column=None):
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


def _one(node):
    while isinstance(node, ParseResults) and len(node) == 1:
        node = node[0]
    return node


def _unwrap(expr):
    """Drop the single-operand wrappers the grammar leaves around every expression level."""
    while True:
        expr = _one(expr)
        if isinstance(expr, CompValue) and expr.name.endswith("Expression") and expr.other is None:
            expr = expr.expr
        else:
            return expr


def _flatten(items):
    for item in items:
        if isinstance(item, (list, ParseResults)):
            yield from _flatten(item)
        elif isinstance(item, ParamValue):
            yield from _flatten([item.tokenList])
        else:
            yield item


class _Translator:
    """Turns rdflib's parse tree into a QueryAst for the supported subset."""

    def __init__(self, text):
        self.text = text
        self.prefixes = {}

    # ---- positions ----

    def locate(self, needle):
        start = 0
        while needle:
            at = self.text.find(needle, start)
            if at < 0:
                break
            end = at + len(needle)
            if end >= len(self.text) or not (self.text[end].isalnum() or self.text[end] == "_"):
                return lineno(at, self.text), col(at, self.text)
            start = end
        return None, None

    def error(self, message, needle=None):
        raise QuerySyntaxError(message, *self.locate(needle))

    def var_error(self, message, name):
        line, column = self.locate(f"?{name}")
        if line is None:
            line, column = self.locate(f"${name}")
        raise QuerySyntaxError(message, line, column)

    # ---- terms ----

    def spelling(self, node):
        if isinstance(node, CompValue) and node.name == "pname":
            return f"{node.prefix or ''}:{node.localname or ''}"
        if isinstance(node, URIRef):
            return f"<{node}"
        return None

    def iri(self, node):
        node = _one(node)
        if isinstance(node, URIRef):
            return str(node)
        if isinstance(node, CompValue) and node.name == "pname":
            prefix = node.prefix or ""
            if prefix not in self.prefixes:
                self.error(f"unknown prefix {prefix + ':'!r}", self.spelling(node))
            return self.prefixes[prefix] + (node.localname or "")
        self.error(f"expected IRI, found {node!r}")

    def term(self, node):
        node = _one(node)
        try:
            if isinstance(node, Variable):
                return Var(str(node))
            if isinstance(node, URIRef):
                return Term.iri(str(node))
            if isinstance(node, BNode):
                self.error("blank nodes are not supported in queries")
            if isinstance(node, Literal):
                datatype = None if node.datatype is None else str(node.datatype)
                return Term.literal(str(node), datatype=datatype, lang=node.language)
            if isinstance(node, CompValue) and node.name == "pname":
                return Term.iri(self.iri(node))
            if isinstance(node, CompValue) and node.name == "literal":
                datatype = None if node.datatype is None else self.iri(node.datatype)
                return Term.literal(str(node.string), datatype=datatype, lang=node.lang or None)
        except TermError as e:
            self.error(str(e))
        self.error(f"unsupported term {node!r}")

    # ---- property paths ----

    def first_spelling(self, node):
        node = _one(node)
        if isinstance(node, CompValue) and node.name != "pname":
            part = node.part
            return self.first_spelling(part[0] if isinstance(part, (list, ParseResults)) else part)
        return self.spelling(node)

    def steps(self, node):
        node = _one(node)
        if isinstance(node, CompValue):
            if node.name == "PathAlternative":
                if len(node.part) != 1:
                    self.error("path alternatives are not supported", self.first_spelling(node))
                return self.steps(node.part[0])
            if node.name == "PathSequence":
                return [step for part in node.part for step in self.steps(part)]
            if node.name == "PathElt":
                steps = self.steps(node.part)
                if node.mod is None:
                    return steps
                if node.mod not in ("*", "+"):
                    self.error(f"path modifier {node.mod!r} is not supported", self.first_spelling(node))
                if len(steps) != 1 or steps[0].marker is not None:
                    self.error("a path modifier applies to a single IRI", self.first_spelling(node))
                return [PathStep(steps[0].iri, node.mod)]
            if node.name == "pname":
                return [PathStep(self.iri(node))]
            self.error("inverse and negated paths are not supported", self.first_spelling(node))
        if isinstance(node, URIRef):
            return [PathStep(str(node))]
        self.error(f"unsupported path {node!r}")

    def verb(self, node):
        """A Term or Var for a plain predicate, a tuple of PathStep for a property path."""
        node = _one(node)
        if isinstance(node, Variable):
            return Var(str(node))
        steps = self.steps(node)
        if len(steps) > MAX_PATH_LENGTH:
            self.error(f"path length {len(steps)} exceeds the maximum of {MAX_PATH_LENGTH}",
                       self.first_spelling(node))
        if len(steps) == 1 and steps[0].marker is None:
            return Term.iri(steps[0].iri)
        return tuple(steps)

    # ---- triples ----

    def triples(self, raw, allow_paths=True, where="here"):
        terms = list(_flatten(raw))
        if len(terms) % 3:
            self.error("malformed triple block")
        out = []
        for i in range(0, len(terms), 3):
            s, p, o = terms[i:i + 3]
            subject = self.term(s)
            if isinstance(subject, Term) and subject.is_literal:
                self.error(f"a literal cannot be a subject: {subject}")
            verb = self.verb(p)
            if isinstance(verb, tuple):
                if not allow_paths:
                    self.error(f"property paths are not allowed {where}", self.first_spelling(p))
                out.append(PathPattern(subject, verb, self.term(o)))
            else:
                out.append(TriplePattern(subject, verb, self.term(o)))
        return out

    # ---- groups ----

    def group(self, node):
        node = _one(node)
        if not isinstance(node, CompValue) or node.name != "GroupGraphPatternSub":
            self.error("sub-queries are not supported", "SELECT")
        acc = None
        filters = []

        def fold(item):
            return item if acc is None else Join(acc, item)

        for part in node.part or ():
            part = _one(part)
            if part.name == "TriplesBlock":
                pending = []
                for item in self.triples(part.triples):
                    if isinstance(item, PathPattern):
                        if pending:
                            acc = fold(BGP(tuple(pending)))
                            pending = []
                        acc = fold(item)
                    else:
                        pending.append(item)
                if pending:
                    acc = fold(BGP(tuple(pending)))
            elif part.name == "Filter":
                filters.append(self.expression(part.expr))
            elif part.name == "OptionalGraphPattern":
                acc = LeftJoin(acc if acc is not None else BGP(), self.group(part.graph))
            elif part.name == "GroupOrUnionGraphPattern":
                graphs = [self.group(g) for g in part.graph]
                item = graphs[0]
                for right in graphs[1:]:
                    item = UnionPattern(item, right)
                acc = fold(item)
            elif part.name == "ServiceGraphPattern":
                acc = fold(self.service(part))
            else:
                keyword = part.name.replace("GraphPattern", "").upper()
                self.error(f"{keyword} is not supported", keyword)
        node = acc if acc is not None else BGP()
        for expr in filters:
            node = Filter(expr, node)
        return node

    def service(self, part):
        if part.get("silent") or part.get("_silent"):
            self.error("SERVICE SILENT is not supported", "SILENT")
        if isinstance(_one(part.term), Variable):
            self.error("SERVICE needs a fixed endpoint IRI", "SERVICE")
        endpoint = self.iri(part.term)
        body = _one(part.graph)
        if not isinstance(body, CompValue) or body.name != "GroupGraphPatternSub":
            self.error("SERVICE blocks hold triple patterns only", "SERVICE")
        patterns = []
        for inner in body.part or ():
            inner = _one(inner)
            if inner.name != "TriplesBlock":
                self.error("SERVICE blocks hold triple patterns only", "SERVICE")
            patterns.extend(self.triples(inner.triples, allow_paths=False, where="in SERVICE"))
        return Service(endpoint, BGP(tuple(patterns)))

    # ---- filter expressions ----

    def operand(self, node):
        node = _unwrap(node)
        if isinstance(node, CompValue) and node.name not in ("pname", "literal"):
            self.error("FILTER operands must be variables or constants")
        return self.term(node)

    def expression(self, node):
        node = _unwrap(node)
        if isinstance(node, CompValue):
            if node.name in ("ConditionalOrExpression", "ConditionalAndExpression"):
                combine = Or if node.name == "ConditionalOrExpression" else And
                out = self.expression(node.expr)
                for other in node.other:
                    out = combine(out, self.expression(other))
                return out
            if node.name == "RelationalExpression" and node.op in _COMPARISONS:
                return Comparison(str(node.op), self.operand(node.expr), self.operand(node.other))
            if node.name == "UnaryNot":
                return Not(self.expression(node.expr))
        self.error("FILTER supports comparisons combined with &&, || and !", "FILTER")

    # ---- query ----

    def prologue(self, decls):
        prefixes = []
        for decl in decls:
            decl = _one(decl)
            if decl.name != "PrefixDecl":
                self.error("BASE is not supported", "BASE")
            prefix, iri = decl.prefix or "", str(decl.iri)
            self.prefixes[prefix] = iri
            prefixes.append((prefix, iri))
        return tuple(prefixes)

    def select_list(self, q):
        if not q.projection:
            self.error("empty select list", "SELECT")
        projection, aggregates = [], []
        for item in q.projection:
            item = _one(item)
            if item.var is not None:
                name = str(item.var)
            else:
                name = str(item.evar)
                agg = _unwrap(item.expr)
                fn = _AGGREGATES.get(agg.name) if isinstance(agg, CompValue) else None
                if fn is None:
                    self.var_error("only COUNT and AVG aggregates are supported", name)
                if agg.distinct:
                    self.var_error("DISTINCT aggregates are not supported", name)
                arg = _unwrap(agg.vars)
                if not isinstance(arg, Variable):
                    self.var_error("aggregate argument must be a variable", name)
                aggregates.append(Aggregate(fn, str(arg), name))
            if name in projection:
                self.var_error(f"duplicate projection variable ?{name}", name)
            projection.append(name)
        return projection, aggregates

    def query(self, parsed):
        prefixes = self.prologue(parsed[0])
        q = _one(parsed[1])
        if len(parsed) > 2:
            self.error("VALUES is not supported", "VALUES")
        keyword = q.name[: -len("Query")].upper()
        if q.name not in ("SelectQuery", "ConstructQuery"):
            self.error(f"{keyword} queries are not supported; expected SELECT or CONSTRUCT", keyword)
        for attr, clause in _UNSUPPORTED_CLAUSES:
            if getattr(q, attr) is not None:
                self.error(f"{clause} is not supported", clause.split("/")[0])

        projection, aggregates, template = [], [], ()
        if q.name == "SelectQuery":
            form = SELECT
            projection, aggregates = self.select_list(q)
        else:
            form = CONSTRUCT
            if q.template is None:
                self.error("CONSTRUCT needs a template", "CONSTRUCT")
            template = tuple(self.triples(q.template, allow_paths=False, where="in a template"))
        body = self.group(q.where)

        group_vars = None
        if q.groupby is not None:
            if form == CONSTRUCT:
                self.error("GROUP BY is only supported in SELECT queries", "GROUP")
            group_vars = []
            for cond in q.groupby.condition:
                cond = _one(cond)
                if not isinstance(cond, Variable):
                    self.error("GROUP BY takes variables only", "GROUP")
                group_vars.append(str(cond))

        group_by = None
        if group_vars is not None or aggregates:
            group_by = GroupBy(tuple(group_vars or ()), tuple(aggregates))
        ast = QueryAst(
            form=form,
            body=body,
            projection=tuple(projection),
            template=template,
            prefixes=prefixes,
            group_by=group_by,
        )
        self.validate(ast)
        return ast

    def validate(self, ast):
        free = free_variables(ast.body)
        outputs = {a.out for a in ast.group_by.aggregates} if ast.group_by else set()
        for name in ast.projection:
            if name not in free and name not in outputs:
                self.var_error(f"projection variable ?{name} is not bound by the query body", name)
        if ast.group_by is not None:
            for a in ast.group_by.aggregates:
                if a.arg not in free:
                    self.var_error(f"aggregate argument ?{a.arg} is not bound by the query body", a.arg)
                if a.out in free:
                    self.var_error(f"aggregate output ?{a.out} clashes with a body variable", a.out)
            for v in ast.group_by.vars:
                if v not in free:
                    self.var_error(f"GROUP BY variable ?{v} is not bound by the query body", v)
            for name in ast.projection:
                if name not in outputs and name not in ast.group_by.vars:
                    self.var_error(f"?{name} must appear in GROUP BY", name)
        for p in ast.template:
            for x in p.slots():
                if isinstance(x, Var) and x.name not in free:
                    self.var_error(f"template variable ?{x.name} is not bound by the query body", x.name)
        for node in walk_nodes(ast.body):
            if isinstance(node, Filter):
                unknown = sorted(expr_variables(node.expr) - free)
                if unknown:
                    self.var_error(f"FILTER variable ?{unknown[0]} is not bound by the query body", unknown[0])


def parse_query(text: str) -> QueryAst:
    """
    Parse continuous-query text into a QueryAst.

    rdflib's SPARQL 1.1 grammar does the parsing; the result is then narrowed
    to the supported subset.

    :raises QuerySyntaxError: carrying line and column of the offending token.
    """
    try:
        parsed = parseQuery(text)
    except ParseBaseException as e:
        raise QuerySyntaxError(f"syntax error: {e.msg}", e.lineno, e.col) from e
    return _Translator(text).query(parsed)
