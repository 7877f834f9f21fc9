import logging

from layers.Algebra import EvaluationError
from layers.KB_Service import ServiceClient, ServiceError
from layers.Query_AST import BGP, PathPattern, Service, walk_nodes
from layers.Triple_Store import SAMEAS, SUBCLASSOF, Var, load_kb
from utils.tools import ConfigError

logger = logging.getLogger(__name__)

LOCAL = "local"
SERVICE = "service"
NONE = "none"

DEFAULT_ENDPOINT = "*"


def relevant_predicates(ast):
    """
    IRIs of every predicate the query can look up, plus the closure
    predicates; None when some pattern has a variable predicate.
    """
    found = {SUBCLASSOF.value, SAMEAS.value}
    for node in walk_nodes(ast.body):
        if isinstance(node, BGP):
            for p in node.patterns:
                if isinstance(p.p, Var):
                    return None
                found.add(p.p.value)
        elif isinstance(node, PathPattern):
            found.update(step.iri for step in node.steps)
    return found


class KbAccessMode:
    """
    How an engine reaches the background KB.

    ``local`` merges the store into every window's dataset (and answers
    SERVICE blocks from the same store), ``service`` leaves the dataset
    window-only and sends SERVICE blocks to remote endpoints, ``none``
    evaluates over the window alone.
    """

    def __init__(self, kind, store=None, kb_lines=None, endpoints=None, reload_per_window=False):
        if kind not in (LOCAL, SERVICE, NONE):
            raise ConfigError(f"unknown kb.mode {kind!r}; expected local, service or none")
        self.kind = kind
        self.store = store
        self.kb_lines = kb_lines
        self.endpoints = dict(endpoints or {})
        self.reload_per_window = reload_per_window
        if kind == LOCAL and store is None and kb_lines is None:
            raise ConfigError("kb.mode local needs a KB store or kb.file")
        if kind == LOCAL and reload_per_window and kb_lines is None:
            raise ConfigError("kb.reload_per_window needs the KB text (kb.file)")
        if kind == SERVICE and not self.endpoints:
            raise ConfigError("kb.mode service needs kb.endpoint")

    @classmethod
    def local_merge(cls, store=None, kb_lines=None, reload_per_window=False):
        if store is None and kb_lines is not None and not reload_per_window:
            store = load_kb(kb_lines)
        return cls(LOCAL, store=store, kb_lines=kb_lines, reload_per_window=reload_per_window)

    @classmethod
    def from_file(cls, path, reload_per_window=False):
        """KB text from one file, or the concatenation of several."""
        paths = [path] if isinstance(path, str) else list(path)
        lines = []
        for p in paths:
            with open(p, encoding="utf-8") as f:
                lines.extend(f.readlines())
        logger.info("read %d KB lines from %s", len(lines), ", ".join(paths))
        return cls.local_merge(kb_lines=lines, reload_per_window=reload_per_window)

    @classmethod
    def remote_service(cls, endpoints):
        """``endpoints`` is one address (used for every SERVICE name) or a name → address map."""
        if isinstance(endpoints, str):
            endpoints = {DEFAULT_ENDPOINT: endpoints}
        return cls(SERVICE, endpoints=endpoints)

    @classmethod
    def none(cls):
        return cls(NONE)

    @property
    def is_local(self):
        return self.kind == LOCAL

    def address_of(self, name):
        address = self.endpoints.get(name, self.endpoints.get(DEFAULT_ENDPOINT))
        if address is None:
            raise ConfigError(f"no kb.endpoint configured for SERVICE <{name}>")
        return address

    def check(self, ast):
        """Fail at start-up for a query this mode cannot evaluate."""
        services = sorted({n.endpoint for n in walk_nodes(ast.body) if isinstance(n, Service)})
        if self.kind != SERVICE and services:
            raise ConfigError(f"query uses SERVICE {services} but kb.mode is {self.kind}")
        if self.kind == SERVICE:
            for name in services:
                self.address_of(name)

    def store_for(self, ast):
        """KB store to layer under a window; with per-window reload the KB text is re-indexed."""
        if self.kind != LOCAL:
            return None
        if not self.reload_per_window:
            return self.store
        return load_kb(self.kb_lines, predicates=relevant_predicates(ast))

    def service_caller(self, clients=None):
        """Callable ``(endpoint, bgp) -> rows`` for a Dataset, or None outside service mode."""
        if self.kind == SERVICE:
            clients = clients if clients is not None else {}

            def call(endpoint, bgp):
                address = self.address_of(endpoint)
                if address not in clients:
                    clients[address] = ServiceClient(address, name=endpoint)
                try:
                    return clients[address].query(bgp.patterns)
                except ServiceError as e:
                    raise EvaluationError(str(e), endpoint) from e

            return call
        return None

    def describe(self):
        if self.kind == LOCAL:
            size = len(self.kb_lines) if self.store is None else len(self.store)
            return f"local ({size} triples{', reload per window' if self.reload_per_window else ''})"
        if self.kind == SERVICE:
            return "service " + ", ".join(f"{k}={v}" for k, v in sorted(self.endpoints.items()))
        return "none"
