import itertools
import json
import logging
import socket
import socketserver
import threading

from layers.Triple_Store import TriplePattern, Var
from layers.Wire_Codec import WireDecodeError, dumps, term_from_obj, term_to_obj
from utils.tools import parse_address

logger = logging.getLogger(__name__)


class ServiceError(RuntimeError):
    pass


def pattern_to_obj(pattern: TriplePattern) -> dict:
    return {
        k: {"k": "var", "v": x.name} if isinstance(x, Var) else term_to_obj(x)
        for k, x in zip("spo", pattern.slots())
    }


def pattern_from_obj(obj) -> TriplePattern:
    if not isinstance(obj, dict):
        raise WireDecodeError("pattern is not an object")
    slots = []
    for key in "spo":
        if key not in obj:
            raise WireDecodeError(f"missing required field {key!r}", key)
        x = obj[key]
        if isinstance(x, dict) and x.get("k") == "var":
            slots.append(Var(str(x.get("v"))))
        else:
            slots.append(term_from_obj(x, key))
    return TriplePattern(*slots)


def evaluate_bgp(store, patterns, tracker=None):
    """Nested-loop join of ``patterns`` over the store's entailed triples."""
    rows = [{}]
    for pattern in patterns:
        nxt = []
        for mapping in rows:
            ground = pattern.substitute(mapping)
            for t in store.match_entailed(ground, tracker):
                extended = dict(mapping)
                if all(
                    extended.setdefault(slot.name, term) == term
                    for slot, term in zip(ground.slots(), t.terms())
                    if isinstance(slot, Var)
                ):
                    nxt.append(extended)
        rows = nxt
    return rows


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            if not raw.strip():
                continue
            reply = self.server.service.answer(raw)
            self.wfile.write(dumps(reply) + b"\n")
            self.wfile.flush()


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class KbServiceHandle:
    """A KB store served over newline-delimited JSON; one thread per connection."""

    def __init__(self, store, address):
        self.store = store
        self.requests = 0
        self._lock = threading.Lock()
        host, port = parse_address(address)
        self._server = _Server((host, port), _Handler)
        self._server.service = self
        self.address = "%s:%d" % self._server.server_address[:2]
        self._thread = threading.Thread(target=self._server.serve_forever, name=f"kb-service-{self.address}", daemon=True)
        self._thread.start()
        logger.info("KB service with %d triples listening on %s", len(store), self.address)

    def answer(self, raw):
        req_id = None
        try:
            request = json.loads(raw)
            if not isinstance(request, dict):
                raise WireDecodeError("request is not an object")
            req_id = request.get("id")
            if request.get("op") != "query":
                raise WireDecodeError(f"unsupported op {request.get('op')!r}")
            bgp = request.get("bgp")
            if not isinstance(bgp, list):
                raise WireDecodeError("missing required field 'bgp'", "bgp")
            patterns = [pattern_from_obj(p) for p in bgp]
            names = request.get("vars")
            if names is None:
                names = sorted({v for p in patterns for v in p.variables()})
            if not isinstance(names, list):
                raise WireDecodeError("field 'vars' must be a list", "vars")
        except (ValueError, WireDecodeError) as e:
            return {"op": "error", "id": req_id, "code": "bad-request", "msg": str(e)}
        with self._lock:
            self.requests += 1
        rows = evaluate_bgp(self.store, patterns)
        return {
            "op": "result",
            "id": req_id,
            "rows": [{n: term_to_obj(r[n]) for n in names if n in r} for r in rows],
        }

    def close(self):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)


def serve(store, endpoint="127.0.0.1:0") -> KbServiceHandle:
    return KbServiceHandle(store, endpoint)


class ServiceClient:
    """Blocking client for one KB service endpoint; not shared between threads."""

    def __init__(self, address, name=None, timeout=30.0):
        self.address = address
        self.name = name or address
        self.timeout = timeout
        self._ids = itertools.count()
        self._sock = None
        self._file = None

    def _connect(self):
        host, port = parse_address(self.address)
        try:
            self._sock = socket.create_connection((host, port), timeout=self.timeout)
        except OSError as e:
            raise ServiceError(f"cannot reach KB service {self.name} at {self.address}: {e}") from e
        self._file = self._sock.makefile("rwb")

    def query(self, patterns, names=None):
        if self._sock is None:
            self._connect()
        patterns = list(patterns)
        if names is None:
            names = sorted({v for p in patterns for v in p.variables()})
        req_id = f"q{next(self._ids)}"
        request = {"op": "query", "id": req_id, "bgp": [pattern_to_obj(p) for p in patterns], "vars": list(names)}
        try:
            self._file.write(dumps(request) + b"\n")
            self._file.flush()
            line = self._file.readline()
        except OSError as e:
            self.close()
            raise ServiceError(f"KB service {self.name} connection failed: {e}") from e
        if not line:
            self.close()
            raise ServiceError(f"KB service {self.name} closed the connection")
        reply = json.loads(line)
        if reply.get("op") == "error":
            raise ServiceError(f"KB service {self.name} rejected the request: {reply.get('msg')}")
        return [{k: term_from_obj(v, k) for k, v in row.items()} for row in reply["rows"]]

    def close(self):
        if self._sock is not None:
            try:
                self._file.close()
                self._sock.close()
            finally:
                self._sock = None
                self._file = None