import logging
import time

from layers.Algebra import Dataset, WindowResult, evaluate
from layers.KB_Access import KbAccessMode
from layers.Triple_Store import AccessTracker, TripleStore

logger = logging.getLogger(__name__)


class Model:
    """
    Indexed engine: the window is indexed like a small store and layered over
    the KB store, patterns are matched left to right with the incoming
    bindings as seeds, and subclass paths read the materialized closure.
    """

    def __init__(self, configs):
        self.kb = configs.kb or KbAccessMode.none()
        self.engine_id = configs.engine_id or "engine-0"
        # one ServiceClient per endpoint address, owned by this engine
        self._clients = {}

    def evaluate_window(self, ast, window, kb=None):
        kb = kb or self.kb
        kb.check(ast)
        start = time.perf_counter()
        if not window.events:
            return WindowResult(window.seq_no, ast.form, projection=ast.projection)
        tracker = AccessTracker()
        store = kb.store_for(ast)
        dataset = Dataset(
            TripleStore(window.triples(), closures=False),
            store,
            tracker,
            kb.service_caller(self._clients),
        )
        out = evaluate(ast, dataset)
        result = WindowResult(
            window.seq_no,
            ast.form,
            eval_millis=(time.perf_counter() - start) * 1000.0,
            kb_triples_touched=tracker.hits,
            projection=ast.projection,
        )
        if ast.is_construct:
            result.groups = out
        else:
            result.solutions = out
        return result

    def close(self):
        for client in self._clients.values():
            client.close()
        self._clients.clear()
