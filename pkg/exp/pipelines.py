import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from layers.KB_Access import LOCAL, SERVICE
from scep.window import ALIGNED, COUNT, DEFAULT_MAX_TRIPLES
from utils.tools import ConfigError

logger = logging.getLogger(__name__)

QUERY_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "queries")
STREAM_TOPIC = "tweets"

PIPELINES = ("q15", "q16", "cquery1-mono", "cquery1-dag")


def query_file(name):
    return os.path.join(QUERY_DIR, name + ".rq")


@dataclass
class PipelineConfig:
    """
    Operator graph of one benchmark run. Operators and clients are node
    documents with the same dotted keys as configs/nodes/*.yaml; ``services``
    maps a SERVICE endpoint name to the KB file served under it.
    """

    name: str
    generators: Tuple[str, ...]
    operators: List[dict]
    clients: List[dict]
    services: Dict[str, str] = field(default_factory=dict)
    broker: Optional[str] = None

    def _inputs(self, doc):
        topics = doc["topics"]
        return [t.strip() for t in topics.split(",")] if isinstance(topics, str) else list(topics)

    def topological_order(self):
        """Operator documents, producers before consumers."""
        produced = {doc["output"]: doc for doc in self.operators}
        if len(produced) != len(self.operators):
            raise ConfigError(f"{self.name}: two operators publish to the same topic")
        order, state = [], {}

        def visit(doc):
            if state.get(doc["id"]) == "done":
                return
            if state.get(doc["id"]) == "visiting":
                raise ConfigError(f"{self.name}: topic graph has a cycle through {doc['id']}")
            state[doc["id"]] = "visiting"
            for topic in self._inputs(doc):
                if topic in produced:
                    visit(produced[topic])
            state[doc["id"]] = "done"
            order.append(doc)

        for doc in self.operators:
            visit(doc)
        return order

    def validate(self):
        order = self.topological_order()
        known = set(self.generators) | {doc["output"] for doc in order}
        for doc in order + self.clients:
            missing = [t for t in self._inputs(doc) if t not in known]
            if missing:
                raise ConfigError(f"{self.name}: {doc.get('id', 'client')} reads {missing}, which nothing produces")
        for doc in order:
            if not os.path.exists(doc["query.file"]):
                raise ConfigError(f"{self.name}: query file {doc['query.file']} does not exist")
        for name, path in self.services.items():
            if not os.path.exists(path):
                raise ConfigError(f"{self.name}: KB file {path} for SERVICE <{name}> does not exist")
        return self

    @property
    def output_topics(self):
        return [t for doc in self.clients for t in self._inputs(doc)]

    def with_endpoints(self, endpoints):
        """Node documents with every service-mode operator pointed at ``endpoints`` (name → address)."""
        binding = ",".join(f"{name}={address}" for name, address in sorted(endpoints.items()))
        docs = []
        for doc in self.operators:
            doc = dict(doc)
            if doc.get("kb.mode") == SERVICE:
                doc["kb.endpoint"] = binding
            docs.append(doc)
        return docs


def _operator(op_id, topics, output, query, engines=1, window=DEFAULT_MAX_TRIPLES, kind=COUNT, **kb):
    doc = {
        "id": op_id,
        "topics": ",".join(topics),
        "output": output,
        "window.kind": kind,
        "window.max_triples": window,
        "engines": engines,
        "query.file": query_file(query),
    }
    doc.update(kb)
    return doc


def _kb(mode, files, reload):
    if mode == LOCAL:
        return {"kb.mode": LOCAL, "kb.file": ",".join(files), "kb.reload_per_window": reload}
    if mode == SERVICE:
        return {"kb.mode": SERVICE, "kb.endpoint": "pending"}
    raise ConfigError(f"unknown KB mode {mode!r}; expected local or service")


def _client(topic, window):
    return {"id": "bench-client", "topics": topic, "scripts": 1, "window.max_triples": window}


def single_query(name, paths, mode=LOCAL, engines=1, window=DEFAULT_MAX_TRIPLES, reload=False):
    """q15 / q16: one KB-touching operator on the tweet stream."""
    output = f"{name}.out"
    op = _operator(
        name, [STREAM_TOPIC], output, f"{name}_{mode}", engines, window,
        **_kb(mode, [paths["kb"]], reload),
    )
    services = {"kb": paths["kb"]} if mode == SERVICE else {}
    return PipelineConfig(name, (STREAM_TOPIC,), [op], [_client(output, window)], services)


def cquery1_mono(paths, mode=LOCAL, engines=1, window=DEFAULT_MAX_TRIPLES, reload=False):
    op = _operator(
        "mono", [STREAM_TOPIC], "mono.out", f"cquery1_mono_{mode}", engines, window,
        **_kb(mode, [paths["artists"], paths["shows"]], reload),
    )
    services = {"artists": paths["artists"], "shows": paths["shows"]} if mode == SERVICE else {}
    return PipelineConfig("cquery1-mono", (STREAM_TOPIC,), [op], [_client("mono.out", window)], services)


def cquery1_dag(paths, mode=LOCAL, engines=1, window=DEFAULT_MAX_TRIPLES, reload=False):
    """
    A and B type the mentioned entities against their own KB partition and
    run side by side; C/D split A's output by dominant sentiment, E/F split
    B's; G joins the four streams per upstream window and aggregates.
    """
    ops = [
        _operator("A", [STREAM_TOPIC], "A.out", f"cquery1_a_{mode}", engines, window,
                  **_kb(mode, [paths["artists"]], reload)),
        _operator("B", [STREAM_TOPIC], "B.out", f"cquery1_b_{mode}", engines, window,
                  **_kb(mode, [paths["shows"]], reload)),
    ]
    for op_id, source, query in (("C", "A.out", "c"), ("D", "A.out", "d"), ("E", "B.out", "e"), ("F", "B.out", "f")):
        ops.append(_operator(op_id, [source], f"{op_id}.out", f"cquery1_{query}", 1, window, ALIGNED))
    ops.append(_operator("G", ["C.out", "D.out", "E.out", "F.out"], "G.out", "cquery1_g", 1, window, ALIGNED))
    services = {"artists": paths["artists"], "shows": paths["shows"]} if mode == SERVICE else {}
    return PipelineConfig("cquery1-dag", (STREAM_TOPIC,), ops, [_client("G.out", window)], services)


def build_pipeline(name, paths, **kwargs) -> PipelineConfig:
    if name in ("q15", "q16"):
        pipeline = single_query(name, paths, **kwargs)
    elif name == "cquery1-mono":
        pipeline = cquery1_mono(paths, **kwargs)
    elif name == "cquery1-dag":
        pipeline = cquery1_dag(paths, **kwargs)
    else:
        raise ConfigError(f"unknown pipeline {name!r}; options: {list(PIPELINES)}")
    return pipeline.validate()
