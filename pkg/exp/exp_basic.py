import logging
import os
import time
from dataclasses import dataclass, field
from typing import List

import pandas as pd

from bus.transport import BrokerServer
from data_provider.data_factory import data_provider, load_kb_lines, load_stream
from data_provider.replay import ReplayReport, replay
from exp.pipelines import STREAM_TOPIC, PipelineConfig, query_file
from layers.KB_Access import LOCAL, KbAccessMode
from layers.KB_Service import serve
from layers.Query_Parser import parse_query
from layers.Triple_Store import extract_used_kb, load_kb
from models import Naive, Native
from scep.client import CollectingSink, run_client
from scep.node_config import client_settings, operator_config
from scep.operator import THREAD, run_operator
from scep.window import COUNT, AggregatorConfig, cut_windows
from utils.metrics import MEASUREMENT_FIELDS, DigestMismatchError
from utils.tools import ConfigError, dotdict

logger = logging.getLogger(__name__)

engine_dict = {
    "Native": Native,
    "Naive": Naive,
}

REPORT_FIELDS = ["step", "pipeline"] + MEASUREMENT_FIELDS


def read_query(name):
    with open(query_file(name), encoding="utf-8") as f:
        return parse_query(f.read())


@dataclass
class PipelineRun:
    pipeline: str
    wall_millis: float
    digest: str
    results: int
    replay: ReplayReport
    measurements: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=MEASUREMENT_FIELDS))


class Exp_Basic(object):
    default_backend = THREAD

    def __init__(self, args):
        self.args = args
        self.model_dict = engine_dict
        if args.engine not in self.model_dict:
            raise ConfigError(f"unknown engine {args.engine!r}; options: {sorted(self.model_dict)}")
        self.paths = self._get_data()
        self._kb_lines = {}
        self._kb_stores = {}
        self._events = None
        self._windows = None

    def _build_engine(self, kb_mode, engine_id="bench.engine.0"):
        return self.model_dict[self.args.engine].Model(dotdict(kb=kb_mode, engine_id=engine_id))

    @property
    def backend(self):
        return getattr(self.args, "backend", None) or self.default_backend

    def _get_data(self):
        return data_provider(self.args)

    def events(self):
        if self._events is None:
            self._events = load_stream(self.paths["stream"])
            logger.info("loaded %d stream events from %s", len(self._events), self.paths["stream"])
        return self._events

    def kb_lines(self, files):
        key = tuple(files)
        if key not in self._kb_lines:
            self._kb_lines[key] = load_kb_lines(*files)
        return self._kb_lines[key]

    def kb_store(self, files):
        key = tuple(files)
        if key not in self._kb_stores:
            self._kb_stores[key] = load_kb(self.kb_lines(files))
        return self._kb_stores[key]

    def sample_windows(self):
        """The stream cut the way the stream-facing operators cut it."""
        if self._windows is None:
            config = AggregatorConfig((STREAM_TOPIC,), COUNT, self.args.window)
            self._windows = cut_windows(self.events(), config)
        return self._windows

    def used_kb(self, query, files):
        """Used and total KB size of ``query`` over the whole stream."""
        store = self.kb_store(files)
        used = extract_used_kb(store, read_query(query), self.sample_windows())
        return len(used), len(store)

    def _kb_mode(self, doc):
        if doc.get("kb.mode") != LOCAL:
            return None
        files = [f for f in doc["kb.file"].split(",") if f]
        if doc.get("kb.reload_per_window"):
            return KbAccessMode.local_merge(kb_lines=self.kb_lines(files), reload_per_window=True)
        return KbAccessMode.local_merge(store=self.kb_store(files), kb_lines=self.kb_lines(files))

    def run_pipeline(self, pipeline: PipelineConfig, backend=None, rate=None, timeout=None) -> PipelineRun:
        """
        Run ``pipeline`` on one host: socket broker on an ephemeral port, KB
        services in threads, operators downstream-first so every topic has its
        subscribers before data flows, then replay the stream and wait for the
        client to see end-of-stream.
        """
        backend = backend or self.backend
        rate = self.args.rate if rate is None else rate
        timeout = timeout or self.args.timeout
        server = BrokerServer("127.0.0.1:0").start()
        broker = server.broker
        services = {}
        clients, operators = [], []
        try:
            for name, path in pipeline.services.items():
                services[name] = serve(self.kb_store([path]))
            endpoints = {name: handle.address for name, handle in services.items()}

            sink = CollectingSink()
            for doc in pipeline.clients:
                settings = client_settings(doc, where=f"{pipeline.name} client")
                clients.append(run_client(settings.topics, settings.scripts, sink, broker, settings.id, settings.window))
            docs = {doc["id"]: doc for doc in pipeline.with_endpoints(endpoints)}
            for doc in reversed(pipeline.topological_order()):
                doc = docs[doc["id"]]
                cfg = operator_config(
                    doc, where=f"{pipeline.name}/{doc['id']}", kb_mode=self._kb_mode(doc),
                    overrides={"engine": self.args.engine, "engine.backend": backend},
                )
                operators.append(run_operator(cfg, broker, self.args.log_level, address=server.address))

            start = time.perf_counter()
            report = replay(self.events(), rate, STREAM_TOPIC, broker)
            while any(c.alive() for c in clients):
                for handle in operators + clients:
                    if handle.errors:
                        raise handle.errors[0]
                for handle in operators:
                    handle.check_processes()
                if time.perf_counter() - start > timeout:
                    raise TimeoutError(f"{pipeline.name}: no end-of-stream after {timeout:.0f}s")
                time.sleep(0.01)
            wall_millis = (time.perf_counter() - start) * 1000.0
            for handle in clients + operators:
                handle.join(timeout=10)
        finally:
            for handle in clients + operators:
                handle.close()
            for handle in services.values():
                handle.close()
            server.close()

        frames = [h.metrics.to_frame() for h in operators]
        measurements = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=MEASUREMENT_FIELDS)
        run = PipelineRun(pipeline.name, wall_millis, sink.digest(), len(sink.events()), report, measurements)
        logger.info("%s: %d result events in %.0f ms, digest %s", pipeline.name, run.results, wall_millis, run.digest[:12])
        return run

    @staticmethod
    def check_digests(label, digests):
        """All digests of ``digests`` (name → digest) must agree."""
        if len(set(digests.values())) > 1:
            detail = ", ".join(f"{k}={v[:12]}" for k, v in digests.items())
            raise DigestMismatchError(f"{label}: result digests differ ({detail})")

    def report_paths(self):
        out = self.args.out
        stem, _ = os.path.splitext(out)
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        return {
            "windows": out,
            "summary": stem + ".summary.csv",
            "operators": stem + ".operators.csv",
            "sweep": stem + ".sweep.csv",
        }

    def write_reports(self, windows: List[pd.DataFrame], summary: pd.DataFrame, operators=None, sweep=None):
        paths = self.report_paths()
        frame = pd.concat(windows, ignore_index=True) if windows else pd.DataFrame(columns=REPORT_FIELDS)
        frame = frame.sort_values(["step", "pipeline", "operator_id", "window_seq"], kind="stable")
        frame[REPORT_FIELDS].to_csv(paths["windows"], index=False)
        summary.to_csv(paths["summary"], index=False)
        if operators is not None:
            operators.to_csv(paths["operators"], index=False)
        if sweep is not None:
            sweep.to_csv(paths["sweep"], index=False)
        logger.info("reports written next to %s", paths["windows"])
        return paths

    def run(self):
        raise NotImplementedError
