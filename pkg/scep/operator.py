import logging
import multiprocessing
import threading
from dataclasses import dataclass, field
from typing import Optional

from layers.KB_Access import KbAccessMode
from layers.Query_AST import QueryAst
from layers.Wire_Codec import dumps, is_eos, loads
from scep.aggregator import Aggregator
from scep.publisher import GRAPH, Publisher, error_record, result_record
from scep.window import AggregatorConfig, decode_window
from utils.metrics import MetricsSink
from utils.tools import ConfigError, dotdict

logger = logging.getLogger(__name__)

THREAD = "thread"
PROCESS = "process"


@dataclass
class OperatorConfig:
    id: str
    aggregator: AggregatorConfig
    query: QueryAst
    output_topic: str
    kb_mode: KbAccessMode = field(default_factory=KbAccessMode.none)
    engine_count: int = 1
    engine: str = "Native"
    backend: str = THREAD
    output_format: str = GRAPH
    # rebuild recipe for engines in other processes: query text and kb settings
    query_text: Optional[str] = None
    kb_spec: Optional[dict] = None
    metrics_file: Optional[str] = None

    def __post_init__(self):
        if self.engine_count < 1:
            raise ConfigError(f"{self.id}: engines must be at least 1")
        if self.output_topic in self.aggregator.input_topics:
            raise ConfigError(f"{self.id}: output topic {self.output_topic!r} is also an input")
        if self.backend not in (THREAD, PROCESS):
            raise ConfigError(f"{self.id}: unknown engine.backend {self.backend!r}")

    @property
    def window_topic(self):
        return f"{self.id}.windows"

    @property
    def results_topic(self):
        return f"{self.id}.results"

    @property
    def reorder_capacity(self):
        return 4 * self.engine_count


def build_engine(name, kb_mode, engine_id):
    from exp.exp_basic import engine_dict

    if name not in engine_dict:
        raise ConfigError(f"unknown engine {name!r}; options: {sorted(engine_dict)}")
    return engine_dict[name].Model(dotdict(kb=kb_mode, engine_id=engine_id))


class EngineWorker:
    """One engine of the pool: takes windows from the group, evaluates, reports results."""

    def __init__(self, broker, cfg: OperatorConfig, index, model=None):
        self.broker = broker
        self.cfg = cfg
        self.engine_id = f"{cfg.id}.engine.{index}"
        self.model = model or build_engine(cfg.engine, cfg.kb_mode, self.engine_id)
        self.windows = 0
        self._sub = None

    def subscribe(self):
        self._sub = self.broker.subscribe(self.cfg.window_topic, f"{self.cfg.id}.engines", self.engine_id)

    def run(self, stop: threading.Event):
        if self._sub is None:
            self.subscribe()
        try:
            while not stop.is_set():
                got = self._sub.next(200)
                if got is None:
                    continue
                offset, payload = got
                obj = loads(payload)
                if is_eos(obj):
                    self._sub.ack(offset)
                    break
                window = decode_window(obj)
                try:
                    result = self.model.evaluate_window(self.cfg.query, window)
                    record = result_record(result, window, self.engine_id)
                except Exception as e:
                    logger.exception("%s: window %d failed", self.engine_id, window.seq_no)
                    record = error_record(window.seq_no, self.engine_id, e)
                self.broker.publish(self.cfg.results_topic, dumps(record))
                self._sub.ack(offset)
                self.windows += 1
        finally:
            self.model.close()
            if not self._sub.closed:
                self._sub.close()


def _engine_process(spec):
    # entry point of a spawned engine process
    from bus.transport import connect
    from layers.Query_Parser import parse_query
    from scep.node_config import kb_mode_from_spec

    logging.basicConfig(level=spec["log_level"], format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    broker = connect(spec["broker"])
    query = parse_query(spec["query_text"])
    cfg = OperatorConfig(
        id=spec["id"],
        aggregator=AggregatorConfig(tuple(spec["inputs"])),
        query=query,
        output_topic=spec["output"],
        kb_mode=kb_mode_from_spec(spec["kb_spec"]),
        engine=spec["engine"],
    )
    worker = EngineWorker(broker, cfg, spec["index"])
    worker.run(threading.Event())
    broker.close()


class OperatorHandle:
    """Running operator; ``join`` re-raises the first failure of any of its activities."""

    def __init__(self, cfg, metrics):
        self.cfg = cfg
        self.metrics = metrics
        self.stop_event = threading.Event()
        self.errors = []
        self.threads = []
        self.processes = []
        self.aggregator = None
        self.publisher = None
        self.engines = []

    def _spawn(self, name, target):
        def body():
            try:
                target(self.stop_event)
            except Exception as e:
                logger.exception("%s: %s failed", self.cfg.id, name)
                self.errors.append(e)
                self.stop_event.set()

        thread = threading.Thread(target=body, name=f"{self.cfg.id}-{name}", daemon=True)
        self.threads.append(thread)
        thread.start()

    def check_processes(self):
        for p in self.processes:
            if p.exitcode not in (None, 0):
                raise RuntimeError(f"{self.cfg.id}: engine process {p.name} exited with {p.exitcode}")

    @property
    def measurements(self):
        return self.metrics.rows

    def stop(self):
        self.stop_event.set()

    def join(self, timeout=None):
        for thread in self.threads:
            thread.join(timeout)
        for p in self.processes:
            p.join(timeout)
            if p.is_alive():
                p.terminate()
        self.metrics.close()
        if self.errors:
            raise self.errors[0]
        return self

    def alive(self):
        return any(t.is_alive() for t in self.threads)

    def close(self, timeout=5):
        """Stop and wait without re-raising; engine processes still running are terminated."""
        self.stop()
        for thread in self.threads:
            thread.join(timeout)
        for p in self.processes:
            p.join(timeout)
            if p.is_alive():
                p.terminate()
        self.metrics.close()


def run_operator(cfg: OperatorConfig, broker, log_level="INFO", address=None) -> OperatorHandle:
    """
    Wire aggregator → engine pool → publisher for one operator and start them.

    Every subscription and group exists before this returns, so the operator
    sees every event published after the call.
    """
    cfg.kb_mode.check(cfg.query)
    metrics = MetricsSink(cfg.metrics_file)
    handle = OperatorHandle(cfg, metrics)
    credits = threading.Semaphore(cfg.reorder_capacity)

    broker.create_group(cfg.window_topic, f"{cfg.id}.engines")
    handle.publisher = Publisher(
        broker, cfg.id, cfg.results_topic, cfg.output_topic, cfg.reorder_capacity,
        fmt=cfg.output_format, metrics=metrics, credits=credits, health=handle.check_processes,
    )
    handle.publisher.subscribe()
    handle.aggregator = Aggregator(
        broker, cfg.id, cfg.aggregator, cfg.window_topic, cfg.engine_count,
        control_topic=cfg.results_topic, credits=credits,
    )
    handle.aggregator.subscribe()

    if cfg.backend == PROCESS:
        address = address or getattr(broker, "address", None)
        if address is None or cfg.query_text is None or cfg.kb_spec is None:
            raise ConfigError(f"{cfg.id}: engine.backend process needs a socket broker, query.file and kb settings")
        ctx = multiprocessing.get_context("spawn")
        for i in range(cfg.engine_count):
            spec = {
                "broker": address, "id": cfg.id, "index": i, "engine": cfg.engine,
                "inputs": list(cfg.aggregator.input_topics), "output": cfg.output_topic,
                "query_text": cfg.query_text, "kb_spec": cfg.kb_spec, "log_level": log_level,
            }
            p = ctx.Process(target=_engine_process, args=(spec,), name=f"{cfg.id}.engine.{i}", daemon=True)
            p.start()
            handle.processes.append(p)
    else:
        for i in range(cfg.engine_count):
            worker = EngineWorker(broker, cfg, i)
            worker.subscribe()
            handle.engines.append(worker)
            handle._spawn(f"engine-{i}", worker.run)

    handle._spawn("publisher", handle.publisher.run)
    handle._spawn("aggregator", handle.aggregator.run)
    logger.info(
        "%s: %s → %s, %s windows, %d %s engine(s) on %s, kb %s",
        cfg.id, ",".join(cfg.aggregator.input_topics), cfg.output_topic, cfg.aggregator.window_kind,
        cfg.engine_count, cfg.engine, cfg.backend, cfg.kb_mode.describe(),
    )
    return handle
