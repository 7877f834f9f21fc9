import logging
import threading

from layers.Algebra import WindowResult
from layers.Query_AST import CONSTRUCT
from layers.RDF_Terms import GraphEvent, Term, TimestampedTriple, Triple
from layers.Wire_Codec import (
    encode_eos,
    encode_event,
    is_eos,
    loads,
    term_from_obj,
    term_to_obj,
    triple_from_obj,
    triple_to_obj,
)
from utils.metrics import Measurement

logger = logging.getLogger(__name__)

RESULT_NS = "http://dscep.example.org/result#"
GRAPH = "graph"
TRIPLE = "triple"


class ReorderOverflowError(RuntimeError):
    pass


class EngineFailure(RuntimeError):
    pass


def row_triples(row, projection):
    """A select row as triples on one blank node, one per bound projected variable."""
    node = Term.blank("row")
    return [Triple(node, Term.iri(RESULT_NS + name), row[name]) for name in projection if name in row]


def publish_results(result, operator_id, high_ts, fmt=GRAPH):
    """
    Output events for one window result; every triple is stamped with the
    window's high timestamp. A construct group or a select row becomes one
    graph event, or one event per triple with the triple format.
    """
    seq_no = result.window_seq
    if result.form == CONSTRUCT:
        groups = result.groups
    else:
        groups = [row_triples(r, result.projection) for r in result.solutions]
    if fmt == TRIPLE:
        return [TimestampedTriple(t, high_ts) for group in groups for t in group]
    return [
        GraphEvent.stamped(f"{operator_id}/{seq_no}/{i}", group, high_ts)
        for i, group in enumerate(groups)
        if group
    ]


def result_record(result, window, engine_id):
    """Engine → publisher record for one evaluated window."""
    record = {
        "result": result.window_seq,
        "engine": engine_id,
        "form": result.form,
        "triples": window.triple_count,
        "high_ts": window.high_ts,
        "eval_millis": result.eval_millis,
        "kb": result.kb_triples_touched,
        "projection": list(result.projection),
    }
    if result.form == CONSTRUCT:
        record["groups"] = [[triple_to_obj(t) for t in group] for group in result.groups]
    else:
        record["rows"] = [{k: term_to_obj(v) for k, v in row.items()} for row in result.solutions]
    return record


def error_record(seq_no, engine_id, error):
    return {"result": seq_no, "engine": engine_id, "error": f"{type(error).__name__}: {error}"}


def result_from_record(record) -> WindowResult:
    result = WindowResult(
        record["result"],
        record["form"],
        eval_millis=record["eval_millis"],
        kb_triples_touched=record["kb"],
        projection=tuple(record["projection"]),
    )
    if "groups" in record:
        result.groups = [[triple_from_obj(t) for t in group] for group in record["groups"]]
    else:
        result.solutions = [{k: term_from_obj(v, k) for k, v in row.items()} for row in record["rows"]]
    return result


class Publisher:
    """
    Emits engine results on the output topic in window order.

    Results from parallel engines arrive out of order and wait in a reorder
    buffer of ``capacity`` windows. A window's results are released once every
    earlier window has been emitted.
    """

    def __init__(self, broker, operator_id, results_topic, output_topic, capacity, fmt=GRAPH,
                 metrics=None, credits=None, health=None):
        self.broker = broker
        self.operator_id = operator_id
        self.results_topic = results_topic
        self.output_topic = output_topic
        self.capacity = capacity
        self.fmt = fmt
        self.metrics = metrics
        self.credits = credits
        self.health = health
        self.buffer = {}
        self.next_seq = 0
        self.total = None
        self.events_out = 0
        self._sub = None

    def subscribe(self):
        group = f"{self.operator_id}.publisher"
        self._sub = self.broker.subscribe(self.results_topic, group, group)

    def _emit(self, record):
        if "error" in record:
            raise EngineFailure(f"{self.operator_id}: window {record['result']} failed: {record['error']}")
        result = result_from_record(record)
        for event in publish_results(result, self.operator_id, record["high_ts"], self.fmt):
            self.broker.publish(self.output_topic, encode_event(event))
            self.events_out += 1
        if self.metrics is not None:
            self.metrics.record(Measurement(
                self.operator_id, record["result"], record["triples"],
                record["eval_millis"], record["kb"], record["engine"],
            ))
        if self.credits is not None:
            self.credits.release()

    def offer(self, record):
        """Buffer one result record and emit whatever is now in order."""
        seq = record["result"]
        if seq < self.next_seq or seq in self.buffer:
            raise ReorderOverflowError(f"{self.operator_id}: duplicate result for window {seq}")
        self.buffer[seq] = record
        if len(self.buffer) > self.capacity:
            raise ReorderOverflowError(
                f"{self.operator_id}: {len(self.buffer)} windows waiting for window {self.next_seq}, "
                f"capacity {self.capacity}"
            )
        while self.next_seq in self.buffer:
            self._emit(self.buffer.pop(self.next_seq))
            self.next_seq += 1

    @property
    def finished(self):
        return self.total is not None and self.next_seq >= self.total

    def run(self, stop: threading.Event):
        if self._sub is None:
            self.subscribe()
        while not stop.is_set() and not self.finished:
            got = self._sub.next(200)
            if got is None:
                if self.health is not None:
                    self.health()
                continue
            offset, payload = got
            record = loads(payload)
            self._sub.ack(offset)
            if is_eos(record):
                self.total = record["windows"]
                continue
            self.offer(record)
        if self.finished:
            self.broker.publish(self.output_topic, encode_eos())
            logger.info("%s: published %d events from %d windows, end of stream", self.operator_id,
                        self.events_out, self.total)

    def close(self):
        if self._sub is not None and not self._sub.closed:
            self._sub.close()
