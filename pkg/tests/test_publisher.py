import threading

import numpy as np
import pytest

from bus.broker import Broker
from conftest import iri, tweet
from layers.Algebra import WindowResult
from layers.Query_AST import CONSTRUCT, SELECT
from layers.RDF_Terms import TimestampedTriple, Triple
from layers.Wire_Codec import decode_event, dumps, encode_eos, is_eos, loads
from scep.publisher import (
    RESULT_NS,
    TRIPLE,
    EngineFailure,
    Publisher,
    ReorderOverflowError,
    error_record,
    publish_results,
    result_from_record,
    result_record,
    row_triples,
)
from scep.window import COUNT, AggregatorConfig, Window, cut_windows
from utils.metrics import MetricsSink


def construct_result(seq, n=1):
    groups = [[Triple(iri(f"t{seq}_{i}"), iri("p"), iri("o"))] for i in range(n)]
    return WindowResult(seq, CONSTRUCT, groups=groups)


def record(seq, n=1):
    window = Window.of(seq, [tweet(seq, ["alice"], ts=100 + seq)])
    return result_record(construct_result(seq, n), window, "op.engine.0")


def drain(broker, topic):
    sub = broker.subscribe(topic, "reader", "reader")
    out = []
    while True:
        got = sub.next(50)
        if got is None:
            return out
        out.append(loads(got[1]))


def test_select_row_becomes_one_blank_node():
    triples = row_triples({"a": iri("x"), "n": iri("y")}, ("a", "n", "missing"))
    assert [t.p.value for t in triples] == [RESULT_NS + "a", RESULT_NS + "n"]
    assert len({t.s for t in triples}) == 1


def test_results_are_stamped_with_window_high_ts():
    events = publish_results(construct_result(2, n=3), "op", 77)
    assert [e.graph_id for e in events] == ["op/2/0", "op/2/1", "op/2/2"]
    assert all(e.event_ts == 77 for e in events)
    singles = publish_results(construct_result(2, n=3), "op", 77, fmt=TRIPLE)
    assert all(isinstance(e, TimestampedTriple) and e.ts == 77 for e in singles)


def test_select_without_rows_publishes_nothing():
    assert publish_results(WindowResult(0, SELECT, projection=("a",)), "op", 1) == []


def test_record_keeps_result():
    result = WindowResult(0, SELECT, solutions=[{"a": iri("x")}], eval_millis=1.5, projection=("a",))
    back = result_from_record(result_record(result, Window.of(0, [tweet(0, ["alice"])]), "e"))
    assert back.solutions == result.solutions
    assert back.eval_millis == 1.5


def test_out_of_order_results_are_released_in_order():
    broker = Broker()
    broker.create_group("out", "reader")
    metrics = MetricsSink()
    publisher = Publisher(broker, "op", "op.results", "out", capacity=4, metrics=metrics)
    for seq in (2, 0, 3, 1):
        publisher.offer(record(seq))
    events = [decode_event(dumps(obj)) for obj in drain(broker, "out")]
    assert [e.graph_id for e in events] == ["op/0/0", "op/1/0", "op/2/0", "op/3/0"]
    assert [e.event_ts for e in events] == [100, 101, 102, 103]
    assert [m.window_seq for m in metrics.rows] == [0, 1, 2, 3]


def test_reorder_buffer_overflow():
    publisher = Publisher(Broker(), "op", "op.results", "out", capacity=2)
    publisher.offer(record(1))
    publisher.offer(record(2))
    with pytest.raises(ReorderOverflowError, match="capacity 2"):
        publisher.offer(record(3))


def test_duplicate_result_rejected():
    publisher = Publisher(Broker(), "op", "op.results", "out", capacity=4)
    publisher.offer(record(0))
    with pytest.raises(ReorderOverflowError, match="duplicate"):
        publisher.offer(record(0))


def test_engine_error_stops_the_publisher():
    publisher = Publisher(Broker(), "op", "op.results", "out", capacity=4)
    with pytest.raises(EngineFailure, match="window 0 failed"):
        publisher.offer(error_record(0, "op.engine.1", ValueError("boom")))


def test_run_ends_stream_after_last_window():
    broker = Broker()
    broker.create_group("out", "reader")
    credits = threading.Semaphore(0)
    publisher = Publisher(broker, "op", "op.results", "out", capacity=4, credits=credits)
    publisher.subscribe()
    broker.publish("op.results", dumps(record(1)))
    broker.publish("op.results", dumps(record(0)))
    broker.publish("op.results", encode_eos(windows=2))
    publisher.run(threading.Event())
    out = drain(broker, "out")
    assert is_eos(out[-1])
    assert len(out) == 3
    assert credits.acquire(blocking=False) and credits.acquire(blocking=False)


def check_output_timestamps_never_go_back(seed):
    rng = np.random.default_rng(seed)
    ts = np.cumsum(rng.integers(0, 4, size=25))
    events = [tweet(i, ["alice"], ts=100 + int(t)) for i, t in enumerate(ts)]
    windows = cut_windows(events, AggregatorConfig(("tweets",), COUNT, max_triples=int(rng.integers(4, 20))))
    records = [result_record(construct_result(w.seq_no, int(rng.integers(1, 3))), w, "op.engine.0") for w in windows]
    order = rng.permutation(len(records))
    broker = Broker()
    broker.create_group("out", "reader")
    publisher = Publisher(broker, "op", "op.results", "out", capacity=len(records))
    for i in order:
        publisher.offer(records[i])
    out = [decode_event(dumps(obj)) for obj in drain(broker, "out")]
    stamps = [e.event_ts for e in out]
    assert stamps == sorted(stamps)
    assert [int(e.graph_id.split("/")[1]) for e in out] == sorted(int(e.graph_id.split("/")[1]) for e in out)
    assert set(stamps) == {w.high_ts for w in windows}


@pytest.mark.parametrize("seed", range(5))
def test_output_timestamps_are_monotone(seed):
    check_output_timestamps_never_go_back(seed)


@pytest.mark.slow
def test_output_timestamps_are_monotone_many_streams():
    for seed in range(1000):
        check_output_timestamps_never_go_back(seed)
