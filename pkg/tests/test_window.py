import numpy as np
import pytest

from conftest import iri
from layers.RDF_Terms import GraphEvent, Triple
from layers.Wire_Codec import WireDecodeError
from scep.window import (
    ALIGNED,
    COUNT,
    TIME,
    AggregatorConfig,
    OrderingError,
    StreamMerger,
    Window,
    Windower,
    cut_windows,
    decode_window,
    encode_window,
    merge_order,
)


def event(name, ts, size=1):
    triples = [Triple(iri(name), iri("p"), iri(f"o{k}")) for k in range(size)]
    return GraphEvent.stamped(name, triples, ts)


def random_streams(seed, topics=("a", "b", "c"), n=30):
    rng = np.random.default_rng(seed)
    out = {}
    for topic in topics:
        ts = np.cumsum(rng.integers(0, 3, size=n))
        out[topic] = [event(f"{topic}{i}", int(t), int(rng.integers(1, 4))) for i, t in enumerate(ts)]
    return out


def test_ties_sort_by_topic_name():
    inputs = {"b": [event("b0", 1), event("b1", 3)], "a": [event("a0", 1), event("a1", 2)]}
    assert [e.graph_id for e in merge_order(inputs)] == ["a0", "b0", "a1", "b1"]


def check_merge(seed):
    inputs = random_streams(seed)
    merged = merge_order(inputs)
    expected = sorted(
        (e for events in inputs.values() for e in events),
        key=lambda e: (e.event_ts, e.graph_id[0], int(e.graph_id[1:])),
    )
    assert [e.graph_id for e in merged] == [e.graph_id for e in expected]


@pytest.mark.parametrize("seed", range(5))
def test_merge_is_total_and_ordered(seed):
    check_merge(seed)


@pytest.mark.slow
def test_merge_is_total_and_ordered_many_streams():
    for seed in range(1000):
        check_merge(seed)


def test_merger_waits_for_slow_topic():
    merger = StreamMerger(["a", "b"])
    assert merger.push("a", event("a0", 5)) == []
    assert merger.push("b", event("b0", 3)) == [event("b0", 3)]
    assert merger.pending("a") == 1
    assert [e.graph_id for e in merger.close("b")] == ["a0"]
    assert not merger.exhausted
    merger.close("a")
    assert merger.exhausted


def test_timestamp_going_backwards_is_an_error():
    merger = StreamMerger(["a"])
    merger.push("a", event("a0", 5))
    with pytest.raises(OrderingError) as info:
        merger.push("a", event("a1", 4))
    assert info.value.topic == "a"


def check_count_windows(seed):
    events = merge_order(random_streams(seed))
    windows = cut_windows(events, AggregatorConfig(("a", "b", "c"), COUNT, max_triples=7))
    assert [w.seq_no for w in windows] == list(range(len(windows)))
    assert [e for w in windows for e in w.events] == events
    for w in windows:
        assert w.triple_count <= 7 or len(w.events) == 1
    for w in windows[:-1]:
        assert w.triple_count + 3 > 7 or w.triple_count >= 7


@pytest.mark.parametrize("seed", range(5))
def test_count_windows_partition_the_stream(seed):
    check_count_windows(seed)


@pytest.mark.slow
def test_count_windows_partition_many_streams():
    for seed in range(1000):
        check_count_windows(seed)


def check_events_stay_whole(seed):
    events = merge_order(random_streams(seed))
    by_id = {e.graph_id: e for e in events}
    for config in (
        AggregatorConfig(("a", "b", "c"), COUNT, max_triples=5),
        AggregatorConfig(("a", "b", "c"), TIME, width_ms=4),
        AggregatorConfig(("a", "b", "c"), ALIGNED),
    ):
        windows = cut_windows(events, config)
        seen = [e.graph_id for w in windows for e in w.events]
        assert sorted(seen) == sorted(by_id)
        for w in windows:
            assert all(e == by_id[e.graph_id] for e in w.events)
            assert w.triple_count == sum(len(e) for e in w.events)
        highs = [w.high_ts for w in windows]
        assert highs == sorted(highs)
        assert all(a.high_ts <= b.low_ts for a, b in zip(windows, windows[1:]))


@pytest.mark.parametrize("seed", range(5))
def test_events_are_never_split_across_windows(seed):
    check_events_stay_whole(seed)


@pytest.mark.slow
def test_events_are_never_split_many_streams():
    for seed in range(1000):
        check_events_stay_whole(seed)


def test_oversized_event_gets_its_own_window():
    config = AggregatorConfig(("a",), COUNT, max_triples=3)
    windows = cut_windows([event("e0", 1), event("e1", 2, size=5), event("e2", 3)], config)
    assert [[e.graph_id for e in w.events] for w in windows] == [["e0"], ["e1"], ["e2"]]
    assert windows[1].triple_count == 5


def test_count_window_cuts_when_full():
    windower = Windower(AggregatorConfig(("a",), COUNT, max_triples=2))
    assert windower.add(event("e0", 1)) == []
    full = windower.add(event("e1", 1))
    assert len(full) == 1 and full[0].triple_count == 2
    assert windower.flush() == []


def test_time_windows_follow_width():
    config = AggregatorConfig(("a",), TIME, width_ms=10)
    windows = cut_windows([event(f"e{t}", t) for t in (0, 4, 9, 10, 25, 29)], config)
    assert [[e.event_ts for e in w.events] for w in windows] == [[0, 4, 9], [10], [25, 29]]
    assert (windows[0].low_ts, windows[0].high_ts) == (0, 9)


def test_aligned_windows_cut_on_timestamp_change():
    config = AggregatorConfig(("a", "b"), ALIGNED)
    events = merge_order({"a": [event("a0", 1), event("a1", 2)], "b": [event("b0", 1), event("b1", 2)]})
    windows = cut_windows(events, config)
    assert [[e.graph_id for e in w.events] for w in windows] == [["a0", "b0"], ["a1", "b1"]]


def test_window_triples_are_distinct():
    e = event("x", 1)
    window = Window.of(0, [e, GraphEvent.stamped("y", e.plain_triples(), 2)])
    assert window.triple_count == 2
    assert window.triples() == e.plain_triples()


def test_window_payload_needs_sequence_number():
    window = Window.of(4, [event("e0", 1, size=2)])
    assert decode_window(encode_window(window)) == window
    with pytest.raises(WireDecodeError):
        decode_window({"events": []})


def test_invalid_configs_rejected():
    with pytest.raises(AssertionError):
        AggregatorConfig((), COUNT)
    with pytest.raises(AssertionError):
        AggregatorConfig(("a",), TIME)
