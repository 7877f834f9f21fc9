import heapq
import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

from layers.RDF_Terms import GraphEvent, Term, TimestampedTriple, Triple
from layers.Wire_Codec import WireDecodeError, dumps, event_from_obj, event_to_obj, loads

logger = logging.getLogger(__name__)

COUNT = "count"
TIME = "time"
ALIGNED = "aligned"
WINDOW_KINDS = (COUNT, TIME, ALIGNED)

DEFAULT_MAX_TRIPLES = 1000


class OrderingError(RuntimeError):
    def __init__(self, message, topic):
        super().__init__(f"[{topic}] {message}")
        self.topic = topic


@dataclass(frozen=True)
class Window:
    seq_no: int
    events: Tuple[GraphEvent, ...]
    triple_count: int = 0
    low_ts: int = 0
    high_ts: int = 0

    @classmethod
    def of(cls, seq_no, events):
        events = tuple(events)
        if not events:
            return cls(seq_no, ())
        return cls(
            seq_no,
            events,
            sum(len(e) for e in events),
            min(e.event_ts for e in events),
            max(e.event_ts for e in events),
        )

    def triples(self):
        """Distinct plain triples; blank labels are prefixed per event so events never share a node."""
        out = {}
        for i, event in enumerate(self.events):
            for t in event.plain_triples():
                if t.s.is_blank or t.o.is_blank:
                    t = Triple(_scoped(t.s, i), t.p, _scoped(t.o, i))
                out.setdefault(t)
        return list(out)


def _scoped(term, i):
    return Term.blank(f"g{i}-{term.value}") if term.is_blank else term


@dataclass
class AggregatorConfig:
    input_topics: Tuple[str, ...]
    window_kind: str = COUNT
    max_triples: int = DEFAULT_MAX_TRIPLES
    width_ms: Optional[int] = None
    merge_buffer: int = 1024

    def __post_init__(self):
        self.input_topics = tuple(self.input_topics)
        assert self.input_topics, "an aggregator needs at least one input topic"
        assert self.window_kind in WINDOW_KINDS, f"unknown window kind {self.window_kind!r}"
        if self.window_kind == COUNT:
            assert self.max_triples and self.max_triples > 0, "window.max_triples must be positive"
        if self.window_kind == TIME:
            assert self.width_ms and self.width_ms > 0, "window.width_ms must be positive"
        assert self.merge_buffer > 0


def lift(event, topic, offset):
    """A bare timestamped triple becomes a one-triple graph event."""
    if isinstance(event, TimestampedTriple):
        return GraphEvent(f"{topic}/{offset}", (event,))
    return event


class StreamMerger:
    """
    k-way merge of monotone input streams.

    An event is released once every other input has either closed or shown
    a timestamp that guarantees nothing can still sort before it. Ties sort
    by topic name, then arrival.
    """

    def __init__(self, topics):
        self.topics = tuple(sorted(topics))
        self._heap = []
        self._arrival = itertools.count()
        self._last_ts = {t: None for t in self.topics}
        self._pending = {t: 0 for t in self.topics}
        self._closed = set()

    def push(self, topic, event):
        last = self._last_ts[topic]
        if last is not None and event.event_ts < last:
            raise OrderingError(
                f"timestamp went backwards: {event.event_ts} after {last} (graph {event.graph_id})", topic
            )
        self._last_ts[topic] = event.event_ts
        self._pending[topic] += 1
        heapq.heappush(self._heap, (event.event_ts, topic, next(self._arrival), event))
        return self.release()

    def close(self, topic):
        self._closed.add(topic)
        return self.release()

    @property
    def exhausted(self):
        return not self._heap and len(self._closed) == len(self.topics)

    def pending(self, topic):
        return self._pending[topic]

    def open_topics(self):
        return [t for t in self.topics if t not in self._closed]

    def _safe(self, ts, topic):
        for other in self.topics:
            if other == topic or other in self._closed:
                continue
            seen = self._last_ts[other]
            if seen is None or seen < ts or (seen == ts and other < topic):
                return False
        return True

    def release(self):
        out = []
        while self._heap:
            ts, topic, _, event = self._heap[0]
            if not self._safe(ts, topic):
                break
            heapq.heappop(self._heap)
            self._pending[topic] -= 1
            out.append(event)
        return out


def merge_order(inputs):
    """Merge ``{topic: events}`` the way an aggregator would see them arrive one by one."""
    merger = StreamMerger(inputs)
    out = []
    iters = {t: iter(events) for t, events in inputs.items()}
    while iters:
        for topic in sorted(iters):
            event = next(iters[topic], None)
            if event is None:
                del iters[topic]
                out.extend(merger.close(topic))
            else:
                out.extend(merger.push(topic, event))
    return out


class Windower:
    """Cuts an ordered event sequence into windows; never splits an event."""

    def __init__(self, config: AggregatorConfig, first_seq=0):
        self.config = config
        self.seq_no = first_seq
        self._events = []
        self._triples = 0
        self._key = None

    def _cut(self):
        window = Window.of(self.seq_no, self._events)
        self.seq_no += 1
        self._events, self._triples, self._key = [], 0, None
        return window

    def _key_of(self, event):
        if self.config.window_kind == TIME:
            return event.event_ts // self.config.width_ms
        return event.event_ts

    def add(self, event):
        out = []
        kind = self.config.window_kind
        if self._events:
            if kind == COUNT and self._triples + len(event) > self.config.max_triples:
                out.append(self._cut())
            elif kind in (TIME, ALIGNED) and self._key_of(event) != self._key:
                out.append(self._cut())
        self._events.append(event)
        self._triples += len(event)
        self._key = self._key_of(event)
        if kind == COUNT and self._triples >= self.config.max_triples:
            out.append(self._cut())
        return out

    def flush(self):
        return [self._cut()] if self._events else []


def cut_windows(events, config: AggregatorConfig):
    windower = Windower(config)
    out = []
    for event in events:
        out.extend(windower.add(event))
    out.extend(windower.flush())
    return out


# ---- window payloads ----

def encode_window(window: Window) -> bytes:
    return dumps({"seq": window.seq_no, "events": [event_to_obj(e) for e in window.events]})


def decode_window(obj) -> Window:
    if isinstance(obj, (bytes, bytearray, str)):
        obj = loads(obj)
    if "seq" not in obj:
        raise WireDecodeError("missing required field 'seq'", "seq")
    events = [event_from_obj(e) for e in obj.get("events", [])]
    return Window.of(int(obj["seq"]), events)
