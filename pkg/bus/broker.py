import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set

logger = logging.getLogger(__name__)


class BusError(RuntimeError):
    pass


class Topic:
    """Append-only message log; offsets are list indexes."""

    def __init__(self, name: str):
        self.name = name
        self.messages: List[bytes] = []

    def append(self, payload: bytes) -> int:
        self.messages.append(bytes(payload))
        return len(self.messages) - 1

    def __len__(self):
        return len(self.messages)


@dataclass
class ConsumerGroup:
    group_id: str
    topic: str
    start: int
    next_offset: int
    members: Set[str] = field(default_factory=set)
    in_flight: Dict[int, str] = field(default_factory=dict)


@dataclass
class Subscription:
    consumer_id: str
    topic: str
    group_id: str
    joined_at_offset: int
    broker: Optional["Broker"] = field(default=None, repr=False, compare=False)
    closed: bool = False

    def next(self, timeout_ms=1000):
        return self.broker.next(self, timeout_ms)

    def ack(self, offset):
        self.broker.ack(self, offset)

    def close(self):
        self.broker.unsubscribe(self)


class Broker:
    """
    In-process pub/sub with consumer groups.

    Every topic has a single partition. Within a group each offset goes to
    exactly one member (pull, lowest unclaimed first); groups are isolated
    from each other. A group starts at the topic length when it is created,
    so nothing published before it existed is ever delivered to it.
    """

    def __init__(self):
        self._cond = threading.Condition()
        self._topics: Dict[str, Topic] = {}
        self._groups: Dict[tuple, ConsumerGroup] = {}
        self._closed = False

    def _topic(self, name):
        if name not in self._topics:
            self._topics[name] = Topic(name)
        return self._topics[name]

    def _group(self, topic, group_id):
        key = (topic, group_id)
        if key not in self._groups:
            start = len(self._topic(topic))
            self._groups[key] = ConsumerGroup(group_id, topic, start, start)
            logger.debug("group %s on %s starts at offset %d", group_id, topic, start)
        return self._groups[key]

    def publish(self, topic: str, payload: bytes) -> int:
        with self._cond:
            offset = self._topic(topic).append(payload)
            self._cond.notify_all()
        return offset

    def create_group(self, topic: str, group_id: str) -> int:
        """Declare a group ahead of its members; returns the offset it starts from."""
        with self._cond:
            return self._group(topic, group_id).start

    def subscribe(self, topic: str, group_id: str, consumer_id: str) -> Subscription:
        with self._cond:
            if self._closed:
                raise BusError("broker is closed")
            group = self._group(topic, group_id)
            if consumer_id in group.members:
                raise BusError(f"consumer {consumer_id!r} already in group {group_id!r} on {topic!r}")
            group.members.add(consumer_id)
            return Subscription(consumer_id, topic, group_id, group.start, broker=self)

    def next(self, sub: Subscription, timeout_ms=1000):
        """Claim the group's lowest undelivered offset; None when nothing arrives in time."""
        deadline = time.monotonic() + max(timeout_ms, 0) / 1000.0
        with self._cond:
            if sub.closed:
                raise BusError(f"subscription {sub.consumer_id!r} on {sub.topic!r} is closed")
            group = self._groups[(sub.topic, sub.group_id)]
            topic = self._topics[sub.topic]
            while group.next_offset >= len(topic):
                remaining = deadline - time.monotonic()
                if remaining <= 0 or self._closed or sub.closed:
                    return None
                self._cond.wait(remaining)
            offset = group.next_offset
            group.next_offset += 1
            group.in_flight[offset] = sub.consumer_id
            return offset, topic.messages[offset]

    def ack(self, sub: Subscription, offset: int):
        with self._cond:
            group = self._groups[(sub.topic, sub.group_id)]
            if group.in_flight.get(offset) != sub.consumer_id:
                raise BusError(
                    f"offset {offset} is not in flight for {sub.consumer_id!r} in group {sub.group_id!r}"
                )
            del group.in_flight[offset]

    def unsubscribe(self, sub: Subscription):
        with self._cond:
            if sub.closed:
                return
            sub.closed = True
            group = self._groups.get((sub.topic, sub.group_id))
            if group is not None:
                group.members.discard(sub.consumer_id)
            self._cond.notify_all()

    def topic_length(self, topic: str) -> int:
        with self._cond:
            return len(self._topic(topic))

    def group_state(self, topic: str, group_id: str) -> ConsumerGroup:
        with self._cond:
            group = self._groups[(topic, group_id)]
            return ConsumerGroup(
                group.group_id, group.topic, group.start, group.next_offset,
                set(group.members), dict(group.in_flight),
            )

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()
