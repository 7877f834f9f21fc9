import logging
import threading

from layers.Wire_Codec import encode_eos, event_from_obj, is_eos, loads
from scep.window import StreamMerger, Windower, encode_window, lift

logger = logging.getLogger(__name__)


class Aggregator:
    """
    Subscribes to the input topics, merges and orders their events, cuts
    windows and publishes them on ``window_topic``.

    On end of stream it flushes the last window, publishes one EOS per
    consumer on the window topic and, when ``control_topic`` is set, an
    ``{"op": "eos", "windows": N}`` record there.
    """

    def __init__(self, broker, node_id, config, window_topic, consumers, control_topic=None, credits=None):
        self.broker = broker
        self.node_id = node_id
        self.config = config
        self.window_topic = window_topic
        self.consumers = consumers
        self.control_topic = control_topic
        self.credits = credits
        self.merger = StreamMerger(config.input_topics)
        self.windower = Windower(config)
        self.windows_published = 0
        self.events_in = 0
        self._subs = {}

    def subscribe(self):
        group = f"{self.node_id}.aggregator"
        for topic in self.config.input_topics:
            self._subs[topic] = self.broker.subscribe(topic, group, f"{group}.{topic}")

    def _dispatch(self, windows, stop):
        for window in windows:
            if self.credits is not None:
                while not self.credits.acquire(timeout=0.2):
                    if stop.is_set():
                        return
            self.broker.publish(self.window_topic, encode_window(window))
            self.windows_published += 1

    def _poll(self, topic, timeout_ms):
        sub = self._subs[topic]
        got = sub.next(timeout_ms)
        if got is None:
            return []
        offset, payload = got
        obj = loads(payload)
        sub.ack(offset)
        if is_eos(obj):
            logger.info("%s: end of stream on %s", self.node_id, topic)
            sub.close()
            return self.merger.close(topic)
        self.events_in += 1
        return self.merger.push(topic, lift(event_from_obj(obj), topic, offset))

    def run(self, stop: threading.Event):
        if not self._subs:
            self.subscribe()
        while not stop.is_set() and not self.merger.exhausted:
            open_topics = self.merger.open_topics()
            timeout = 200 if len(open_topics) == 1 else 20
            for topic in open_topics:
                if self.merger.pending(topic) >= self.config.merge_buffer:
                    continue
                for event in self._poll(topic, timeout):
                    self._dispatch(self.windower.add(event), stop)
        if stop.is_set():
            return
        self._dispatch(self.windower.flush(), stop)
        for _ in range(self.consumers):
            self.broker.publish(self.window_topic, encode_eos())
        if self.control_topic is not None:
            self.broker.publish(self.control_topic, encode_eos(windows=self.windows_published))
        logger.info(
            "%s: aggregator done, %d events in %d windows", self.node_id, self.events_in, self.windows_published
        )

    def close(self):
        for sub in self._subs.values():
            if not sub.closed:
                sub.close()
