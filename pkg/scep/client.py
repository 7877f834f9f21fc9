import csv
import logging
import os
import threading

from layers.Wire_Codec import is_eos, loads
from scep.aggregator import Aggregator
from scep.window import AggregatorConfig, decode_window
from utils.metrics import result_digest

logger = logging.getLogger(__name__)


class CollectingSink:
    """Keeps every window it is given; thread-safe."""

    def __init__(self):
        self.windows = []
        self._lock = threading.Lock()

    def __call__(self, window, script_id):
        with self._lock:
            self.windows.append(window)

    def ordered(self):
        with self._lock:
            return sorted(self.windows, key=lambda w: w.seq_no)

    def events(self):
        return [e for w in self.ordered() for e in w.events]

    def digest(self):
        return result_digest(self.events())


class CsvWindowSink:
    HEADER = ["seq_no", "events", "triples", "low_ts", "high_ts", "script_id"]

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._file = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._file)
        self._writer.writerow(self.HEADER)

    def __call__(self, window, script_id):
        with self._lock:
            self._writer.writerow(
                [window.seq_no, len(window.events), window.triple_count, window.low_ts, window.high_ts, script_id]
            )
            self._file.flush()

    def close(self):
        with self._lock:
            self._file.close()


class _Script:
    def __init__(self, broker, client_id, index, sink):
        self.script_id = f"{client_id}.script.{index}"
        self.sink = sink
        self.windows = 0
        self._sub = broker.subscribe(f"{client_id}.windows", f"{client_id}.scripts", self.script_id)

    def run(self, stop):
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
                    self.sink(window, self.script_id)
                except Exception:
                    logger.warning("%s: sink failed on window %d", self.script_id, window.seq_no, exc_info=True)
                self._sub.ack(offset)
                self.windows += 1
        finally:
            if not self._sub.closed:
                self._sub.close()


class ClientHandle:
    def __init__(self, client_id, sink):
        self.client_id = client_id
        self.sink = sink
        self.stop_event = threading.Event()
        self.errors = []
        self.threads = []
        self.scripts = []
        self.aggregator = None

    def _spawn(self, name, target):
        def body():
            try:
                target(self.stop_event)
            except Exception as e:
                logger.exception("%s: %s failed", self.client_id, name)
                self.errors.append(e)
                self.stop_event.set()

        thread = threading.Thread(target=body, name=f"{self.client_id}-{name}", daemon=True)
        self.threads.append(thread)
        thread.start()

    def stop(self):
        self.stop_event.set()

    def join(self, timeout=None):
        for thread in self.threads:
            thread.join(timeout)
        if self.errors:
            raise self.errors[0]
        return self

    def alive(self):
        return any(t.is_alive() for t in self.threads)

    def close(self, timeout=5):
        self.stop()
        for thread in self.threads:
            thread.join(timeout)


def run_client(topics, script_count, sink, broker, client_id="client", window=None) -> ClientHandle:
    """
    Merge, order and window ``topics`` like an operator would, and hand each
    window to one of ``script_count`` scripts, which call ``sink(window, script_id)``.
    """
    config = window or AggregatorConfig(tuple(topics))
    if tuple(config.input_topics) != tuple(topics):
        config = AggregatorConfig(
            tuple(topics), config.window_kind, config.max_triples, config.width_ms, config.merge_buffer
        )
    handle = ClientHandle(client_id, sink)
    broker.create_group(f"{client_id}.windows", f"{client_id}.scripts")
    handle.aggregator = Aggregator(broker, client_id, config, f"{client_id}.windows", script_count)
    handle.aggregator.subscribe()
    for i in range(script_count):
        script = _Script(broker, client_id, i, sink)
        handle.scripts.append(script)
        handle._spawn(f"script-{i}", script.run)
    handle._spawn("aggregator", handle.aggregator.run)
    logger.info("%s: %d script(s) on %s", client_id, script_count, ",".join(config.input_topics))
    return handle
