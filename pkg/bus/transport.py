import json
import logging
import socket
import socketserver
import threading

from bus.broker import Broker, BusError
from layers.Wire_Codec import dumps
from utils.tools import broker_address, parse_address, retry_with_backoff

logger = logging.getLogger(__name__)

CONNECT_ATTEMPTS = 5


def _error(code, msg):
    return dumps({"op": "error", "code": code, "msg": msg})


class _BusHandler(socketserver.StreamRequestHandler):
    """One connection: any number of pub/group frames, at most one subscription."""

    def handle(self):
        broker = self.server.broker
        sub = None
        try:
            for raw in self.rfile:
                if not raw.strip():
                    continue
                try:
                    frame = json.loads(raw)
                    op = frame["op"]
                except (ValueError, KeyError, TypeError) as e:
                    self._send(_error("bad-request", f"unreadable frame: {e}"))
                    continue
                try:
                    reply, sub = self._dispatch(broker, op, frame, sub)
                except BusError as e:
                    reply = _error("bus", str(e))
                except (KeyError, TypeError, ValueError) as e:
                    reply = _error("bad-request", f"bad {op!r} frame: {e}")
                self._send(reply)
        except (ConnectionError, OSError):
            pass
        finally:
            if sub is not None:
                broker.unsubscribe(sub)

    def _dispatch(self, broker, op, frame, sub):
        if op == "pub":
            offset = broker.publish(frame["topic"], dumps(frame["payload"]))
            return dumps({"op": "pub-ok", "offset": offset}), sub
        if op == "group":
            start = broker.create_group(frame["topic"], frame["group"])
            return dumps({"op": "group-ok", "start": start}), sub
        if op == "sub":
            if sub is not None:
                raise BusError("connection already holds a subscription")
            sub = broker.subscribe(frame["topic"], frame["group"], frame["consumer"])
            return dumps({"op": "sub-ok", "start": sub.joined_at_offset}), sub
        if sub is None:
            raise BusError(f"{op!r} before sub")
        if op == "next":
            got = broker.next(sub, int(frame.get("timeout", 1000)))
            if got is None:
                return dumps({"op": "none"}), sub
            offset, payload = got
            return b'{"op":"msg","offset":%d,"payload":%s}' % (offset, payload), sub
        if op == "ack":
            broker.ack(sub, int(frame["offset"]))
            return dumps({"op": "ack-ok"}), sub
        if op == "unsub":
            broker.unsubscribe(sub)
            return dumps({"op": "unsub-ok"}), None
        raise BusError(f"unknown op {op!r}")

    def _send(self, reply):
        self.wfile.write(reply + b"\n")
        self.wfile.flush()


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class BrokerServer:
    """Serves a Broker over newline-delimited JSON frames."""

    def __init__(self, address="127.0.0.1:0", broker=None):
        self.broker = broker or Broker()
        self._server = _Server(parse_address(address), _BusHandler)
        self._server.broker = self.broker
        self.address = "%s:%d" % self._server.server_address[:2]
        self._thread = None

    def start(self):
        self._thread = threading.Thread(target=self._server.serve_forever, name=f"broker-{self.address}", daemon=True)
        self._thread.start()
        logger.info("broker listening on %s", self.address)
        return self

    def serve_forever(self):
        logger.info("broker listening on %s", self.address)
        self._server.serve_forever()

    def close(self):
        self.broker.close()
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


class _Connection:
    def __init__(self, address):
        host, port = parse_address(address)

        def connect():
            return socket.create_connection((host, port))

        try:
            self._sock = retry_with_backoff(connect, attempts=CONNECT_ATTEMPTS, what=f"connect to broker {address}")
        except OSError as e:
            raise BusError(f"broker {address} unreachable after {CONNECT_ATTEMPTS} attempts: {e}") from e
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._file = self._sock.makefile("rwb")
        self.address = address

    def call(self, frame: bytes):
        try:
            self._file.write(frame + b"\n")
            self._file.flush()
            line = self._file.readline()
        except OSError as e:
            raise BusError(f"lost connection to broker {self.address}: {e}") from e
        if not line:
            raise BusError(f"broker {self.address} closed the connection")
        reply = json.loads(line)
        if reply.get("op") == "error":
            raise BusError(f"broker {self.address}: {reply.get('code')}: {reply.get('msg')}")
        return reply, line

    def close(self):
        try:
            self._file.close()
            self._sock.close()
        except OSError:
            pass


class RemoteSubscription:
    """A subscription owning its own broker connection."""

    def __init__(self, address, topic, group_id, consumer_id):
        self.topic = topic
        self.group_id = group_id
        self.consumer_id = consumer_id
        self.closed = False
        self._conn = _Connection(address)
        reply, _ = self._conn.call(
            dumps({"op": "sub", "topic": topic, "group": group_id, "consumer": consumer_id})
        )
        self.joined_at_offset = reply["start"]

    def next(self, timeout_ms=1000):
        if self.closed:
            raise BusError(f"subscription {self.consumer_id!r} on {self.topic!r} is closed")
        reply, _ = self._conn.call(dumps({"op": "next", "timeout": timeout_ms}))
        if reply["op"] == "none":
            return None
        return reply["offset"], dumps(reply["payload"])

    def ack(self, offset):
        self._conn.call(dumps({"op": "ack", "offset": offset}))

    def close(self):
        if self.closed:
            return
        self.closed = True
        try:
            self._conn.call(dumps({"op": "unsub"}))
        except BusError:
            pass
        self._conn.close()


class RemoteBroker:
    """Client side of BrokerServer with the same surface as Broker."""

    def __init__(self, address=None):
        self.address = broker_address(address)
        self._conn = _Connection(self.address)
        self._lock = threading.Lock()

    def publish(self, topic, payload: bytes) -> int:
        frame = b'{"op":"pub","topic":%s,"payload":%s}' % (dumps(topic), payload)
        with self._lock:
            reply, _ = self._conn.call(frame)
        return reply["offset"]

    def create_group(self, topic, group_id) -> int:
        with self._lock:
            reply, _ = self._conn.call(dumps({"op": "group", "topic": topic, "group": group_id}))
        return reply["start"]

    def subscribe(self, topic, group_id, consumer_id):
        return RemoteSubscription(self.address, topic, group_id, consumer_id)

    def close(self):
        self._conn.close()


def connect(address=None) -> RemoteBroker:
    return RemoteBroker(address)
