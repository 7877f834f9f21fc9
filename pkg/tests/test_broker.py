import threading

import pytest

from bus.broker import Broker, BusError
from bus.transport import BrokerServer, connect
from layers.Wire_Codec import dumps, loads


def drain(sub, out, lock, idle_ms=100):
    while True:
        got = sub.next(idle_ms)
        if got is None:
            return
        offset, payload = got
        with lock:
            out.append((sub.consumer_id, offset, loads(payload)["i"]))
        sub.ack(offset)


def check_exactly_once(k, n):
    broker = Broker()
    broker.create_group("t", "g")
    subs = [broker.subscribe("t", "g", f"c{i}") for i in range(k)]
    for i in range(n):
        broker.publish("t", dumps({"i": i}))
    out, lock = [], threading.Lock()
    threads = [threading.Thread(target=drain, args=(s, out, lock)) for s in subs]
    for t in threads:
        t.start()
    for t in threads:
        t.join(10)
    assert sorted(i for _, _, i in out) == list(range(n))
    assert sorted(offset for _, offset, _ in out) == list(range(n))
    assert broker.group_state("t", "g").in_flight == {}


@pytest.mark.parametrize("k", [1, 2, 4])
def test_group_delivers_each_message_exactly_once(k):
    check_exactly_once(k, 200)


@pytest.mark.slow
@pytest.mark.parametrize("trial", range(20))
def test_exactly_once_over_many_windows(trial):
    check_exactly_once((1, 2, 4, 8)[trial % 4], 1000)


def test_groups_are_independent():
    broker = Broker()
    a = broker.subscribe("t", "ga", "c")
    b = broker.subscribe("t", "gb", "c")
    broker.publish("t", b"1")
    assert a.next(100)[0] == 0
    assert b.next(100)[0] == 0


def test_group_created_late_skips_earlier_messages():
    broker = Broker()
    broker.publish("t", b"early")
    sub = broker.subscribe("t", "g", "c")
    assert sub.joined_at_offset == 1
    assert sub.next(50) is None
    broker.publish("t", b"late")
    assert sub.next(100) == (1, b"late")


def test_duplicate_consumer_rejected():
    broker = Broker()
    broker.subscribe("t", "g", "c")
    with pytest.raises(BusError, match="already in group"):
        broker.subscribe("t", "g", "c")


def test_double_ack_rejected():
    broker = Broker()
    sub = broker.subscribe("t", "g", "c")
    broker.publish("t", b"x")
    offset, _ = sub.next(100)
    sub.ack(offset)
    with pytest.raises(BusError, match="not in flight"):
        sub.ack(offset)


def test_ack_by_other_member_rejected():
    broker = Broker()
    a = broker.subscribe("t", "g", "a")
    b = broker.subscribe("t", "g", "b")
    broker.publish("t", b"x")
    offset, _ = a.next(100)
    with pytest.raises(BusError):
        b.ack(offset)


def test_closed_subscription_cannot_pull():
    broker = Broker()
    sub = broker.subscribe("t", "g", "c")
    sub.close()
    with pytest.raises(BusError, match="closed"):
        sub.next(10)
    assert "c" not in broker.group_state("t", "g").members


def test_next_times_out():
    broker = Broker()
    sub = broker.subscribe("t", "g", "c")
    assert sub.next(20) is None


@pytest.fixture
def server():
    srv = BrokerServer().start()
    yield srv
    srv.close()


def test_remote_publish_and_pull(server):
    producer = connect(server.address)
    try:
        assert producer.create_group("t", "g") == 0
        sub = producer.subscribe("t", "g", "c")
        assert producer.publish("t", dumps({"i": 7})) == 0
        offset, payload = sub.next(1000)
        assert offset == 0
        assert loads(payload) == {"i": 7}
        sub.ack(offset)
        assert server.broker.group_state("t", "g").in_flight == {}
        sub.close()
        assert server.broker.group_state("t", "g").members == set()
    finally:
        producer.close()


@pytest.mark.parametrize("k", [2, 4])
def test_remote_group_exactly_once(server, k):
    producer = connect(server.address)
    producer.create_group("t", "g")
    subs = [producer.subscribe("t", "g", f"c{i}") for i in range(k)]
    for i in range(100):
        producer.publish("t", dumps({"i": i}))
    out, lock = [], threading.Lock()
    threads = [threading.Thread(target=drain, args=(s, out, lock, 300)) for s in subs]
    for t in threads:
        t.start()
    for t in threads:
        t.join(20)
    for s in subs:
        s.close()
    producer.close()
    assert sorted(i for _, _, i in out) == list(range(100))


def test_remote_errors_surface_as_bus_errors(server):
    producer = connect(server.address)
    try:
        producer.subscribe("t", "g", "c")
        with pytest.raises(BusError, match="already in group"):
            producer.subscribe("t", "g", "c")
    finally:
        producer.close()


def test_unreachable_broker():
    with pytest.raises(BusError, match="unreachable"):
        connect("127.0.0.1:1")
