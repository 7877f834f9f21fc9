import logging
import os
import time

logger = logging.getLogger(__name__)

DEFAULT_BROKER = "127.0.0.1:9092"


class ConfigError(ValueError):
    pass


class dotdict(dict):
    """dot.notation access to dictionary attributes"""

    __getattr__ = dict.get
    __setattr__ = dict.__setitem__
    __delattr__ = dict.__delitem__


def parse_address(address):
    """Split ``host:port``; a bare ``:port`` binds loopback."""
    if isinstance(address, tuple):
        return address
    host, sep, port = str(address).rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {address!r}")
    return host or "127.0.0.1", int(port)


def broker_address(flag=None):
    """--broker wins over DSCEP_BROKER, which wins over the default."""
    return flag or os.environ.get("DSCEP_BROKER") or DEFAULT_BROKER


def retry_with_backoff(fn, attempts=5, base_delay=0.1, exceptions=(OSError,), what="operation"):
    """Call ``fn`` until it succeeds, doubling the delay between tries; re-raise the last failure."""
    delay = base_delay
    for attempt in range(1, attempts + 1):
        try:
            return fn()
        except exceptions as e:
            if attempt == attempts:
                raise
            logger.warning("%s failed (attempt %d/%d): %s; retrying in %.2fs", what, attempt, attempts, e, delay)
            time.sleep(delay)
            delay *= 2


class TokenBucket:
    """
    Pacing at ``rate`` units per second with a burst of ``capacity`` units.

    ``consume`` may drive the bucket negative (an event larger than the burst)
    and then sleeps the debt off, so the long-run rate stays exact.
    A rate of 0 disables pacing.
    """

    def __init__(self, rate, capacity=None, clock=time.perf_counter, sleep=time.sleep):
        self.rate = float(rate)
        self.capacity = float(capacity if capacity is not None else max(self.rate / 100.0, 1.0))
        self.clock = clock
        self.sleep = sleep
        self.tokens = self.capacity
        self.last = clock()

    def consume(self, n):
        if self.rate <= 0:
            return 0.0
        now = self.clock()
        self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
        self.last = now
        self.tokens -= n
        if self.tokens >= 0:
            return 0.0
        wait = -self.tokens / self.rate
        self.sleep(wait)
        return wait
