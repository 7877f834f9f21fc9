import logging
import time
from dataclasses import dataclass

import pandas as pd

from layers.Wire_Codec import encode_eos, encode_event
from utils.tools import TokenBucket

logger = logging.getLogger(__name__)


@dataclass
class ReplayReport:
    events: int
    triples: int
    duration_s: float
    achieved_rate: float
    min_rolling_rate: float
    max_rolling_rate: float


def rolling_rates(times, counts, window_s=1.0):
    """Triples per second over a trailing window, sampled at every publish after the first full window."""
    if not times:
        return pd.Series(dtype=float)
    start = times[0]
    series = pd.Series(counts, index=pd.to_timedelta([t - start for t in times], unit="s"))
    rolled = series.rolling(f"{int(window_s * 1000)}ms").sum() / window_s
    return rolled[rolled.index >= pd.Timedelta(seconds=window_s)]


def replay(events, rate, topic, broker, eos=True, clock=time.perf_counter):
    """
    Publish ``events`` in order at ``rate`` triples per second (0 = as fast as
    possible), then an end-of-stream marker.
    """
    bucket = TokenBucket(rate)
    times, counts = [], []
    triples = 0
    start = clock()
    for event in events:
        size = len(event) if hasattr(event, "triples") else 1
        bucket.consume(size)
        broker.publish(topic, encode_event(event))
        times.append(clock())
        counts.append(size)
        triples += size
    duration = max(clock() - start, 1e-9)
    if eos:
        broker.publish(topic, encode_eos())
    rates = rolling_rates(times, counts)
    report = ReplayReport(
        events=len(counts),
        triples=triples,
        duration_s=duration,
        achieved_rate=triples / duration,
        min_rolling_rate=float(rates.min()) if len(rates) else triples / duration,
        max_rolling_rate=float(rates.max()) if len(rates) else triples / duration,
    )
    logger.info(
        "replayed %d events (%d triples) to %s in %.2fs, %.0f triples/s",
        report.events, report.triples, topic, report.duration_s, report.achieved_rate,
    )
    return report
