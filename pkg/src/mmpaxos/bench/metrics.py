"""Windowed latency and throughput metrics."""
from __future__ import annotations

import csv
import logging
from dataclasses import astuple, dataclass, fields

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsRow:
    window_start: int  # ms
    median_latency: float
    p95_latency: float
    iqr_latency: float
    stdev_latency: float
    max_latency: float
    throughput: float  # commands per second


CSV_HEADER = [f.name for f in fields(MetricsRow)]


def windows(latencies, start: int, end: int, width: int = 1000, step: int = 250):
    """Sliding windows over ``latencies`` [(reply time, latency)], all in ms.

    A command belongs to the window in which its reply arrived. Empty
    windows report NaN latencies and zero throughput.
    """
    if not latencies:
        t = np.empty(0)
        lat = np.empty(0)
    else:
        arr = np.asarray(latencies, dtype=float)
        order = np.argsort(arr[:, 0], kind="stable")
        t, lat = arr[order, 0], arr[order, 1]
    rows = []
    for w0 in range(start, max(end - width, start) + 1, step):
        lo, hi = np.searchsorted(t, [w0, w0 + width], side="left")
        sample = lat[lo:hi]
        tput = len(sample) * 1000.0 / width
        if len(sample):
            q1, med, q3, p95 = np.percentile(sample, [25, 50, 75, 95])
            rows.append(MetricsRow(w0, float(med), float(p95), float(q3 - q1),
                                   float(np.std(sample)), float(sample.max()), tput))
        else:
            nan = float("nan")
            rows.append(MetricsRow(w0, nan, nan, nan, nan, nan, 0.0))
    return rows


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(astuple(r))


def read_csv(path) -> list:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        return [MetricsRow(int(float(r[0])), *map(float, r[1:])) for r in reader]


@dataclass(frozen=True)
class PhaseSummary:
    samples: int
    median: float
    iqr: float
    stdev: float
    throughput: float  # median of per-window throughput


def summarize(latencies, start: int, end: int, width: int = 1000, step: int = 250):
    lat = np.asarray([l for t, l in latencies if start <= t < end], dtype=float)
    rows = windows(latencies, start, end, width, step)
    tput = float(np.median([r.throughput for r in rows])) if rows else 0.0
    if not len(lat):
        nan = float("nan")
        return PhaseSummary(0, nan, nan, nan, tput)
    q1, med, q3 = np.percentile(lat, [25, 50, 75])
    return PhaseSummary(len(lat), float(med), float(q3 - q1), float(np.std(lat)), tput)


@dataclass(frozen=True)
class DeltaReport:
    median: float  # relative change of the median of window medians
    iqr: float
    stdev: float
    throughput: float
    windows_a: int
    windows_b: int
    insufficient: bool

    def within(self, bound: float) -> bool:
        return (not self.insufficient and abs(self.median) <= bound
                and abs(self.throughput) <= bound)


def _rel(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if a == 0 or np.isnan(a) or np.isnan(b):
        return float("inf")
    return (b - a) / a


def compare_windows(rows, phase_a, phase_b, min_windows: int = 3) -> DeltaReport:
    """Relative change from phase ``a`` to phase ``b``.

    ``rows`` is a list of MetricsRow or a CSV path; phases are (start, end)
    in ms and select the windows that lie entirely inside them.
    """
    if not isinstance(rows, list):
        rows = read_csv(rows)

    def pick(phase):
        s, e = phase
        return [r for r in rows if r.window_start >= s and r.window_start < e
                and not np.isnan(r.median_latency)]

    a, b = pick(phase_a), pick(phase_b)
    insufficient = len(a) < min_windows or len(b) < min_windows
    if insufficient:
        logger.warning("compare_windows: %d and %d windows", len(a), len(b))
    if not a or not b:
        inf = float("inf")
        return DeltaReport(inf, inf, inf, inf, len(a), len(b), True)

    def med(rs, attr):
        return float(np.median([getattr(r, attr) for r in rs]))

    return DeltaReport(
        _rel(med(a, "median_latency"), med(b, "median_latency")),
        _rel(med(a, "iqr_latency"), med(b, "iqr_latency")),
        _rel(med(a, "stdev_latency"), med(b, "stdev_latency")),
        _rel(med(a, "throughput"), med(b, "throughput")),
        len(a), len(b), insufficient)
