import math
import random
import statistics

import pytest

from mmpaxos.bench.experiments import (activation_delays, ablation_experiment, leader_options,
                                       max_latency_after, reconfig_experiment, run_sim,
                                       zero_throughput_gaps)
from mmpaxos.bench.metrics import (CSV_HEADER, MetricsRow, compare_windows, read_csv,
                                   summarize, windows, write_csv)


def test_csv_header_is_stable(tmp_path):
    assert CSV_HEADER == ["window_start", "median_latency", "p95_latency", "iqr_latency",
                          "stdev_latency", "max_latency", "throughput"]
    path = tmp_path / "m.csv"
    write_csv([], path)
    assert path.read_text().strip() == ",".join(CSV_HEADER)


def _pct(xs, q):
    # linear interpolation between closest ranks
    xs = sorted(xs)
    pos = (len(xs) - 1) * q
    lo = math.floor(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def _oracle_windows(latencies, start, end, width, step):
    out = []
    for w0 in range(start, max(end - width, start) + 1, step):
        sample = [lat for t, lat in latencies if w0 <= t < w0 + width]
        if not sample:
            out.append((w0, None, 0.0))
            continue
        out.append((w0, (_pct(sample, 0.5), _pct(sample, 0.95), _pct(sample, 0.75) - _pct(sample, 0.25),
                         statistics.pstdev(sample), max(sample)), len(sample) * 1000 / width))
    return out


def test_windows_match_plain_python_oracle():
    rng = random.Random(5)
    lat = [(rng.randrange(0, 5000), rng.randrange(1, 50)) for _ in range(800)]
    lat += [(t, 3) for t in range(6000, 6100)]
    rows = windows(lat, 0, 8000, 1000, 250)
    expected = _oracle_windows(lat, 0, 8000, 1000, 250)
    assert len(rows) == len(expected)
    for row, (w0, stats, tput) in zip(rows, expected):
        assert row.window_start == w0 and row.throughput == pytest.approx(tput)
        if stats is None:
            assert math.isnan(row.median_latency)
        else:
            got = (row.median_latency, row.p95_latency, row.iqr_latency, row.stdev_latency,
                   row.max_latency)
            assert got == pytest.approx(stats)


def test_csv_roundtrip_and_self_compare(tmp_path):
    rows = windows([(t, 5 + t % 7) for t in range(0, 6000, 3)], 0, 6000)
    path = tmp_path / "m.csv"
    write_csv(rows, path)
    assert read_csv(path) == rows
    d = compare_windows(str(path), (0, 3000), (0, 3000))
    assert (d.median, d.iqr, d.stdev, d.throughput) == (0, 0, 0, 0)
    assert d.within(0.0)


def test_compare_detects_change_and_insufficient_samples():
    lat = [(t, 10) for t in range(0, 5000, 5)] + [(t, 20) for t in range(5000, 10000, 10)]
    rows = windows(lat, 0, 10000)
    d = compare_windows(rows, (0, 4000), (5000, 9000))
    assert d.median == pytest.approx(1.0) and d.throughput == pytest.approx(-0.5)
    assert not d.within(0.1)
    short = compare_windows(rows, (0, 500), (5000, 9000))
    assert short.insufficient and not short.within(10)


def test_summarize_empty_phase():
    s = summarize([], 0, 1000)
    assert s.samples == 0 and s.throughput == 0.0 and math.isnan(s.median)


def test_derived_measurements():
    lat = [(100, 5), (150, 30), (700, 1)]
    assert max_latency_after(lat, [0, 200], 500) == [30, 0]
    assert zero_throughput_gaps(lat, [0], 1000) == [550]
    r = ("r", 1)
    obs = [(10, "round_config", "l1", "log", r, None), (12, "propose", "l1", "log", 0, r, "x")]
    assert activation_delays(obs, [10, 20]) == [2, None]


def test_option_sets():
    assert not leader_options("none").gc
    o = leader_options("proactive,bypass,gc")
    assert o.proactive and o.bypass and o.gc and not o.thrifty
    with pytest.raises(ValueError):
        leader_options("fast")


def test_experiment_scripts():
    exp = reconfig_experiment()
    kinds = [e.kind for e in exp.events]
    assert kinds.count("reconfigure") == 10 and kinds[-2:] == ["fail", "replace"]
    assert exp.events[-1].t - exp.events[-2].t == 5000
    assert reconfig_experiment(replace_after=2000).events[-1].t == 27000
    abl = ablation_experiment("gc+bypass")
    assert len(abl.events) == 5 and abl.extra_delay == {"Phase1B": 250, "MatchB": 250}


def test_sim_reconfig_run_is_flat():
    exp = reconfig_experiment(duration=22000)
    result = run_sim(exp)
    d = compare_windows(result.rows, exp.phases["quiet"], exp.phases["reconfig"])
    assert d.within(0.10)
    q = result.info["queued"]
    assert q["reconfig:end"] - q["reconfig:start"] == 0
