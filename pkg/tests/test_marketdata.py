import gzip
import zipfile
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fxdrqn.marketdata import (
    BAR_MS, AlignedDataset, AlignmentError, Bar, ParseError, TickRecord, align, ingest_directory,
    load_dataset, parse_tick_line, read_ticks, resample, save_dataset, synthetic_random_walk,
)

T0 = int(datetime(2012, 1, 2, tzinfo=timezone.utc).timestamp() * 1000)


def tick(ms, mid, pair="EURUSD"):
    return TickRecord(pair, T0 + ms, mid, mid)


def test_parse_line():
    rec = parse_tick_line("EUR/USD,20120102 00:00:01.123,1.29568,1.29578")
    assert rec.pair == "EURUSD"
    assert rec.bid == 1.29568 and rec.ask == 1.29578
    assert rec.timestamp == T0 + 1123
    assert rec.mid == pytest.approx((1.29568 + 1.29578) / 2)


def test_parse_zero_spread_is_valid():
    rec = parse_tick_line("EUR/USD,20120102 00:00:01.123,1.30000,1.30000")
    assert rec.bid == rec.ask


@pytest.mark.parametrize("line", [
    "EUR/USD,bad,1.2,1.3",
    "EUR/USD,20120102 00:00:01.123,1.2",
    "EUR/USD,20120102 00:00:01.123,abc,1.3",
    "EUR/USD,20120102 00:00:01.123,1.3,1.2",
])
def test_parse_rejects(line):
    with pytest.raises(ParseError, match="line 7"):
        parse_tick_line(line, lineno=7)


def test_resample_single_interval():
    bars = resample([tick(i * 1000, m) for i, m in enumerate([1.0, 1.2, 0.9, 1.1])])
    assert bars == [Bar(T0, 1.0, 1.2, 0.9, 1.1, 4)]


def test_resample_singleton_and_empty():
    assert resample([tick(5, 1.0)]) == [Bar(T0, 1.0, 1.0, 1.0, 1.0, 1)]
    assert resample([]) == []


def test_resample_two_intervals_with_gap():
    ticks = [tick(0, 1.0), tick(1, 1.1), tick(BAR_MS + 3, 1.2), tick(3 * BAR_MS, 1.3)]
    bars = resample(ticks)
    assert [b.start - T0 for b in bars] == [0, BAR_MS, 3 * BAR_MS]
    assert [b.tick_volume for b in bars] == [2, 1, 1]
    assert bars[0].close == 1.1


mids = st.lists(st.floats(0.5, 2.0), min_size=1, max_size=200)


@given(mids, st.integers(1, 5000))
def test_resample_invariants(values, spacing_s):
    ticks = [tick(i * spacing_s * 1000, m) for i, m in enumerate(values)]
    bars = resample(ticks)
    assert sum(b.tick_volume for b in bars) == len(ticks)
    assert all(b.low <= min(b.open, b.close) and max(b.open, b.close) <= b.high for b in bars)
    assert all(b2.start > b1.start for b1, b2 in zip(bars, bars[1:]))


@given(mids, st.integers(0, 200))
def test_resample_stable_under_concatenation(values, cut):
    ticks = [tick(i * 7000, m) for i, m in enumerate(values)]
    cut = min(cut, len(ticks))
    whole = resample(ticks)
    assert resample(ticks[:cut] + ticks[cut:]) == whole


def b(k, close, vol=1):
    return Bar(T0 + k * BAR_MS, close, close, close, close, vol)


def test_align_forward_fills():
    ds = align({"A": [b(0, 1.0), b(1, 1.1)], "B": [b(0, 2.0, 3)]})
    assert list(ds.grid - T0) == [0, BAR_MS]
    assert tuple(ds.data[1, 1]) == (2.0, 2.0, 2.0, 2.0, 0.0)
    assert ds.data[1, 0, 4] == 3


def test_align_drops_leading_slots():
    ds = align({"A": [b(0, 1.0), b(1, 1.1), b(2, 1.2)], "B": [b(1, 2.0)]})
    assert list(ds.grid - T0) == [BAR_MS, 2 * BAR_MS]
    assert ds.data[0, 0, 3] == 1.1


def test_align_identity_and_idempotent():
    bars = [b(0, 1.0), b(1, 1.1), b(4, 1.3)]
    ds = align({"A": bars, "B": bars})
    assert ds.bars("A") == bars
    again = align({p: ds.bars(p) for p in ds.pairs})
    assert again.equals(ds)


def test_align_empty_pair():
    with pytest.raises(AlignmentError):
        align({"A": [b(0, 1.0)], "B": []})


def test_ingest_directory_with_compression(tmp_path):
    lines = {
        "EURUSD": ["EUR/USD,20120102 00:00:01.000,1.0,1.0002", "EUR/USD,20120102 00:16:00.000,1.1,1.1002"],
        "GBPUSD": ["GBP/USD,20120102 00:05:00.000,1.5,1.5002"],
    }
    with gzip.open(tmp_path / "EURUSD-2012-01.csv.gz", "wt") as fh:
        fh.write("\n".join(lines["EURUSD"]) + "\n")
    with zipfile.ZipFile(tmp_path / "GBPUSD-2012-01.zip", "w") as zf:
        zf.writestr("GBPUSD-2012-01.csv", "\n".join(lines["GBPUSD"]) + "\n")
    ds = ingest_directory(tmp_path, pairs=["EURUSD", "GBPUSD"])
    assert ds.pairs == ("EURUSD", "GBPUSD")
    assert len(ds) == 2
    assert ds.volumes("GBPUSD").tolist() == [1.0, 0.0]
    assert ds.closes("EURUSD")[1] == pytest.approx(1.1001)


def test_read_ticks_reports_file_and_line(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("EUR/USD,20120102 00:00:01.000,1.0,1.1\nEUR/USD,oops,1.0,1.1\n")
    with pytest.raises(ParseError, match=r"x\.csv: line 2"):
        list(read_ticks(path))


def test_cache_round_trip(tmp_path):
    ds = synthetic_random_walk(50, seed=3)
    save_dataset(ds, tmp_path / "c.npz")
    assert load_dataset(tmp_path / "c.npz").equals(ds)


def test_dataset_rejects_bad_grid():
    with pytest.raises(AlignmentError):
        AlignedDataset(("A",), np.array([2, 1]), np.ones((1, 2, 5)))
