"""Tick ingestion, 15-minute OHLCV resampling and multi-pair alignment.

Timestamps are carried as integer milliseconds since the Unix epoch (UTC).
"""

from __future__ import annotations

import bz2
import gzip
import io
import lzma
import zipfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

PAIRS: tuple[str, ...] = (
    "AUDJPY", "AUDNZD", "AUDUSD", "CADJPY", "CHFJPY", "EURGBP",
    "EURJPY", "EURUSD", "GBPJPY", "GBPUSD", "NZDUSD", "USDCAD",
)

BAR_MS = 15 * 60 * 1000
CACHE_VERSION = 1


class ParseError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


def normalize_pair(pair: str) -> str:
    """'EUR/USD' -> 'EURUSD'."""
    return pair.replace("/", "").replace("_", "").strip().upper()


@dataclass(frozen=True)
class TickRecord:
    pair: str
    timestamp: int  # ms since epoch, UTC
    bid: float
    ask: float

    @property
    def mid(self) -> float:
        return (self.bid + self.ask) / 2.0


@dataclass(frozen=True)
class Bar:
    start: int  # ms since epoch, aligned to the bar interval
    open: float
    high: float
    low: float
    close: float
    tick_volume: int


def _parse_timestamp(text: str) -> int:
    dt = datetime.strptime(text.strip(), "%Y%m%d %H:%M:%S.%f").replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1000))


def parse_tick_line(line: str, lineno: int = 0) -> TickRecord:
    """Parse ``pair,YYYYMMDD HH:MM:SS.mmm,bid,ask``."""
    fields = line.strip().split(",")
    if len(fields) != 4:
        raise ParseError(f"line {lineno}: expected 4 fields, got {len(fields)}")
    pair, ts, bid_s, ask_s = fields
    try:
        timestamp = _parse_timestamp(ts)
    except ValueError:
        raise ParseError(f"line {lineno}: bad timestamp {ts!r}") from None
    try:
        bid = float(bid_s)
        ask = float(ask_s)
    except ValueError:
        raise ParseError(f"line {lineno}: bad price in {line.strip()!r}") from None
    if not (ask >= bid > 0):
        raise ParseError(f"line {lineno}: require ask >= bid > 0, got bid={bid} ask={ask}")
    return TickRecord(normalize_pair(pair), timestamp, bid, ask)


def _open_text(path: Path) -> io.TextIOBase:
    suffix = path.suffix.lower()
    if suffix == ".gz":
        return gzip.open(path, "rt")
    if suffix == ".bz2":
        return bz2.open(path, "rt")
    if suffix in (".xz", ".lzma"):
        return lzma.open(path, "rt")
    if suffix == ".zip":
        zf = zipfile.ZipFile(path)
        members = [n for n in zf.namelist() if not n.endswith("/")]
        if len(members) != 1:
            raise ParseError(f"{path}: expected exactly one member in archive, found {len(members)}")
        return io.TextIOWrapper(zf.open(members[0]))
    return open(path, "r")


def read_ticks(path: str | Path) -> Iterator[TickRecord]:
    """Yield ticks from one (optionally compressed) file; blank lines are skipped."""
    path = Path(path)
    prev = None
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                tick = parse_tick_line(line, lineno)
            except ParseError as exc:
                raise ParseError(f"{path}: {exc}") from None
            if prev is not None and tick.timestamp < prev:
                raise ParseError(f"{path}: line {lineno}: timestamp goes backwards")
            prev = tick.timestamp
            yield tick


def resample(ticks: Iterable[TickRecord], interval_ms: int = BAR_MS) -> list[Bar]:
    """Aggregate time-ordered ticks of a single pair into mid-price OHLCV bars.

    Intervals without ticks produce no bar.
    """
    bars: list[Bar] = []
    cur_start = None
    o = h = l = c = 0.0
    n = 0
    for tick in ticks:
        mid = tick.mid
        start = tick.timestamp - tick.timestamp % interval_ms
        if start != cur_start:
            if cur_start is not None:
                if start < cur_start:
                    raise ParseError("ticks are not time-ordered")
                bars.append(Bar(cur_start, o, h, l, c, n))
            cur_start, o, h, l, c, n = start, mid, mid, mid, mid, 0
        h = max(h, mid)
        l = min(l, mid)
        c = mid
        n += 1
    if cur_start is not None:
        bars.append(Bar(cur_start, o, h, l, c, n))
    return bars


@dataclass
class AlignedDataset:
    """Rectangular panel: ``data[p, k]`` holds (open, high, low, close, volume) of pair p at grid slot k."""

    pairs: tuple[str, ...]
    grid: np.ndarray  # int64 ms, strictly increasing
    data: np.ndarray  # float64, shape (n_pairs, len(grid), 5)

    def __post_init__(self):
        self.pairs = tuple(self.pairs)
        self.grid = np.asarray(self.grid, dtype=np.int64)
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (len(self.pairs), len(self.grid), 5):
            raise AlignmentError(f"data shape {self.data.shape} does not match pairs/grid")
        if len(self.grid) > 1 and np.any(np.diff(self.grid) <= 0):
            raise AlignmentError("grid must be strictly increasing")

    def __len__(self) -> int:
        return len(self.grid)

    def index(self, pair: str) -> int:
        try:
            return self.pairs.index(normalize_pair(pair))
        except ValueError:
            raise KeyError(f"pair {pair!r} not in dataset {self.pairs}") from None

    def opens(self, pair: str) -> np.ndarray:
        return self.data[self.index(pair), :, 0]

    def closes(self, pair: str) -> np.ndarray:
        return self.data[self.index(pair), :, 3]

    def volumes(self, pair: str) -> np.ndarray:
        return self.data[self.index(pair), :, 4]

    def bars(self, pair: str) -> list[Bar]:
        rows = self.data[self.index(pair)]
        return [Bar(int(t), *map(float, r[:4]), int(r[4])) for t, r in zip(self.grid, rows)]

    def equals(self, other: AlignedDataset) -> bool:
        return (
            self.pairs == other.pairs
            and np.array_equal(self.grid, other.grid)
            and np.array_equal(self.data, other.data)
        )


def align(per_pair: dict[str, Sequence[Bar]]) -> AlignedDataset:
    """Merge per-pair bar sequences onto one grid.

    The grid is the union of bar starts, truncated so it begins once every pair
    has traded. Missing bars are flat forward-fills of the previous close with
    zero volume.
    """
    for pair, bars in per_pair.items():
        if len(bars) == 0:
            raise AlignmentError(f"pair {pair} has no bars")
    pairs = tuple(per_pair)
    first = max(bars[0].start for bars in per_pair.values())
    grid = sorted({b.start for bars in per_pair.values() for b in bars if b.start >= first})
    data = np.empty((len(pairs), len(grid), 5))
    for p, pair in enumerate(pairs):
        bars = per_pair[pair]
        j = 0
        prev_close = None
        # bars before the grid start only seed the fill value
        while j < len(bars) and bars[j].start < first:
            prev_close = bars[j].close
            j += 1
        for k, t in enumerate(grid):
            if j < len(bars) and bars[j].start == t:
                b = bars[j]
                data[p, k] = (b.open, b.high, b.low, b.close, b.tick_volume)
                prev_close = b.close
                j += 1
            else:
                data[p, k] = (prev_close, prev_close, prev_close, prev_close, 0.0)
    return AlignedDataset(pairs, np.array(grid, dtype=np.int64), data)


def ingest_directory(directory: str | Path, pairs: Sequence[str] = PAIRS) -> AlignedDataset:
    """Read every tick file under ``directory`` and build the aligned panel.

    Files are grouped by the pair named in their records and read in sorted
    filename order, so monthly files concatenate in time order.
    """
    wanted = {normalize_pair(p) for p in pairs}
    ticks: dict[str, list[TickRecord]] = {p: [] for p in wanted}
    files = sorted(p for p in Path(directory).rglob("*") if p.is_file())
    if not files:
        raise FileNotFoundError(f"no tick files under {directory}")
    for path in files:
        for tick in read_ticks(path):
            if tick.pair in ticks:
                ticks[tick.pair].append(tick)
    per_pair = {}
    for pair in (normalize_pair(p) for p in pairs):
        series = sorted(ticks[pair], key=lambda t: t.timestamp)
        per_pair[pair] = resample(series)
    return align(per_pair)


def save_dataset(ds: AlignedDataset, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            version=np.array(CACHE_VERSION, dtype=np.int64),
            pairs=np.array(ds.pairs),
            grid=ds.grid,
            data=ds.data,
        )


def load_dataset(path: str | Path) -> AlignedDataset:
    with np.load(Path(path), allow_pickle=False) as z:
        version = int(z["version"])
        if version != CACHE_VERSION:
            raise ValueError(f"{path}: cache version {version}, expected {CACHE_VERSION}")
        return AlignedDataset(tuple(str(p) for p in z["pairs"]), z["grid"], z["data"])


def synthetic_sinusoid(
    n_bars: int,
    period: float = 192.0,
    amplitude: float = 0.01,
    base_price: float = 1.0,
    pairs: Sequence[str] = PAIRS,
    start: str = "2012-01-02T00:00:00",
    ticks_per_bar: int = 60,
    phase_step: float = 0.0,
) -> AlignedDataset:
    """Noise-free panel whose closes follow ``base*(1 + amplitude*sin(2*pi*k/period))``.

    Each bar opens at the previous close. Pair ``i`` is shifted in phase by
    ``i*phase_step`` radians.
    """
    t0 = int(datetime.fromisoformat(start).replace(tzinfo=timezone.utc).timestamp() * 1000)
    t0 -= t0 % BAR_MS
    grid = t0 + BAR_MS * np.arange(n_bars, dtype=np.int64)
    k = np.arange(-1, n_bars)
    data = np.empty((len(pairs), n_bars, 5))
    for i in range(len(pairs)):
        px = base_price * (1.0 + amplitude * np.sin(2.0 * np.pi * k / period + i * phase_step))
        o, c = px[:-1], px[1:]
        data[i, :, 0] = o
        data[i, :, 1] = np.maximum(o, c)
        data[i, :, 2] = np.minimum(o, c)
        data[i, :, 3] = c
        data[i, :, 4] = ticks_per_bar
    return AlignedDataset(tuple(normalize_pair(p) for p in pairs), grid, data)


def synthetic_random_walk(
    n_bars: int,
    seed: int = 0,
    vol: float = 5e-4,
    pairs: Sequence[str] = PAIRS,
    start: str = "2012-01-02T00:00:00",
) -> AlignedDataset:
    """Geometric random-walk panel with Poisson tick volumes (test fixture data)."""
    rng = np.random.default_rng(seed)
    t0 = int(datetime.fromisoformat(start).replace(tzinfo=timezone.utc).timestamp() * 1000)
    t0 -= t0 % BAR_MS
    grid = t0 + BAR_MS * np.arange(n_bars, dtype=np.int64)
    data = np.empty((len(pairs), n_bars, 5))
    for i, pair in enumerate(pairs):
        base = 100.0 if normalize_pair(pair).endswith("JPY") else 1.0
        logp = np.log(base) + np.cumsum(rng.normal(0.0, vol, n_bars + 1))
        px = np.exp(logp)
        o, c = px[:-1], px[1:]
        wiggle = np.abs(rng.normal(0.0, vol / 2, (2, n_bars))) * px[1:]
        data[i, :, 0] = o
        data[i, :, 1] = np.maximum(o, c) + wiggle[0]
        data[i, :, 2] = np.minimum(o, c) - wiggle[1]
        data[i, :, 3] = c
        data[i, :, 4] = rng.poisson(50, n_bars)
    return AlignedDataset(tuple(normalize_pair(p) for p in pairs), grid, data)
