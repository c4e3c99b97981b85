"""One-minute OHLCV candles: file IO, kline fetching, and gap regularization."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

logger = logging.getLogger(__name__)

INTERVAL_MS = 60_000
CANDLE_HEADER = ("timestamp", "open", "high", "low", "close", "volume")


class CandleDataError(ValueError):
    """Raised for malformed, missing, or inconsistent candle data."""


class FetchError(RuntimeError):
    """Raised when the kline endpoint cannot be read after retries."""


@dataclass(frozen=True)
class Candle:
    timestamp: int
    open: float
    high: float
    low: float
    close: float
    volume: float

    def check(self) -> None:
        if self.timestamp % INTERVAL_MS != 0:
            raise CandleDataError(f"timestamp {self.timestamp} is not minute-aligned")
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise CandleDataError("prices must be strictly positive")
        if self.volume < 0:
            raise CandleDataError("volume must be non-negative")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise CandleDataError("high/low do not bracket open/close")


def _frozen(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CandleSeries:
    """Column-oriented candle series. Arrays are read-only after construction."""

    symbol: str
    timestamp: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    interval_ms: int = INTERVAL_MS
    fill_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "timestamp", _frozen(self.timestamp, np.int64))
        for name in ("open", "high", "low", "close", "volume"):
            object.__setattr__(self, name, _frozen(getattr(self, name), np.float64))
        n = len(self.timestamp)
        if any(len(getattr(self, c)) != n for c in CANDLE_HEADER[1:]):
            raise CandleDataError("candle columns have different lengths")

    def __len__(self) -> int:
        return len(self.timestamp)

    @classmethod
    def empty(cls, symbol: str) -> "CandleSeries":
        return cls(symbol, [], [], [], [], [], [])

    @classmethod
    def from_candles(cls, symbol: str, candles: list[Candle]) -> "CandleSeries":
        cols = list(zip(*[(c.timestamp, c.open, c.high, c.low, c.close, c.volume) for c in candles]))
        if not cols:
            return cls.empty(symbol)
        return cls(symbol, *cols)

    def candle(self, i: int) -> Candle:
        return Candle(int(self.timestamp[i]), float(self.open[i]), float(self.high[i]),
                      float(self.low[i]), float(self.close[i]), float(self.volume[i]))

    def slice(self, start: int | None = None, stop: int | None = None) -> "CandleSeries":
        s = np.s_[start:stop]
        return CandleSeries(self.symbol, self.timestamp[s], self.open[s], self.high[s],
                            self.low[s], self.close[s], self.volume[s], self.interval_ms)

    def is_regular(self) -> bool:
        return len(self) < 2 or bool(np.all(np.diff(self.timestamp) == self.interval_ms))


def _parse_row(row: list[str], lineno: int) -> Candle:
    if len(row) != 6:
        raise CandleDataError(f"row {lineno}: expected 6 fields, got {len(row)}")
    try:
        c = Candle(int(row[0]), float(row[1]), float(row[2]), float(row[3]),
                   float(row[4]), float(row[5]))
    except ValueError as exc:
        raise CandleDataError(f"row {lineno}: {exc}") from None
    try:
        c.check()
    except CandleDataError as exc:
        raise CandleDataError(f"row {lineno}: {exc}") from None
    return c


def load_candles(path: str | Path, symbol: str) -> CandleSeries:
    """Parse a candle file. Row numbers in errors count the header as row 1."""
    path = Path(path)
    if not path.exists():
        raise CandleDataError(f"candle file not found: {path}")
    candles: list[Candle] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return CandleSeries.empty(symbol)
        if tuple(h.strip() for h in header) != CANDLE_HEADER:
            raise CandleDataError(f"row 1: bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            c = _parse_row(row, lineno)
            if candles and c.timestamp <= candles[-1].timestamp:
                raise CandleDataError(f"row {lineno}: non-monotone timestamp {c.timestamp}")
            candles.append(c)
    return CandleSeries.from_candles(symbol, candles)


def write_candles(series: CandleSeries, path: str | Path) -> None:
    # repr() keeps full float precision and round-trips exactly
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(CANDLE_HEADER) + "\n")
        for i in range(len(series)):
            fh.write(f"{int(series.timestamp[i])},{float(series.open[i])!r},{float(series.high[i])!r},"
                     f"{float(series.low[i])!r},{float(series.close[i])!r},{float(series.volume[i])!r}\n")


def regularize(series: CandleSeries) -> CandleSeries:
    """Fill missing minutes with flat zero-volume bars at the previous close."""
    if len(series) == 0:
        raise CandleDataError("cannot regularize an empty series")
    ts = series.timestamp
    if np.any(np.diff(ts) <= 0):
        raise CandleDataError("timestamps must be strictly increasing")
    step = series.interval_ms
    if np.any((ts - ts[0]) % step):
        raise CandleDataError("timestamps are not on the interval grid")
    pos = ((ts - ts[0]) // step).astype(np.int64)
    n = int(pos[-1]) + 1
    if n == len(series):
        return series

    present = np.zeros(n, dtype=bool)
    present[pos] = True
    # index of the last original candle at or before each grid slot
    src = np.maximum.accumulate(np.where(present, np.arange(n), 0))
    orig = np.full(n, -1, dtype=np.int64)
    orig[pos] = np.arange(len(series))
    last = orig[src]
    prev_close = series.close[last]

    def col(values, fill):
        out = np.array(fill, dtype=np.float64)
        out[pos] = values
        return out

    return CandleSeries(
        series.symbol,
        ts[0] + np.arange(n, dtype=np.int64) * step,
        col(series.open, prev_close),
        col(series.high, prev_close),
        col(series.low, prev_close),
        series.close[last],
        col(series.volume, np.zeros(n)),
        step,
        fill_count=series.fill_count + n - len(series),
    )


def merge_candles(a: CandleSeries, b: CandleSeries) -> CandleSeries:
    """Union of two raw series; on duplicate timestamps the row from ``b`` wins."""
    rows = {a.candle(i).timestamp: a.candle(i) for i in range(len(a))}
    rows.update({b.candle(i).timestamp: b.candle(i) for i in range(len(b))})
    return CandleSeries.from_candles(a.symbol or b.symbol, [rows[k] for k in sorted(rows)])


@dataclass
class KlineClient:
    """Paginating reader for a public klines endpoint (array-of-arrays records)."""

    endpoint: str
    page_size: int = 1000
    max_retries: int = 4
    backoff_s: float = 0.5
    min_interval_s: float = 0.0
    timeout_s: float = 10.0
    session: requests.Session = field(default_factory=requests.Session)

    def _get(self, params: dict) -> list:
        delay = self.backoff_s
        for attempt in range(self.max_retries + 1):
            try:
                resp = self.session.get(self.endpoint, params=params, timeout=self.timeout_s)
                resp.raise_for_status()
                return resp.json()
            except (requests.RequestException, ValueError) as exc:
                if attempt == self.max_retries:
                    raise FetchError(f"kline request failed after {attempt + 1} attempts: {exc}") from exc
                logger.warning("kline request failed (%s), retrying in %.2fs", exc, delay)
                time.sleep(delay)
                delay *= 2
        raise AssertionError("unreachable")

    def fetch_range(self, symbol: str, start: int, end: int) -> list[Candle]:
        out: list[Candle] = []
        cursor = start
        while cursor < end:
            page = self._get({"symbol": symbol, "interval": "1m", "startTime": cursor,
                              "endTime": end - 1, "limit": self.page_size})
            if not isinstance(page, list):
                raise FetchError(f"unexpected kline payload type {type(page).__name__}")
            if not page:
                break
            for rec in page:
                if not isinstance(rec, (list, tuple)) or len(rec) < 6:
                    raise FetchError(f"kline record schema mismatch: {rec!r}")
                try:
                    c = Candle(int(rec[0]), float(rec[1]), float(rec[2]), float(rec[3]),
                               float(rec[4]), float(rec[5]))
                    c.check()
                except (TypeError, ValueError) as exc:
                    raise FetchError(f"kline record schema mismatch: {rec!r} ({exc})") from exc
                if c.timestamp < cursor or c.timestamp >= end:
                    continue
                if out and c.timestamp <= out[-1].timestamp:
                    continue
                out.append(c)
            last_ts = int(page[-1][0])
            if last_ts < cursor:
                break
            cursor = last_ts + INTERVAL_MS
            if self.min_interval_s:
                time.sleep(self.min_interval_s)
        return out


def fetch_candles(endpoint: str, symbol: str, start: int, end: int, *,
                  client: KlineClient | None = None, workers: int = 1,
                  save_to: str | Path | None = None) -> CandleSeries:
    """Fetch raw candles in ``[start, end)``; optionally persist them unregularized."""
    if start >= end:
        raise ValueError(f"start ({start}) must be before end ({end})")
    client = client or KlineClient(endpoint)
    if workers <= 1:
        candles = client.fetch_range(symbol, start, end)
    else:
        span = -(-(end - start) // workers)
        span = -(-span // INTERVAL_MS) * INTERVAL_MS
        bounds = [(s, min(s + span, end)) for s in range(start, end, span)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: client.fetch_range(symbol, *b), bounds))
        candles = [c for part in parts for c in part]
    series = CandleSeries.from_candles(symbol, candles)
    if save_to is not None:
        write_candles(series, save_to)
    return series
