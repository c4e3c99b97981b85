"""Deterministic synthetic one-minute candles (trend regimes + daily cycle + noise)."""

from __future__ import annotations

import hashlib

import numpy as np

from .market_data import INTERVAL_MS, CandleSeries

DEFAULT_START_TS = 1_640_995_200_000  # 2022-01-01T00:00Z


def seed_from_text(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def synthetic_candles(n: int, seed_text: str = "causalsig", symbol: str = "SYNTH",
                      start_ts: int = DEFAULT_START_TS, p0: float = 100.0,
                      noise: float = 5e-4, regime_len: float = 3000.0,
                      drift_scale: float = 4e-5, cycle_amp: float = 3e-3,
                      gap_rate: float = 0.0) -> CandleSeries:
    """Generate ``n`` minute bars from a seed derived from ``seed_text``.

    With ``gap_rate > 0`` a random subset of interior bars is dropped, so the
    output needs :func:`regularize` before use.
    """
    rng = np.random.default_rng(seed_from_text(seed_text))
    drift = np.empty(n)
    i = 0
    while i < n:
        k = int(rng.geometric(1.0 / regime_len))
        drift[i:i + k] = rng.normal(0.0, drift_scale)
        i += k
    t = np.arange(n)
    cycle = cycle_amp * np.sin(2 * np.pi * t / 1440.0 + rng.uniform(0, 2 * np.pi))
    vol = noise * np.exp(0.3 * np.sin(2 * np.pi * t / 720.0))
    steps = drift + vol * rng.standard_normal(n)
    logp = np.log(p0) + np.cumsum(steps) + cycle
    close = np.exp(logp)
    open_ = np.empty(n)
    open_[0] = close[0] * np.exp(vol[0] * rng.standard_normal())
    open_[1:] = close[:-1]
    wick = vol * np.abs(rng.standard_normal((2, n)))
    high = np.maximum(open_, close) * np.exp(wick[0])
    low = np.minimum(open_, close) * np.exp(-wick[1])
    rel = np.abs(steps) / vol
    volume = rng.gamma(2.0, 25.0, n) * (1.0 + rel)
    ts = start_ts + t.astype(np.int64) * INTERVAL_MS
    keep = np.ones(n, dtype=bool)
    if gap_rate > 0 and n > 2:
        keep[1:-1] = rng.random(n - 2) >= gap_rate
    return CandleSeries(symbol, ts[keep], open_[keep], high[keep], low[keep], close[keep], volume[keep])


def constant_candles(n: int, price: float = 1.0, volume: float = 10.0,
                     symbol: str = "CONST", start_ts: int = DEFAULT_START_TS) -> CandleSeries:
    ts = start_ts + np.arange(n, dtype=np.int64) * INTERVAL_MS
    p = np.full(n, price)
    return CandleSeries(symbol, ts, p, p, p, p, np.full(n, volume))


def adversarial_future(series: CandleSeries, cut: int, seed_text: str) -> CandleSeries:
    """Keep bars ``0..cut`` and replace every later bar with unrelated valid candles."""
    rng = np.random.default_rng(seed_from_text(seed_text))
    n = len(series)
    m = n - cut - 1
    if m <= 0:
        return series
    base = float(series.close[cut])
    # violent, trend-flipping path so any leak would move the outputs
    close = base * np.exp(np.cumsum(rng.choice([-1.0, 1.0]) * 0.01 + 0.02 * rng.standard_normal(m)))
    open_ = np.concatenate([[base], close[:-1]])
    high = np.maximum(open_, close) * (1 + 0.01 * rng.random(m))
    low = np.minimum(open_, close) * (1 - 0.01 * rng.random(m))
    vol = rng.gamma(1.0, 1000.0, m)

    def join(a, b):
        return np.concatenate([a[:cut + 1], b])

    return CandleSeries(series.symbol, series.timestamp, join(series.open, open_),
                        join(series.high, high), join(series.low, low),
                        join(series.close, close), join(series.volume, vol))
