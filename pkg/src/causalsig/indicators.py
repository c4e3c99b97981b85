"""RSI, MFI, MACD histogram and Bollinger %B on a regular candle grid.

Every function returns a full-length float array with NaN before the first
fully formed value; the paired ``valid_from`` index is recorded in the panel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .market_data import CandleSeries

KEYS = ("RSI", "MFI", "MACD", "BBP")
BB_EPS = 1e-12


@dataclass(frozen=True)
class IndicatorConfig:
    n_rsi: int = 14
    n_mfi: int = 14
    macd_fast: int = 12
    macd_slow: int = 26
    macd_signal: int = 9
    n_bb: int = 20
    k_bb: float = 2.0
    rsi_mode: str = "simple"

    def __post_init__(self):
        for name in ("n_rsi", "n_mfi", "macd_fast", "macd_slow", "macd_signal", "n_bb"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        if self.macd_fast >= self.macd_slow:
            raise ValueError("macd_fast must be < macd_slow")
        if self.k_bb <= 0:
            raise ValueError("k_bb must be > 0")
        if self.rsi_mode != "simple":
            # Wilder smoothing is reserved in the config but not provided
            raise NotImplementedError(f"rsi_mode={self.rsi_mode!r} is not implemented")

    def valid_from(self) -> dict[str, int]:
        return {
            "RSI": self.n_rsi,
            "MFI": self.n_mfi,
            "MACD": macd_valid_from(self.macd_slow, self.macd_signal),
            "BBP": self.n_bb - 1,
        }


@dataclass(frozen=True)
class IndicatorPanel:
    series: dict[str, np.ndarray]
    valid_from: dict[str, int]
    config: IndicatorConfig = field(default_factory=IndicatorConfig)

    def __len__(self) -> int:
        return len(next(iter(self.series.values())))


def _ratio_index(up: np.ndarray, down: np.ndarray) -> np.ndarray:
    total = up + down
    with np.errstate(invalid="ignore", divide="ignore"):
        out = 100.0 * up / total
    return np.where(total == 0, 50.0, out)


def rsi(closes, n: int = 14) -> np.ndarray:
    """Simple-mean RSI over the trailing ``n`` one-bar changes."""
    closes = np.asarray(closes, dtype=np.float64)
    out = np.full(len(closes), np.nan)
    if n < 2:
        raise ValueError("n must be >= 2")
    if len(closes) < n + 1:
        return out
    d = np.diff(closes)
    gains = sliding_window_view(np.where(d > 0, d, 0.0), n).mean(axis=1)
    losses = sliding_window_view(np.where(d < 0, -d, 0.0), n).mean(axis=1)
    out[n:] = _ratio_index(gains, losses)
    return out


def typical_price(high, low, close) -> np.ndarray:
    return (np.asarray(high) + np.asarray(low) + np.asarray(close)) / 3.0


def mfi(high, low, close, volume, n: int = 14) -> np.ndarray:
    """Money flow index; bars whose typical price is unchanged count on neither side."""
    if n < 2:
        raise ValueError("n must be >= 2")
    tp = typical_price(high, low, close)
    out = np.full(len(tp), np.nan)
    if len(tp) < n + 1:
        return out
    flow = tp[1:] * np.asarray(volume, dtype=np.float64)[1:]
    dtp = np.diff(tp)
    pos = sliding_window_view(np.where(dtp > 0, flow, 0.0), n).sum(axis=1)
    neg = sliding_window_view(np.where(dtp < 0, flow, 0.0), n).sum(axis=1)
    out[n:] = _ratio_index(pos, neg)
    return out


def ema(x, span: int) -> np.ndarray:
    """Recursive EMA with alpha = 2/(span+1), seeded with the first sample."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(len(x))
    if len(x) == 0:
        return out
    alpha = 2.0 / (span + 1.0)
    acc = float(x[0])
    out[0] = acc
    vals = x.tolist()
    for i in range(1, len(vals)):
        acc = acc + alpha * (vals[i] - acc)
        out[i] = acc
    return out


def macd_valid_from(slow: int, signal: int) -> int:
    return (slow - 1) + (signal - 1)


def macd_hist(closes, fast: int = 12, slow: int = 26, signal: int = 9) -> np.ndarray:
    """MACD line minus its signal EMA, in price units."""
    if fast >= slow:
        raise ValueError("fast must be < slow")
    closes = np.asarray(closes, dtype=np.float64)
    line = ema(closes, fast) - ema(closes, slow)
    out = line - ema(line, signal)
    out[: macd_valid_from(slow, signal)] = np.nan
    return out


def bb_percent(closes, n: int = 20, k: float = 2.0) -> np.ndarray:
    """Position of the close inside its k-sigma band, 0..100, population sigma."""
    closes = np.asarray(closes, dtype=np.float64)
    out = np.full(len(closes), np.nan)
    if len(closes) < n:
        return out
    price = closes[n - 1:]
    # moments about the current close: avoids cancelling mu against P when sigma << P
    dev = sliding_window_view(closes, n) - price[:, None]
    gap = dev.mean(axis=1)  # mu - P
    sigma = dev.std(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        pct = 100.0 * (k * sigma - gap) / (2.0 * k * sigma)
    pct = np.clip(pct, 0.0, 100.0)
    out[n - 1:] = np.where(sigma < BB_EPS, 50.0, pct)
    return out


def compute_panel(candles: CandleSeries, cfg: IndicatorConfig | None = None) -> IndicatorPanel:
    cfg = cfg or IndicatorConfig()
    vf = cfg.valid_from()
    if len(candles) <= max(vf.values()):
        raise ValueError(f"series of length {len(candles)} is too short for the indicator windows")
    if not candles.is_regular():
        raise ValueError("candle series must be regularized first")
    series = {
        "RSI": rsi(candles.close, cfg.n_rsi),
        "MFI": mfi(candles.high, candles.low, candles.close, candles.volume, cfg.n_mfi),
        "MACD": macd_hist(candles.close, cfg.macd_fast, cfg.macd_slow, cfg.macd_signal),
        "BBP": bb_percent(candles.close, cfg.n_bb, cfg.k_bb),
    }
    return IndicatorPanel(series, vf, cfg)
