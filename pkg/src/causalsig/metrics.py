"""Per-bar (non-annualized) risk/return metrics and holding-time statistics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .decision import Durations, PositionPath, turnover

MINUTES_PER_YEAR = 365 * 24 * 60


@dataclass(frozen=True)
class PerformanceReport:
    total_return: float
    volatility: float
    downside_volatility: float | None
    max_drawdown: float
    sharpe: float | None
    sortino: float | None
    calmar: float | None
    ulcer_index: float
    time_under_water: float
    total_trades: int
    trades_per_1k: float
    n_bars: int

    def annualized_sharpe(self, periods_per_year: int = MINUTES_PER_YEAR) -> float | None:
        return None if self.sharpe is None else self.sharpe * math.sqrt(periods_per_year)

    def annualized_sortino(self, periods_per_year: int = MINUTES_PER_YEAR) -> float | None:
        return None if self.sortino is None else self.sortino * math.sqrt(periods_per_year)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DurationStats:
    count: int
    mean: float | None = None
    median: float | None = None
    p25: float | None = None
    p75: float | None = None
    p90: float | None = None
    max: int | None = None
    max_start: int | None = None
    max_end: int | None = None
    percentile_method: str = "linear"

    @property
    def empty(self) -> bool:
        return self.count == 0

    def to_dict(self) -> dict:
        return asdict(self)


def drawdowns(equity) -> np.ndarray:
    v = np.asarray(equity, dtype=np.float64)
    return v / np.maximum.accumulate(v) - 1.0


def max_drawdown(equity) -> float:
    v = np.asarray(equity, dtype=np.float64)
    if len(v) == 0:
        raise ValueError("empty equity series")
    if np.any(v <= 0):
        raise ValueError("equity must be positive")
    return float(min(drawdowns(v).min(), 0.0))


def calmar_ratio(total_return: float, mdd: float) -> float | None:
    return total_return / abs(mdd) if mdd < 0 else None


def summarize(returns, equity=None, path: PositionPath | np.ndarray | None = None,
              n_trades: int | None = None) -> PerformanceReport:
    """Metrics over the bars of ``returns``; the peak includes initial capital 1."""
    R = np.asarray(returns, dtype=np.float64)
    T = len(R)
    if T == 0:
        raise ValueError("empty return series")
    V = np.cumprod(1.0 + R) if equity is None else np.asarray(equity, dtype=np.float64)
    if len(V) != T:
        raise ValueError("returns and equity lengths differ")
    if n_trades is None:
        n_trades = 0 if path is None else turnover(path)

    full = np.concatenate([[1.0], V])
    dd = drawdowns(full)[1:]
    mdd = float(min(dd.min(), 0.0))
    vol = float(R.std())
    mean = float(R.mean())
    neg = R[R < 0]
    down_vol = float(neg.std()) if len(neg) else None
    total = float(V[-1] - 1.0)
    return PerformanceReport(
        total_return=total,
        volatility=vol,
        downside_volatility=down_vol,
        max_drawdown=mdd,
        sharpe=mean / vol if vol > 0 else None,
        sortino=mean / down_vol if down_vol else None,
        calmar=calmar_ratio(total, mdd),
        ulcer_index=float(np.sqrt(np.mean((100.0 * dd) ** 2))),
        time_under_water=float(np.mean(dd < 0)),
        total_trades=int(n_trades),
        trades_per_1k=1000.0 * n_trades / T,
        n_bars=T,
    )


def _nearest_rank(sorted_vals: np.ndarray, q: float) -> float:
    k = max(1, math.ceil(q / 100.0 * len(sorted_vals)))
    return float(sorted_vals[k - 1])


def duration_stats(durations: Durations | list[int], timestamps=None,
                   method: str = "linear") -> DurationStats:
    """Order statistics of holding times (bars).

    ``method`` is ``"linear"`` (interpolated) or ``"nearest"`` (nearest rank).
    With ``timestamps`` and a :class:`Durations`, the longest run is annotated
    with its first and last bar timestamps.
    """
    lengths = list(getattr(durations, "lengths", durations))
    if not lengths:
        return DurationStats(0, percentile_method=method)
    arr = np.sort(np.asarray(lengths, dtype=np.float64))
    if method == "linear":
        p25, med, p75, p90 = (float(np.percentile(arr, q)) for q in (25, 50, 75, 90))
    elif method == "nearest":
        p25, p75, p90 = (_nearest_rank(arr, q) for q in (25, 75, 90))
        med = float(np.median(arr))
    else:
        raise ValueError(f"unknown percentile method {method!r}")
    i_max = int(np.argmax(lengths))
    max_start = max_end = None
    starts = getattr(durations, "starts", None)
    if timestamps is not None and starts:
        s = starts[i_max]
        max_start = int(timestamps[s])
        max_end = int(timestamps[s + lengths[i_max] - 1])
    return DurationStats(len(arr), float(arr.mean()), med, p25, p75, p90, int(lengths[i_max]),
                         max_start, max_end, method)
