"""Composite observable, gated derivative enhancement, and diagnostics.

The tradable observable is

    f = tanh(|l1 * f0|) * f0 + A * (1 - tanh(|l2 * f0|)) * MA_w(D_n f0)

where ``f0`` is a convex combination of normalized indicators and ``D_n`` is the
backward difference over ``n`` bars divided by ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .normalization import NormalizedPanel

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class SignalParams:
    n_diff: int = 2
    w_ma: int = 2
    lambda1: float = 1.0
    lambda2: float = 1.0
    amp: float = 1.0
    weights: tuple[float, ...] | None = None  # None -> uniform over the panel keys

    def __post_init__(self):
        if self.n_diff < 1 or self.w_ma < 1:
            raise ValueError("n_diff and w_ma must be >= 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("gate sensitivities must be >= 0")
        if not self.amp > 0:
            raise ValueError("amp must be > 0")
        if self.weights is not None:
            check_weights(self.weights)


@dataclass(frozen=True)
class NonCausalSeries:
    """A diagnostic series built from future samples. Never a valid trading input."""

    values: np.ndarray
    horizon: int
    causal: bool = field(default=False, init=False)


@dataclass(frozen=True)
class SignalFrame:
    f0: np.ndarray
    d_raw: np.ndarray
    d_smooth: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    f: np.ndarray
    params: SignalParams
    valid_from: int
    causal: bool = field(default=True, init=False)

    def __len__(self) -> int:
        return len(self.f)

    def columns(self) -> dict[str, np.ndarray]:
        return {"f0": self.f0, "d_smooth": self.d_smooth, "c1": self.c1, "c2": self.c2, "f": self.f}


def check_weights(weights: Sequence[float]) -> None:
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or abs(float(w.sum()) - 1.0) > WEIGHT_TOL:
        raise ValueError(f"weights must be non-negative and sum to 1, got {list(weights)}")


def uniform_weights(k: int) -> tuple[float, ...]:
    return (1.0 / k,) * k


def composite(panel: NormalizedPanel, weights: Sequence[float] | None = None) -> np.ndarray:
    keys = panel.keys
    weights = uniform_weights(len(keys)) if weights is None else tuple(weights)
    if len(weights) != len(keys):
        raise ValueError(f"{len(weights)} weights for {len(keys)} indicators")
    check_weights(weights)
    out = np.zeros(len(panel))
    for a, k in zip(weights, keys):
        out = out + a * panel.z[k]
    out[: panel.common_valid_from] = np.nan
    return out


def causal_derivative(f0, n_diff: int) -> np.ndarray:
    if n_diff < 1:
        raise ValueError("n_diff must be >= 1")
    f0 = np.asarray(f0, dtype=np.float64)
    out = np.full(len(f0), np.nan)
    out[n_diff:] = (f0[n_diff:] - f0[:-n_diff]) / n_diff
    return out


def smooth_ma(x, w_ma: int) -> np.ndarray:
    """Trailing moving average including the current sample."""
    if w_ma < 1:
        raise ValueError("w_ma must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    out = np.full(len(x), np.nan)
    if len(x) >= w_ma:
        out[w_ma - 1:] = sliding_window_view(x, w_ma).mean(axis=1)
    return out


def gate(f0, d_smooth, p: SignalParams):
    """Return ``(c1, c2, f)``. ``lambda1 = inf`` pins c1 to exactly 1."""
    f0 = np.asarray(f0, dtype=np.float64)
    d_smooth = np.asarray(d_smooth, dtype=np.float64)
    if math.isinf(p.lambda1):
        c1 = np.where(np.isnan(f0), np.nan, 1.0)
    else:
        c1 = np.tanh(np.abs(p.lambda1 * f0))
    c2 = p.amp * (1.0 - np.tanh(np.abs(p.lambda2 * f0)))
    return c1, c2, c1 * f0 + c2 * d_smooth


def signal_valid_from(panel_valid_from: int, n_diff: int, w_ma: int) -> int:
    return panel_valid_from + n_diff + w_ma - 1


class DerivativeCache:
    """Caches ``f0`` per weight vector and ``(d_raw, d_smooth)`` per derivative config.

    Gate-only variations of the parameters reuse the cached derivative arrays.
    Cached arrays are read-only.
    """

    def __init__(self, panel: NormalizedPanel):
        self.panel = panel
        self._f0: dict[tuple, np.ndarray] = {}
        self._deriv: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}
        self.hits = 0
        self.misses = 0

    def f0(self, weights: tuple[float, ...] | None) -> np.ndarray:
        key = weights or uniform_weights(len(self.panel.keys))
        if key not in self._f0:
            arr = composite(self.panel, key)
            arr.setflags(write=False)
            self._f0[key] = arr
        return self._f0[key]

    def derivative(self, p: SignalParams) -> tuple[np.ndarray, np.ndarray]:
        key = (p.weights or uniform_weights(len(self.panel.keys)), p.n_diff, p.w_ma)
        if key in self._deriv:
            self.hits += 1
            return self._deriv[key]
        self.misses += 1
        d_raw = causal_derivative(self.f0(p.weights), p.n_diff)
        d_smooth = smooth_ma(d_raw, p.w_ma)
        d_raw.setflags(write=False)
        d_smooth.setflags(write=False)
        self._deriv[key] = (d_raw, d_smooth)
        return d_raw, d_smooth

    def valid_from(self, p: SignalParams) -> int:
        return signal_valid_from(self.panel.common_valid_from, p.n_diff, p.w_ma)

    def frame(self, p: SignalParams) -> SignalFrame:
        vf = self.valid_from(p)
        if vf >= len(self.panel):
            raise ValueError(f"no valid signal region: valid_from={vf}, length={len(self.panel)}")
        f0 = self.f0(p.weights)
        d_raw, d_smooth = self.derivative(p)
        c1, c2, f = gate(f0, d_smooth, p)
        return SignalFrame(f0, d_raw, d_smooth, c1, c2, f, p, vf)


def build_frame(panel: NormalizedPanel, p: SignalParams,
                cache: DerivativeCache | None = None) -> SignalFrame:
    if cache is None:
        cache = DerivativeCache(panel)
    elif cache.panel is not panel:
        raise ValueError("cache belongs to a different panel")
    return cache.frame(p)


def median_abs_sweep(panel: NormalizedPanel, lambda1s: Iterable[float], lambda2s: Iterable[float],
                     amps: Iterable[float], n_diff: int = 2, w_ma: int = 2,
                     weights: tuple[float, ...] | None = None,
                     last: int | None = None) -> list[dict]:
    """median(|f|) over the valid region for every (lambda1, lambda2, A) combination.

    ``last`` restricts the statistic to the trailing ``last`` bars of the valid region.
    """
    cache = DerivativeCache(panel)
    rows = []
    for l1 in lambda1s:
        for l2 in lambda2s:
            for a in amps:
                p = SignalParams(n_diff, w_ma, l1, l2, a, weights)
                fr = cache.frame(p)
                seg = fr.f[fr.valid_from:]
                if last is not None:
                    seg = seg[-last:]
                if len(seg) == 0:
                    raise ValueError("empty valid region")
                rows.append({"lambda1": l1, "lambda2": l2, "amp": a, "n_diff": n_diff,
                             "w_ma": w_ma, "n": len(seg), "median_abs_f": float(np.median(np.abs(seg)))})
    return rows


def one_at_a_time_sweep(panel: NormalizedPanel, grids: dict[str, Sequence[float]],
                        fixed: dict[str, float], n_diff: int = 2, w_ma: int = 2,
                        last: int | None = None) -> list[dict]:
    """Vary one gate parameter over its grid with the other two held at ``fixed``."""
    rows = []
    for name in ("lambda1", "lambda2", "amp"):
        values = {k: [v] for k, v in fixed.items()}
        values[name] = list(grids[name])
        for r in median_abs_sweep(panel, values["lambda1"], values["lambda2"], values["amp"],
                                  n_diff, w_ma, last=last):
            rows.append({"swept": name, **r})
    return rows


# -- non-causal diagnostic -------------------------------------------------

def horizon_trend(prices, h: int) -> NonCausalSeries:
    """Relative change of the next-``h`` mean price over the trailing-``h`` mean (uses the future)."""
    if h < 1:
        raise ValueError("h must be >= 1")
    p = np.asarray(prices, dtype=np.float64)
    n = len(p)
    out = np.full(n, np.nan)
    if n >= 2 * h:
        means = sliding_window_view(p, h).mean(axis=1)  # means[i] = mean(p[i:i+h])
        t = np.arange(h - 1, n - h)
        past = means[t - h + 1]
        fut = means[t + 1]
        out[t] = (fut - past) / past
    return NonCausalSeries(out, h)


# -- synthetic laboratory --------------------------------------------------

DEMO_DEFAULTS = {"a": 0.5, "A0": 2.0, "w": 1.0, "m": 0.1}


def demo_signal(t, a: float = 0.5, A0: float = 2.0, w: float = 1.0, m: float = 0.1) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return np.sin(a * t + A0 * np.sin(w * t)) + m * t - 1.0


def backward_derivative(x, n: int, dt: float) -> np.ndarray:
    """(x[i] - x[i-n]) / (n*dt); NaN for the first n samples."""
    x = np.asarray(x, dtype=np.float64)
    out = np.full(len(x), np.nan)
    out[n:] = (x[n:] - x[:-n]) / (n * dt)
    return out


@dataclass(frozen=True)
class LeadStats:
    mean: float
    median: float
    matched: int
    unmatched: int
    leads: tuple[int, ...]

    @property
    def empty(self) -> bool:
        return self.matched == 0


def crossings(x, ref_level: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Indices i where ``x - ref`` changes sign between i-1 and i, and the direction (+1 up, -1 down).

    Exact hits of the level count at the first sample after leaving the level.
    """
    y = np.asarray(x, dtype=np.float64) - ref_level
    idx, dirs = [], []
    prev_sign = 0
    for i, v in enumerate(y.tolist()):
        if math.isnan(v):
            prev_sign = 0
            continue
        s = (v > 0) - (v < 0)
        if s == 0:
            continue
        if prev_sign and s != prev_sign:
            idx.append(i)
            dirs.append(s)
        prev_sign = s
    return np.array(idx, dtype=np.int64), np.array(dirs, dtype=np.int64)


def zero_crossing_lead(base, enhanced, ref_level: float = 0.0,
                       radius: float | None = None) -> LeadStats:
    """Match each enhanced crossing to the nearest same-direction base crossing.

    Lead is ``base_index - enhanced_index`` in samples (positive: enhanced is earlier).
    The default matching radius is half the median gap between base crossings.
    """
    bi, bd = crossings(base, ref_level)
    ei, ed = crossings(enhanced, ref_level)
    if len(bi) == 0 or len(ei) == 0:
        return LeadStats(math.nan, math.nan, 0, len(ei), ())
    if radius is None:
        radius = 0.5 * float(np.median(np.diff(bi))) if len(bi) > 1 else math.inf
    leads = []
    unmatched = 0
    for i, d in zip(ei.tolist(), ed.tolist()):
        cand = bi[bd == d]
        if len(cand) == 0:
            unmatched += 1
            continue
        j = int(cand[np.argmin(np.abs(cand - i))])
        if abs(j - i) > radius:
            unmatched += 1
            continue
        leads.append(j - i)
    if not leads:
        return LeadStats(math.nan, math.nan, 0, unmatched, ())
    return LeadStats(float(np.mean(leads)), float(np.median(leads)), len(leads), unmatched, tuple(leads))


@dataclass(frozen=True)
class DemoResult:
    t: np.ndarray
    f: np.ndarray
    df: np.ndarray
    enhanced: dict[float, np.ndarray]
    leads: dict[float, LeadStats]
    gated: dict[float, np.ndarray]
    gated_c2: dict[float, np.ndarray]


def derivative_lead_demo(amps=(2.0, 5.0, 10.0), lambda2s=(0.0, 0.5, 1.0, 2.0), gate_amp: float = 10.0,
                         n: int = 5, dt: float = 0.01, t_max: float = 20.0, **params) -> DemoResult:
    """Phase advance of ``f + A f'`` on the demonstration signal, and its gated variants."""
    kw = {**DEMO_DEFAULTS, **params}
    t = np.arange(0.0, t_max + dt / 2, dt)
    f = demo_signal(t, **kw)
    df = backward_derivative(f, n, dt)
    enhanced = {a: f + a * df for a in amps}
    leads = {a: zero_crossing_lead(f, e) for a, e in enhanced.items()}
    gated, gated_c2 = {}, {}
    for l2 in lambda2s:
        c1, c2, out = gate(f, df, SignalParams(1, 1, math.inf, l2, gate_amp))
        gated[l2] = out
        gated_c2[l2] = c2
    return DemoResult(t, f, df, enhanced, leads, gated, gated_c2)


def with_gates(p: SignalParams, lambda1: float, lambda2: float, amp: float) -> SignalParams:
    return replace(p, lambda1=lambda1, lambda2=lambda2, amp=amp)
