"""Definition-literal reference implementations for the test suite.

Nothing here is imported by the production modules, and nothing here imports
production numerics: each oracle recomputes its quantity from raw definitions
with plain loops, usually at O(n*w) or worse cost.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

NAN = float("nan")


def _median(vals: list[float]) -> float:
    s = sorted(vals)
    k = len(s)
    if k % 2:
        return s[k // 2]
    return (s[k // 2 - 1] + s[k // 2]) / 2


# -- robust statistics -----------------------------------------------------

def rolling_median(x, w: int, start: int = 0) -> list[float]:
    x = list(map(float, x))
    return [_median(x[t - w:t]) if t >= start + w else NAN for t in range(len(x))]


def normalize(x, valid_from: int, w: int, eps: float):
    """Returns ``(z, m, s)`` from the per-index definitions."""
    x = list(map(float, x))
    n = len(x)
    m = [NAN] * n
    for t in range(valid_from + w, n):
        m[t] = _median(x[t - w:t])
    centered = [x[t] - m[t] for t in range(n)]
    s = [NAN] * n
    z = [NAN] * n
    for t in range(valid_from + 2 * w, n):
        s[t] = _median([abs(centered[u]) for u in range(t - w, t)]) + eps
        z[t] = (x[t] - m[t]) / s[t]
    return z, m, s


# -- indicators ------------------------------------------------------------

def rsi(closes, n: int) -> list[float]:
    c = list(map(float, closes))
    out = [NAN] * len(c)
    for t in range(n, len(c)):
        g = l = 0.0
        for i in range(t - n + 1, t + 1):
            ch = c[i] - c[i - 1]
            if ch > 0:
                g += ch
            elif ch < 0:
                l += -ch
        g /= n
        l /= n
        out[t] = 50.0 if g + l == 0 else 100.0 * (1 - 1 / (1 + g / l)) if l > 0 else 100.0
    return out


def mfi(high, low, close, volume, n: int) -> list[float]:
    tp = [(h + l + c) / 3 for h, l, c in zip(high, low, close)]
    out = [NAN] * len(tp)
    for t in range(n, len(tp)):
        pmf = nmf = 0.0
        for i in range(t - n + 1, t + 1):
            flow = tp[i] * volume[i]
            if tp[i] > tp[i - 1]:
                pmf += flow
            elif tp[i] < tp[i - 1]:
                nmf += flow
        if pmf + nmf == 0:
            out[t] = 50.0
        elif nmf == 0:
            out[t] = 100.0
        else:
            out[t] = 100.0 * (1 - 1 / (1 + pmf / nmf))
    return out


def _ema(x: list[float], span: int) -> list[float]:
    a = 2 / (span + 1)
    out = [x[0]]
    for v in x[1:]:
        out.append(a * v + (1 - a) * out[-1])
    return out


def macd_hist(closes, fast: int, slow: int, signal: int) -> list[float]:
    c = list(map(float, closes))
    line = [f - s for f, s in zip(_ema(c, fast), _ema(c, slow))]
    sig = _ema(line, signal)
    start = slow + signal - 2
    return [NAN if t < start else line[t] - sig[t] for t in range(len(c))]


def bb_percent(closes, n: int, k: float) -> list[float]:
    """%B written as (P - mu + k*sd) / (2*k*sd) with every moment taken about P.

    x - P is exact for nearby prices, so the reference keeps full precision
    even when sd is tiny relative to the price level.
    """
    c = list(map(float, closes))
    out = [NAN] * len(c)
    for t in range(n - 1, len(c)):
        dev = [v - c[t] for v in c[t - n + 1:t + 1]]
        g = math.fsum(dev) / n  # mu - P
        sd = math.sqrt(math.fsum((d - g) ** 2 for d in dev) / n)
        if sd < 1e-12:
            out[t] = 50.0
        else:
            out[t] = min(100.0, max(0.0, 100.0 * (k * sd - g) / (2.0 * k * sd)))
    return out


# -- decision and metrics --------------------------------------------------

def hysteresis(signal, theta: float, start_state: int = 0) -> list[int]:
    p_prev = start_state
    out = []
    for s in signal:
        if p_prev == 0 and s > +theta:
            p = 1
        elif p_prev == 1 and s < -theta:
            p = 0
        else:
            p = p_prev
        out.append(p)
        p_prev = p
    return out


def max_drawdown(equity) -> float:
    v = list(map(float, equity))
    worst = 0.0
    for t in range(len(v)):
        peak = v[0]
        for u in range(t + 1):
            if v[u] > peak:
                peak = v[u]
        worst = min(worst, v[t] / peak - 1)
    return worst


def percentile_linear(vals, q: float) -> float:
    s = sorted(vals)
    pos = (len(s) - 1) * q / 100
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


# -- end-to-end pipeline and walk-forward ----------------------------------

def signal_series(candles, *, n_rsi=14, n_mfi=14, macd=(12, 26, 9), n_bb=20, k_bb=2.0,
                  w_norm=50, eps=1e-9, n_diff=2, w_ma=2, lambda1=1.0, lambda2=1.0, amp=1.0):
    """Return ``(f, valid_from)`` by straight-line recomputation from raw candles."""
    hi, lo, cl, vo = (list(map(float, a)) for a in (candles.high, candles.low, candles.close, candles.volume))
    raw = {
        "RSI": (rsi(cl, n_rsi), n_rsi),
        "MFI": (mfi(hi, lo, cl, vo, n_mfi), n_mfi),
        "MACD": (macd_hist(cl, *macd), macd[1] + macd[2] - 2),
        "BBP": (bb_percent(cl, n_bb, k_bb), n_bb - 1),
    }
    zs = []
    vf = 0
    for series, start in raw.values():
        z, _, _ = normalize(series, start, w_norm, eps)
        zs.append(z)
        vf = max(vf, start + 2 * w_norm)
    n = len(cl)
    f0 = [NAN if t < vf else sum(z[t] for z in zs) / len(zs) for t in range(n)]
    d = [NAN] * n
    for t in range(vf + n_diff, n):
        d[t] = (f0[t] - f0[t - n_diff]) / n_diff
    ds = [NAN] * n
    for t in range(vf + n_diff + w_ma - 1, n):
        ds[t] = sum(d[t - w_ma + 1:t + 1]) / w_ma
    out = [NAN] * n
    for t in range(n):
        c1 = math.tanh(abs(lambda1 * f0[t])) if not math.isnan(f0[t]) else NAN
        c2 = amp * (1 - math.tanh(abs(lambda2 * f0[t]))) if not math.isnan(f0[t]) else NAN
        out[t] = c1 * f0[t] + c2 * ds[t]
    return out, vf + n_diff + w_ma - 1


def walkforward(candles, theta: float, grid: list[dict], pipeline: dict, t0: int | None = None):
    """Exhaustive re-enumeration of every epoch on truncated history.

    ``grid`` entries hold ``w_fit, rho, n_diff, w_ma, lambda1, lambda2, amp`` in
    enumeration order. Returns a list of per-epoch dicts with the selected grid
    index, its J, and every candidate's J.
    """
    n = len(candles)
    close = list(map(float, candles.close))
    w_vals = [int(math.floor(g["w_fit"] / g["rho"] + 0.5)) for g in grid]
    epochs = []
    carry = 0
    t = t0
    while t is not None and t < n:
        hist = candles.slice(0, t)
        js, tos = [], []
        sig_cache = {}
        for g, wv in zip(grid, w_vals):
            key = (g["n_diff"], g["w_ma"], g["lambda1"], g["lambda2"], g["amp"])
            if key not in sig_cache:
                sig_cache[key] = signal_series(hist, **pipeline, n_diff=g["n_diff"], w_ma=g["w_ma"],
                                               lambda1=g["lambda1"], lambda2=g["lambda2"], amp=g["amp"])
            f, vf = sig_cache[key]
            if t < vf + g["w_fit"] + wv:
                js.append(None)
                tos.append(None)
                continue
            pos = hysteresis(f[t - wv:t], theta, 0)
            held = [0] + pos[:-1]
            growth = 1.0
            for k, tau in enumerate(range(t - wv, t)):
                growth *= 1 + held[k] * (close[tau] - close[tau - 1]) / close[tau - 1]
            js.append((growth - 1) / math.sqrt(wv))
            tos.append(sum(abs(a - b) for a, b in zip(pos, [0] + pos[:-1])))
        feas = [i for i, j in enumerate(js) if j is not None]
        best = max(js[i] for i in feas)
        tied = [i for i in feas if js[i] == best]
        sel = min(tied, key=lambda i: (tos[i], i))
        w_exec = w_vals[sel]
        if t + w_exec > n:
            break
        g = grid[sel]
        full, _ = signal_series(candles.slice(0, t + w_exec), **pipeline, n_diff=g["n_diff"],
                                w_ma=g["w_ma"], lambda1=g["lambda1"], lambda2=g["lambda2"], amp=g["amp"])
        pos = hysteresis(full[t:t + w_exec], theta, carry)
        epochs.append({"boundary_t": t, "selected": sel, "j_val": js[sel], "j_all": js,
                       "carry_in": carry, "carry_out": pos[-1]})
        carry = pos[-1]
        t += w_exec
    return epochs


# -- comparison harness ----------------------------------------------------

@dataclass
class CompareReport:
    component: str
    passed: bool
    n_compared: int
    max_abs_err: float
    first_divergence: int | None
    tolerance: float
    seed_text: str = ""
    detail: dict = field(default_factory=dict)

    def to_record(self) -> str:
        return json.dumps({"component": self.component, "passed": self.passed,
                           "n_compared": self.n_compared, "max_abs_err": self.max_abs_err,
                           "first_divergence": self.first_divergence, "tolerance": self.tolerance,
                           "seed_text": self.seed_text, **self.detail}, sort_keys=True)


REGISTRY: dict[str, tuple[Callable, Callable, bool]] = {}


def register(name: str, production: Callable, oracle: Callable, exact: bool = False) -> None:
    REGISTRY[name] = (production, oracle, exact)


def compare_arrays(component: str, got, want, tolerance: float = 1e-12,
                   seed_text: str = "") -> CompareReport:
    a = np.asarray(got, dtype=np.float64)
    b = np.asarray(want, dtype=np.float64)
    if a.shape != b.shape:
        return CompareReport(component, False, 0, math.inf, 0, tolerance, seed_text,
                             {"reason": f"shape {a.shape} != {b.shape}"})
    nan_mismatch = np.isnan(a) != np.isnan(b)
    both = ~np.isnan(a) & ~np.isnan(b)
    err = np.zeros(a.shape)
    err[both] = np.abs(a[both] - b[both])
    bad = nan_mismatch | (err > tolerance)
    first = int(np.flatnonzero(bad.ravel())[0]) if bad.any() else None
    return CompareReport(component, first is None, int(both.sum()),
                         float(err.max()) if err.size else 0.0, first, tolerance, seed_text)


def oracle_compare(component: str, inputs: list[tuple], tolerance: float | None = None,
                   seed_text: str = "") -> CompareReport:
    """Run a registered production/oracle pair over ``inputs`` (argument tuples)."""
    if component not in REGISTRY:
        raise KeyError(f"unregistered component {component!r}")
    production, oracle, exact = REGISTRY[component]
    tol = 0.0 if exact else (1e-12 if tolerance is None else tolerance)
    worst: CompareReport | None = None
    total = 0
    for case, args in enumerate(inputs):
        rep = compare_arrays(component, production(*args), oracle(*args), tol, seed_text)
        total += rep.n_compared
        if not rep.passed:
            rep.detail["case"] = case
            return rep
        if worst is None or rep.max_abs_err > worst.max_abs_err:
            worst = rep
    return CompareReport(component, True, total, worst.max_abs_err if worst else 0.0, None, tol, seed_text)


def register_defaults() -> None:
    """Register the production/oracle pairs exercised by the acceptance suite."""
    from . import decision, indicators, metrics, normalization

    register("rolling_median", lambda x, w: normalization.rolling_median_causal(x, w, 0), rolling_median)
    register("normalize",
             lambda x, vf, w, eps: normalization.normalize_series(x, vf, w, eps)[0],
             lambda x, vf, w, eps: normalize(x, vf, w, eps)[0])
    register("mad",
             lambda x, vf, w, eps: normalization.normalize_series(x, vf, w, eps)[2],
             lambda x, vf, w, eps: normalize(x, vf, w, eps)[2])
    register("rsi", indicators.rsi, rsi)
    register("mfi", indicators.mfi, mfi)
    register("macd_hist", indicators.macd_hist, macd_hist)
    register("bb_percent", indicators.bb_percent, bb_percent)
    register("hysteresis", lambda s, th, st=0: decision.hysteresis_positions(s, th, st).positions,
             hysteresis, exact=True)
    register("max_drawdown", lambda v: [metrics.max_drawdown(v)], lambda v: [max_drawdown(v)], exact=True)
