"""Strictly causal robust normalization: trailing median baseline and MAD scale.

For every index t both statistics use only the ``w`` samples at
``t-w .. t-1``; the sample at t never enters its own baseline or scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .indicators import IndicatorPanel

DEFAULT_W_NORM = 5000
DEFAULT_EPS = 1e-9


@dataclass(frozen=True)
class NormalizedPanel:
    z: dict[str, np.ndarray]
    baseline: dict[str, np.ndarray]
    scale: dict[str, np.ndarray]
    w_norm: int
    eps: float
    valid_from: dict[str, int]

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(self.z)

    @property
    def common_valid_from(self) -> int:
        return max(self.valid_from.values())

    def __len__(self) -> int:
        return len(next(iter(self.z.values())))

    def negated(self) -> "NormalizedPanel":
        return NormalizedPanel({k: -v for k, v in self.z.items()}, self.baseline, self.scale,
                               self.w_norm, self.eps, self.valid_from)


def _first_valid(x: np.ndarray) -> int:
    finite = np.flatnonzero(~np.isnan(x))
    return int(finite[0]) if len(finite) else len(x)


def rolling_median_causal(x, w: int, start: int | None = None) -> np.ndarray:
    """Median of the ``w`` samples strictly before each index.

    ``start`` is the first valid index of ``x`` (inferred from leading NaNs when
    omitted); outputs before ``start + w`` are NaN.
    """
    if w < 1:
        raise ValueError("w must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    if start is None:
        start = _first_valid(x)
    out = np.full(len(x), np.nan)
    seg = x[start:]
    if len(seg) <= w:
        return out
    # pandas' skiplist median over the inclusive window ending at t-1
    med = pd.Series(seg).rolling(w, min_periods=w).median().to_numpy()
    out[start + w:] = med[w - 1:-1]
    return out


def rolling_mad_causal(centered, w: int, eps: float = DEFAULT_EPS,
                       start: int | None = None) -> np.ndarray:
    """Median of ``|centered|`` over the strictly prior window, plus ``eps``."""
    centered = np.asarray(centered, dtype=np.float64)
    return rolling_median_causal(np.abs(centered), w, start) + eps


def normalize_series(x, valid_from: int, w_norm: int, eps: float = DEFAULT_EPS):
    """Return ``(z, baseline, scale, z_valid_from)`` for one indicator series."""
    x = np.asarray(x, dtype=np.float64)
    m = rolling_median_causal(x, w_norm, valid_from)
    centered = x - m
    s = rolling_mad_causal(centered, w_norm, eps, valid_from + w_norm)
    with np.errstate(invalid="ignore", divide="ignore"):  # only reachable with eps = 0
        z = (x - m) / s
    return z, m, s, valid_from + 2 * w_norm


def normalize(panel: IndicatorPanel, w_norm: int = DEFAULT_W_NORM,
              eps: float = DEFAULT_EPS) -> NormalizedPanel:
    if w_norm < 2:
        raise ValueError("w_norm must be >= 2")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    z, m, s, vf = {}, {}, {}, {}
    for key, values in panel.series.items():
        z[key], m[key], s[key], vf[key] = normalize_series(values, panel.valid_from[key], w_norm, eps)
    return NormalizedPanel(z, m, s, w_norm, eps, vf)
