import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from causalsig import oracles
from causalsig.indicators import (KEYS, IndicatorConfig, bb_percent, compute_panel, ema, macd_hist,
                                  mfi, rsi)
from causalsig.synthetic import constant_candles

prices = st.lists(st.floats(1.0, 1000.0, allow_nan=False), min_size=30, max_size=80)


def _close(a, b, tol=1e-12):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.array_equal(np.isnan(a), np.isnan(b)) and np.allclose(a[~np.isnan(a)], b[~np.isnan(b)],
                                                                     rtol=0, atol=tol)


# -- RSI -----------------------------------------------------------------------

def test_rsi_rising_is_100_and_constant_is_50():
    assert np.all(rsi(np.arange(1.0, 31.0), 14)[14:] == 100.0)
    assert np.all(rsi(np.full(30, 7.0), 14)[14:] == 50.0)
    assert np.all(rsi(np.arange(31.0, 1.0, -1), 14)[14:] == 0.0)


def test_rsi_prefix_invalid_and_short_series():
    r = rsi(np.arange(1.0, 31.0), 14)
    assert np.all(np.isnan(r[:14])) and not np.isnan(r[14])
    assert np.all(np.isnan(rsi(np.arange(14.0), 14)))


def test_rsi_matches_oracle_on_40_bars(rng):
    x = 100 + np.cumsum(rng.normal(size=40))
    assert _close(rsi(x, 14), oracles.rsi(x.tolist(), 14))


# -- MFI -----------------------------------------------------------------------

def test_mfi_rising_tp_is_100_zero_volume_is_50():
    p = np.arange(1.0, 41.0)
    assert np.all(mfi(p, p, p, np.ones(40), 14)[14:] == 100.0)
    assert np.all(mfi(p, p, p, np.zeros(40), 14)[14:] == 50.0)


def test_mfi_matches_oracle_exactly(rng):
    c = 100 + np.cumsum(rng.normal(size=40))
    h, lo = c + rng.uniform(0, 1, 40), c - rng.uniform(0, 1, 40)
    v = rng.uniform(0, 100, 40)
    got = mfi(h, lo, c, v, 14)
    want = oracles.mfi(h.tolist(), lo.tolist(), c.tolist(), v.tolist(), 14)
    assert _close(got, want, tol=1e-12)


def test_mfi_ties_count_nowhere():
    # flat bars between moves change neither flow sum
    tp = np.array([1, 2, 2, 2, 3, 3, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2], dtype=float)
    v = np.ones_like(tp)
    out = mfi(tp, tp, tp, v, 14)
    pmf, nmf = 3.0, 2.0  # bar 4 rises to 3, bar 6 falls to 2; bar 1 is outside the window
    assert out[15] == pytest.approx(100 * pmf / (pmf + nmf), abs=1e-12)


# -- MACD ----------------------------------------------------------------------

def test_macd_constant_is_zero():
    h = macd_hist(np.full(100, 3.25))
    assert np.all(h[33:] == 0.0)


def test_macd_step_up_positive_next_bar():
    x = np.concatenate([np.full(50, 10.0), np.full(10, 11.0)])
    h = macd_hist(x)
    want = oracles.macd_hist(x.tolist(), 12, 26, 9)
    assert h[50] > 0 and h[51] > 0
    assert _close(h, want)


def test_macd_valid_prefix():
    h = macd_hist(np.linspace(1, 2, 60))
    assert np.all(np.isnan(h[:33])) and not np.isnan(h[33])


def test_macd_and_ema_match_recursion(rng):
    x = 50 + np.cumsum(rng.normal(size=300))
    assert _close(macd_hist(x, 12, 26, 9), oracles.macd_hist(x.tolist(), 12, 26, 9))
    assert ema(x, 1)[5] == x[5]


@given(prices, st.sampled_from([0.25, 0.5, 2.0, 4.0, 8.0]))
def test_price_scaling(xs, c):
    x = np.asarray(xs)
    # power-of-two factors scale every float operation exactly
    assert np.array_equal(rsi(c * x, 14), rsi(x, 14), equal_nan=True)
    assert np.array_equal(bb_percent(c * x, 20, 2.0), bb_percent(x, 20, 2.0), equal_nan=True)
    assert np.array_equal(macd_hist(c * x), c * macd_hist(x), equal_nan=True)


@given(prices, st.floats(0.3, 3.0))
def test_price_scaling_general_factor(xs, c):
    x = np.asarray(xs)
    assert _close(rsi(c * x, 14), rsi(x, 14), tol=1e-9)
    h1, h2 = macd_hist(c * x), c * macd_hist(x)
    scale = max(1.0, float(np.max(np.abs(c * x))))
    assert _close(h1, h2, tol=1e-12 * scale * 100)


# -- BB% -----------------------------------------------------------------------

def test_bb_upper_band_midline_and_constant():
    assert bb_percent(np.array([1.0, 3.0]), 2, 1.0)[1] == 100.0
    assert bb_percent(np.array([3.0, 1.0, 2, 2, 2, 2, 2, 2]), 8, 2.0)[7] == 50.0  # sigma = 1
    assert np.all(bb_percent(np.full(30, 0.1), 20, 2.0)[19:] == 50.0)


def test_bb_matches_oracle(rng):
    x = 100 + np.cumsum(rng.normal(size=200))
    assert _close(bb_percent(x, 20, 2.0), oracles.bb_percent(x.tolist(), 20, 2.0))


@given(prices)
def test_bounded_indicators(xs):
    x = np.asarray(xs)
    for out in (rsi(x, 14), bb_percent(x, 20, 2.0), mfi(x * 1.01, x * 0.99, x, np.ones_like(x), 14)):
        v = out[~np.isnan(out)]
        assert np.all((v >= 0) & (v <= 100))


# -- panel ---------------------------------------------------------------------

def test_panel_structural(candles_10k):
    cfg = IndicatorConfig()
    panel = compute_panel(candles_10k, cfg)
    assert set(panel.series) == set(KEYS)
    for k in KEYS:
        s = panel.series[k]
        vf = panel.valid_from[k]
        assert len(s) == len(candles_10k)
        assert np.all(np.isnan(s[:vf])) and not np.any(np.isnan(s[vf:]))


def test_panel_equals_standalone_ops(candles_small):
    c = candles_small
    p = compute_panel(c)
    assert np.array_equal(p.series["RSI"], rsi(c.close, 14), equal_nan=True)
    assert np.array_equal(p.series["MFI"], mfi(c.high, c.low, c.close, c.volume, 14), equal_nan=True)
    assert np.array_equal(p.series["MACD"], macd_hist(c.close, 12, 26, 9), equal_nan=True)
    assert np.array_equal(p.series["BBP"], bb_percent(c.close, 20, 2.0), equal_nan=True)


def test_panel_constant_prices():
    p = compute_panel(constant_candles(200, 1.5))
    for k, want in (("RSI", 50.0), ("MFI", 50.0), ("MACD", 0.0), ("BBP", 50.0)):
        assert np.all(p.series[k][p.valid_from[k]:] == want)


def test_panel_causal_prefix(candles_small):
    full = compute_panel(candles_small)
    for t in (200, 777, 2999):
        part = compute_panel(candles_small.slice(0, t + 1))
        for k in KEYS:
            assert np.array_equal(part.series[k], full.series[k][:t + 1], equal_nan=True)


def test_config_validation():
    with pytest.raises(ValueError):
        IndicatorConfig(macd_fast=26, macd_slow=12)
    with pytest.raises(ValueError):
        IndicatorConfig(n_rsi=1)
    with pytest.raises(ValueError):
        IndicatorConfig(k_bb=0)
    with pytest.raises(NotImplementedError):
        IndicatorConfig(rsi_mode="wilder")
    with pytest.raises(ValueError):
        compute_panel(constant_candles(20))
