import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from causalsig import oracles
from causalsig.decision import Durations
from causalsig.metrics import (MINUTES_PER_YEAR, calmar_ratio, drawdowns, duration_stats,
                               max_drawdown, summarize)

# (total_return, max_drawdown, calmar) as published for the four asset/strategy pairs
TABLE2 = [(0.033304, -0.200671, 0.165963), (2.620689, -0.114912, 22.805979),
          (0.849965, -0.677898, 1.253825), (1.596073, -0.440523, 3.623134)]


@pytest.mark.parametrize("tr,mdd,want", TABLE2)
def test_calmar_table2(tr, mdd, want):
    assert abs(calmar_ratio(tr, mdd) - want) / want < 1e-4


def test_calmar_guard():
    assert calmar_ratio(0.5, 0.0) is None


def test_max_drawdown_examples():
    assert max_drawdown([1, 1.2, 0.9, 1.3]) == pytest.approx(0.9 / 1.2 - 1, abs=0)
    assert max_drawdown([1, 2, 3, 4]) == 0
    with pytest.raises(ValueError):
        max_drawdown([])


def test_max_drawdown_matches_double_loop(rng):
    for _ in range(50):
        v = np.exp(np.cumsum(rng.normal(0, 0.02, rng.integers(1, 400))))
        assert max_drawdown(v) == oracles.max_drawdown(v.tolist())


def test_strictly_increasing_equity():
    R = np.full(100, 0.001)
    rep = summarize(R)
    assert rep.max_drawdown == 0 and rep.ulcer_index == 0 and rep.time_under_water == 0
    assert rep.calmar is None


def test_summarize_definitions(rng):
    R = rng.normal(0, 0.01, 1000)
    rep = summarize(R, n_trades=37)
    V = np.cumprod(1 + R)
    peak = np.maximum.accumulate(np.concatenate([[1.0], V]))[1:]
    dd = V / peak - 1
    assert rep.total_return == V[-1] - 1
    assert rep.volatility == R.std()
    assert rep.downside_volatility == R[R < 0].std()
    assert rep.sharpe == R.mean() / R.std()
    assert rep.sortino == R.mean() / R[R < 0].std()
    assert rep.max_drawdown == pytest.approx(dd.min(), abs=1e-15)
    assert rep.ulcer_index == pytest.approx(math.sqrt(np.mean((100 * dd) ** 2)), rel=1e-12)
    assert rep.time_under_water == np.mean(V < peak)
    assert rep.trades_per_1k == 37.0
    assert rep.calmar == pytest.approx(rep.total_return / abs(rep.max_drawdown), rel=1e-15)


def test_zero_variance_sharpe_absent():
    rep = summarize(np.zeros(10))
    assert rep.sharpe is None and rep.sortino is None and rep.downside_volatility is None
    assert rep.total_return == 0 and rep.max_drawdown == 0


def test_annualization_identity(rng):
    rep = summarize(rng.normal(1e-5, 1e-3, 500))
    assert MINUTES_PER_YEAR == 365 * 24 * 60
    assert rep.annualized_sharpe() == rep.sharpe * math.sqrt(365 * 24 * 60)
    assert rep.annualized_sortino() == rep.sortino * math.sqrt(365 * 24 * 60)


def test_initial_capital_counts_as_peak():
    rep = summarize(np.array([-0.1, 0.05]))
    assert rep.time_under_water == 1.0
    assert rep.max_drawdown == pytest.approx(-0.1, abs=1e-15)


@given(st.lists(st.floats(-0.5, 0.5, allow_nan=False), min_size=1, max_size=200))
def test_report_invariants(rs):
    R = np.array(rs)
    rep = summarize(R)
    assert -1 <= rep.max_drawdown <= 0
    assert 0 <= rep.time_under_water <= 1
    if rep.max_drawdown < 0:
        assert rep.calmar == rep.total_return / abs(rep.max_drawdown)
    assert summarize(R) == rep


def test_empty_returns_rejected():
    with pytest.raises(ValueError):
        summarize([])


def test_drawdowns_series():
    assert drawdowns([1, 2, 1]).tolist() == [0, 0, -0.5]


# -- durations ------------------------------------------------------------------

def test_duration_examples():
    s = duration_stats([1, 2, 3])
    assert (s.mean, s.median, s.max) == (2, 2, 3)
    s = duration_stats([5])
    assert s.p25 == s.median == s.p75 == s.p90 == s.max == 5
    e = duration_stats([])
    assert e.empty and e.count == 0 and e.mean is None


def test_durations_percentiles_match_sort_oracle(rng):
    d = rng.integers(1, 5000, 10_000).tolist()
    s = duration_stats(d)
    for q, v in ((25, s.p25), (50, s.median), (75, s.p75), (90, s.p90)):
        assert v == pytest.approx(oracles.percentile_linear(d, q), abs=1e-9)
    assert s.p25 <= s.median <= s.p75 <= s.p90 <= s.max


def test_nearest_rank_method():
    s = duration_stats(list(range(1, 11)), method="nearest")
    assert (s.p25, s.p75, s.p90) == (3, 8, 9) and s.percentile_method == "nearest"
    with pytest.raises(ValueError):
        duration_stats([1, 2], method="cubic")


def test_max_span_timestamps():
    ts = np.arange(10) * 60_000
    s = duration_stats(Durations([2, 4], [1, 5], False), ts)
    assert (s.max, s.max_start, s.max_end) == (4, 5 * 60_000, 8 * 60_000)
