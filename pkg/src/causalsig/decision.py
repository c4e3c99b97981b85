"""Long/flat hysteresis state machine, delayed execution, equity and turnover."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FLAT, LONG = 0, 1


class NonCausalInputError(TypeError):
    """A series built from future samples was passed to the decision rule."""


class EquityWipeoutError(ValueError):
    """A per-bar return of -100% or worse."""


@dataclass(frozen=True)
class PositionPath:
    positions: np.ndarray
    theta: float
    start_state: int = FLAT
    valid_from: int = 0

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class Durations:
    lengths: list[int]
    starts: list[int]
    open_ended: bool

    def __len__(self) -> int:
        return len(self.lengths)


@dataclass(frozen=True)
class EquityCurve:
    returns: np.ndarray
    equity: np.ndarray
    turnover: int
    durations: Durations


def _signal_values(signal) -> np.ndarray:
    if getattr(signal, "causal", True) is False:
        raise NonCausalInputError("refusing to trade on a non-causal series")
    if hasattr(signal, "f") and hasattr(signal, "valid_from"):
        return np.asarray(signal.f, dtype=np.float64)
    return np.asarray(signal, dtype=np.float64)


def hysteresis_states(values, theta: float, start_state: int = FLAT) -> list[int]:
    """Run the switching rule over ``values`` starting from ``start_state``."""
    state = start_state
    up, down = theta, -theta
    out = []
    for s in values:
        if state == FLAT:
            if s > up:
                state = LONG
        elif s < down:
            state = FLAT
        out.append(state)
    return out


def hysteresis_positions(signal, theta: float, start_state: int = FLAT,
                         valid_from: int | None = None) -> PositionPath:
    """Positions over the whole grid; indices before ``valid_from`` hold ``start_state``.

    Go long only when the signal exceeds +theta, go flat only when it drops
    below -theta, otherwise hold. Comparisons are strict.
    """
    if not theta > 0:
        raise ValueError(f"theta must be > 0, got {theta}")
    if start_state not in (FLAT, LONG):
        raise ValueError("start_state must be 0 or 1")
    values = _signal_values(signal)
    if valid_from is None:
        valid_from = int(getattr(signal, "valid_from", 0))
    pos = np.full(len(values), start_state, dtype=np.int8)
    pos[valid_from:] = hysteresis_states(values[valid_from:].tolist(), theta, start_state)
    return PositionPath(pos, theta, start_state, valid_from)


def simple_returns(prices) -> np.ndarray:
    """r[t] = P[t]/P[t-1] - 1 with r[0] = 0."""
    p = np.asarray(prices, dtype=np.float64)
    r = np.zeros(len(p))
    r[1:] = (p[1:] - p[:-1]) / p[:-1]
    return r


def strategy_returns(path: PositionPath | np.ndarray, prices) -> np.ndarray:
    """R[t] = p[t-1] * r[t]; R[0] = 0. The state decided at t earns from t+1 on."""
    pos = np.asarray(getattr(path, "positions", path), dtype=np.float64)
    p = np.asarray(prices, dtype=np.float64)
    if len(pos) != len(p):
        raise ValueError(f"positions ({len(pos)}) and prices ({len(p)}) are misaligned")
    r = simple_returns(p)
    out = np.zeros(len(p))
    out[1:] = pos[:-1] * r[1:]
    return out


def equity_curve(returns) -> np.ndarray:
    """V[t] = prod_{tau <= t} (1 + R[tau]) with initial capital 1."""
    R = np.asarray(returns, dtype=np.float64)
    bad = np.flatnonzero(R <= -1.0)
    if len(bad):
        raise EquityWipeoutError(f"return <= -1 at index {int(bad[0])}: {R[bad[0]]}")
    return np.cumprod(1.0 + R)


def turnover(path: PositionPath | np.ndarray, start_state: int | None = None,
             valid_from: int | None = None) -> int:
    pos = np.asarray(getattr(path, "positions", path), dtype=np.int64)
    if start_state is None:
        start_state = getattr(path, "start_state", FLAT)
    if valid_from is None:
        valid_from = getattr(path, "valid_from", 0)
    seg = pos[valid_from:]
    if len(seg) == 0:
        return 0
    return int(abs(int(seg[0]) - start_state) + np.abs(np.diff(seg)).sum())


def position_durations(path: PositionPath | np.ndarray) -> Durations:
    """Lengths of maximal runs of LONG; a run reaching the end is flagged open."""
    pos = np.asarray(getattr(path, "positions", path), dtype=np.int8)
    if len(pos) == 0:
        return Durations([], [], False)
    padded = np.concatenate([[0], pos, [0]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return Durations((stops - starts).tolist(), starts.tolist(), bool(pos[-1] == LONG))


def run_backtest(signal, prices, theta: float, start_state: int = FLAT,
                 cost_model=None) -> tuple[PositionPath, EquityCurve]:
    """Single fixed-parameter backtest on one grid, zero transaction costs."""
    if cost_model is not None:
        raise NotImplementedError("transaction cost models are not implemented; costs are zero")
    path = hysteresis_positions(signal, theta, start_state)
    R = strategy_returns(path, prices)
    V = equity_curve(R)
    return path, EquityCurve(R, V, turnover(path), position_durations(path))


@dataclass(frozen=True)
class BlockResult:
    """Execution of the rule on ``[start, stop)`` entering with ``carry_in``."""

    start: int
    stop: int
    positions: np.ndarray
    returns: np.ndarray
    turnover: int
    carry_in: int

    @property
    def carry_out(self) -> int:
        return int(self.positions[-1]) if len(self.positions) else self.carry_in

    @property
    def pnl(self) -> float:
        return float(np.prod(1.0 + self.returns) - 1.0)


def run_block(signal_values, prices, start: int, stop: int, theta: float,
              carry_in: int = FLAT) -> BlockResult:
    """Hysteresis plus delayed returns restricted to one block.

    Reads signal and prices only at indices ``start-1 .. stop-1``; the position
    held into ``start`` is ``carry_in``.
    """
    if start < 1 or stop <= start:
        raise ValueError(f"bad block [{start}, {stop})")
    s = np.asarray(signal_values[start:stop], dtype=np.float64)
    p = np.asarray(prices[start - 1:stop], dtype=np.float64)
    pos = np.array(hysteresis_states(s.tolist(), theta, carry_in), dtype=np.int8)
    held = np.concatenate([[carry_in], pos[:-1]]).astype(np.float64)
    R = held * ((p[1:] - p[:-1]) / p[:-1])
    to = int(abs(int(pos[0]) - carry_in) + np.abs(np.diff(pos.astype(np.int64))).sum())
    return BlockResult(start, stop, pos, R, to, carry_in)
