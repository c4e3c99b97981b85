"""Walk-forward grid selection with out-of-sample execution.

At each boundary t every candidate is scored on its own validation block
``[t - w_val, t)`` (entered flat), the best candidate by PnL/sqrt(T) is frozen
and executed on ``[t, t + w_exec)`` with the position carried over from the
previous block, and t advances by ``w_exec``.

All per-bar features are computed once over the full series. They are causal,
so values at indices < t are identical to those computed on data truncated at
t; the adversarial-future tests check this bit for bit.
"""

from __future__ import annotations

import itertools
import logging
import math
import multiprocessing as mp
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .decision import FLAT, BlockResult, run_block
from .indicators import IndicatorConfig, compute_panel
from .market_data import CandleSeries
from .normalization import DEFAULT_EPS, DEFAULT_W_NORM, normalize
from .signal import DerivativeCache, SignalParams, gate

logger = logging.getLogger(__name__)

FREQUENCY_DIMS = ("w_fit", "rho", "w_exec", "lambda1", "lambda2", "amp")


class InfeasibleCandidate(ValueError):
    pass


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ParamSet:
    sig: SignalParams
    w_fit: int
    rho: float

    def __post_init__(self):
        if self.w_fit < 1 or not self.rho > 0:
            raise ValueError("w_fit must be >= 1 and rho > 0")
        if self.w_val < 1:
            raise ValueError(f"w_fit={self.w_fit}, rho={self.rho} gives an empty validation block")

    @property
    def w_val(self) -> int:
        return round_half_up(self.w_fit / self.rho)

    @property
    def w_exec(self) -> int:
        return self.w_val

    def values(self) -> dict:
        s = self.sig
        return {"w_fit": self.w_fit, "rho": self.rho, "w_val": self.w_val, "w_exec": self.w_exec,
                "n_diff": s.n_diff, "w_ma": s.w_ma, "lambda1": s.lambda1, "lambda2": s.lambda2,
                "amp": s.amp}


@dataclass(frozen=True)
class GridSpec:
    """Candidate grid; defaults are the full published grid (960 candidates)."""

    n_diff: tuple[int, ...] = (2,)
    w_ma: tuple[int, ...] = (2,)
    lambda1: tuple[float, ...] = (0.01, 0.5, 1.0, 1.5)
    lambda2: tuple[float, ...] = (0.01, 0.5, 1.0, 1.5)
    amp: tuple[float, ...] = (0.75, 1.0, 2.0)
    w_fit: tuple[int, ...] = (720, 1440, 2880, 7200, 12000)
    rho: tuple[float, ...] = (2, 3, 5, 6)

    def __post_init__(self):
        for name in ("n_diff", "w_ma", "lambda1", "lambda2", "amp", "w_fit", "rho"):
            if not getattr(self, name):
                raise ValueError(f"grid dimension {name} is empty")

    def signal_params(self, weights=None) -> list[SignalParams]:
        return [SignalParams(nd, wm, l1, l2, a, weights)
                for nd, wm, l1, l2, a in itertools.product(self.n_diff, self.w_ma, self.lambda1,
                                                           self.lambda2, self.amp)]

    def candidates(self, weights=None) -> list[ParamSet]:
        """Deterministic enumeration order: window parameters outermost."""
        sigs = self.signal_params(weights)
        return [ParamSet(s, wf, r) for wf, r in itertools.product(self.w_fit, self.rho) for s in sigs]

    def max_w_val(self) -> int:
        return max(round_half_up(wf / r) for wf in self.w_fit for r in self.rho)

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in
                ("n_diff", "w_ma", "lambda1", "lambda2", "amp", "w_fit", "rho")}


@dataclass(frozen=True)
class PipelineConfig:
    indicators: IndicatorConfig = field(default_factory=IndicatorConfig)
    w_norm: int = DEFAULT_W_NORM
    eps: float = DEFAULT_EPS
    weights: tuple[float, ...] | None = None


@dataclass(frozen=True)
class CandidateScore:
    params: ParamSet
    j_val: float
    pnl_val: float
    turnover_val: int
    t_eval: int
    index: int = 0


def objective(returns) -> tuple[float, float]:
    """Return ``(pnl, j)`` with ``pnl = prod(1+R) - 1`` and ``j = pnl / sqrt(T)``."""
    R = np.asarray(returns, dtype=np.float64)
    if len(R) == 0:
        raise ValueError("empty evaluation window")
    pnl = float(np.prod(1.0 + R) - 1.0)
    return pnl, pnl / math.sqrt(len(R))


def score_block(f0, d_smooth, close, t: int, params: ParamSet, theta: float,
                index: int = 0) -> CandidateScore:
    """Score one candidate on ``[t - w_val, t)``; reads nothing at or after t."""
    start = t - params.w_val
    lo = start - 1
    _, _, f = gate(f0[lo:t], d_smooth[lo:t], params.sig)
    block = run_block(f, close[lo:t], 1, t - lo, theta, FLAT)
    pnl, j = objective(block.returns)
    return CandidateScore(params, j, pnl, block.turnover, params.w_val, index)


def execute_block(f0, d_smooth, close, t: int, params: ParamSet, theta: float,
                  carry_in: int) -> BlockResult:
    stop = t + params.w_exec
    lo = t - 1
    _, _, f = gate(f0[lo:stop], d_smooth[lo:stop], params.sig)
    res = run_block(f, close[lo:stop], 1, stop - lo, theta, carry_in)
    return BlockResult(t, stop, res.positions, res.returns, res.turnover, carry_in)


class FeatureStore:
    """Normalized panel and derivative cache over one candle series."""

    def __init__(self, candles: CandleSeries, pipeline: PipelineConfig = PipelineConfig()):
        self.candles = candles
        self.pipeline = pipeline
        self.indicators = compute_panel(candles, pipeline.indicators)
        self.panel = normalize(self.indicators, pipeline.w_norm, pipeline.eps)
        self.cache = DerivativeCache(self.panel)
        self.close = candles.close

    def __len__(self) -> int:
        return len(self.candles)

    def arrays(self, sig: SignalParams) -> tuple[np.ndarray, np.ndarray]:
        f0 = self.cache.f0(sig.weights)
        _, d = self.cache.derivative(sig)
        return f0, d

    def valid_from(self, sig: SignalParams) -> int:
        return self.cache.valid_from(sig)

    def feasible_from(self, p: ParamSet) -> int:
        return self.valid_from(p.sig) + p.w_fit + p.w_val


def minimum_t0(store: FeatureStore, grid: GridSpec, weights=None) -> int:
    warmup = max(store.valid_from(s) for s in grid.signal_params(weights))
    return warmup + max(grid.w_fit) + grid.max_w_val()


def evaluate_candidate(history: CandleSeries, params: ParamSet, theta: float,
                       pipeline: PipelineConfig = PipelineConfig()) -> CandidateScore:
    """Rebuild the whole pipeline on ``history`` and score the block ending at its last bar."""
    t = len(history)
    store = FeatureStore(history, pipeline)
    need = store.feasible_from(params)
    if t < need:
        raise InfeasibleCandidate(f"history of {t} bars < required {need}")
    f0, d = store.arrays(params.sig)
    return score_block(f0, d, store.close, t, params, theta)


def select(scores: Sequence[CandidateScore], tie_eps: float = 0.0) -> CandidateScore:
    """Highest J; near-ties (relative ``tie_eps``) go to lower turnover, then enumeration order."""
    if not scores:
        raise ValueError("no candidate scores to select from")
    j_max = max(s.j_val for s in scores)
    cutoff = j_max - tie_eps * abs(j_max)
    tied = [s for s in scores if s.j_val >= cutoff]
    return min(tied, key=lambda s: (s.turnover_val, s.index))


@dataclass
class EpochRecord:
    epoch: int
    boundary_t: int
    boundary_ts: int
    selected: ParamSet
    score: CandidateScore
    oos_start: int
    oos_stop: int
    oos_returns: np.ndarray
    oos_positions: np.ndarray
    oos_turnover: int
    carry_in: int
    carry_out: int
    n_candidates: int
    n_skipped: int
    candidate_scores: list[CandidateScore] | None = None

    @property
    def oos_pnl(self) -> float:
        return float(np.prod(1.0 + self.oos_returns) - 1.0)

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "boundary_t": self.boundary_t, "boundary_ts": self.boundary_ts,
                **self.selected.values(),
                "j_val": self.score.j_val, "pnl_val": self.score.pnl_val,
                "turnover_val": self.score.turnover_val, "t_eval": self.score.t_eval,
                "oos_start": self.oos_start, "oos_stop": self.oos_stop, "oos_pnl": self.oos_pnl,
                "oos_turnover": self.oos_turnover, "carry_in": self.carry_in,
                "carry_out": self.carry_out, "n_candidates": self.n_candidates,
                "n_skipped": self.n_skipped}


@dataclass
class WalkForwardResult:
    epochs: list[EpochRecord]
    theta: float
    t0: int
    global_returns: np.ndarray
    global_equity: np.ndarray
    global_positions: np.ndarray
    selection_frequencies: dict[str, dict]

    @property
    def oos_range(self) -> tuple[int, int]:
        if not self.epochs:
            return (self.t0, self.t0)
        return (self.epochs[0].oos_start, self.epochs[-1].oos_stop)

    def cumulative_trades(self) -> np.ndarray:
        if not self.epochs:
            return np.zeros(0, dtype=np.int64)
        pos = self.global_positions.astype(np.int64)
        prev = np.concatenate([[self.epochs[0].carry_in], pos[:-1]])
        return np.cumsum(np.abs(pos - prev))


def selection_frequencies(epochs: Iterable) -> dict[str, dict]:
    """Per-dimension counts of selected values; accepts records or their dicts."""
    counts = {d: Counter() for d in FREQUENCY_DIMS}
    for e in epochs:
        vals = e.selected.values() if isinstance(e, EpochRecord) else e
        for d in FREQUENCY_DIMS:
            counts[d][vals[d]] += 1
    return {d: dict(sorted(c.items())) for d, c in counts.items()}


# -- candidate scoring, optionally in worker processes ---------------------

_WORKER: dict = {}


def _init_worker(payload: dict) -> None:
    _WORKER.clear()
    _WORKER.update(payload)


def _score_chunk(t: int, indices: list[int], theta: float) -> list[CandidateScore]:
    cands = _WORKER["candidates"]
    arrays = _WORKER["arrays"]
    close = _WORKER["close"]
    out = []
    for i in indices:
        p = cands[i]
        f0, d = arrays[_deriv_key(p.sig)]
        out.append(score_block(f0, d, close, t, p, theta, i))
    return out


def _deriv_key(sig: SignalParams) -> tuple:
    return (sig.weights, sig.n_diff, sig.w_ma)


class _Scorer:
    def __init__(self, payload: dict, workers: int):
        self.payload = payload
        self.workers = workers
        self.pool = None
        if workers > 1:
            self.pool = ProcessPoolExecutor(max_workers=workers, mp_context=mp.get_context("fork"),
                                            initializer=_init_worker, initargs=(payload,))
        else:
            _init_worker(payload)

    def score(self, t: int, indices: list[int], theta: float) -> list[CandidateScore]:
        if self.pool is None or len(indices) < 2:
            if self.pool is not None:
                _init_worker(self.payload)
            return _score_chunk(t, indices, theta)
        n = min(self.workers, len(indices))
        chunks = [indices[k::n] for k in range(n)]
        futures = [self.pool.submit(_score_chunk, t, c, theta) for c in chunks]
        merged = [s for f in futures for s in f.result()]
        return sorted(merged, key=lambda s: s.index)

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()
        _WORKER.clear()


def _param_from_record(rec: dict, candidates: list[ParamSet]) -> ParamSet:
    for p in candidates:
        v = p.values()
        if all(v[k] == rec[k] for k in ("w_fit", "rho", "n_diff", "w_ma", "lambda1", "lambda2", "amp")):
            return p
    raise ValueError(f"epoch {rec.get('epoch')}: selected parameters are not in the grid")


def run_walkforward(data: CandleSeries | FeatureStore, grid: GridSpec, theta: float,
                    t0: int | None = None, pipeline: PipelineConfig = PipelineConfig(),
                    workers: int = 1, tie_eps: float = 0.0,
                    resume: Sequence[dict] | None = None,
                    on_epoch: Callable[[EpochRecord], None] | None = None,
                    keep_candidate_scores: bool = False) -> WalkForwardResult:
    if not theta > 0:
        raise ValueError("theta must be > 0")
    store = data if isinstance(data, FeatureStore) else FeatureStore(data, pipeline)
    weights = store.pipeline.weights
    n = len(store)
    candidates = grid.candidates(weights)
    required = minimum_t0(store, grid, weights)
    if t0 is None:
        t0 = required
    if t0 < required:
        raise ValueError(f"t0={t0} is below the first boundary where every candidate is feasible ({required})")
    if n < t0 + min(p.w_exec for p in candidates):
        raise ValueError(f"data of {n} bars is shorter than the first feasible boundary plus one block (t0={t0})")

    arrays = {}
    for p in candidates:
        k = _deriv_key(p.sig)
        if k not in arrays:
            arrays[k] = store.arrays(p.sig)
    close = store.close
    ts = store.candles.timestamp
    feasible_from = [store.feasible_from(p) for p in candidates]

    epochs: list[EpochRecord] = []
    carry = FLAT
    t = t0
    prev: CandidateScore | None = None
    for rec in resume or ():
        if rec["boundary_t"] != t:
            raise ValueError(f"resume record {rec['epoch']} starts at {rec['boundary_t']}, expected {t}")
        p = _param_from_record(rec, candidates)
        f0, d = arrays[_deriv_key(p.sig)]
        block = execute_block(f0, d, close, t, p, theta, carry)
        score = CandidateScore(p, rec["j_val"], rec["pnl_val"], rec["turnover_val"], rec["t_eval"],
                               candidates.index(p))
        e = EpochRecord(len(epochs), t, int(ts[t]), p, score, t, block.stop, block.returns,
                        block.positions, block.turnover, carry, block.carry_out,
                        rec["n_candidates"], rec["n_skipped"])
        if e.oos_pnl != rec["oos_pnl"] or e.carry_out != rec["carry_out"]:
            raise ValueError(f"resume record {rec['epoch']} does not match recomputation")
        epochs.append(e)
        carry, t, prev = e.carry_out, block.stop, score

    scorer = _Scorer({"candidates": candidates, "arrays": arrays, "close": close}, workers)
    try:
        while t < n:
            live = [i for i, ff in enumerate(feasible_from) if ff <= t]
            skipped = len(candidates) - len(live)
            scores = scorer.score(t, live, theta) if live else []
            if scores:
                best = select(scores, tie_eps)
            elif prev is not None:
                best = prev
            else:
                raise InfeasibleCandidate(f"no feasible candidate at the first boundary t={t}")
            p = best.params
            if t + p.w_exec > n:
                break
            f0, d = arrays[_deriv_key(p.sig)]
            block = execute_block(f0, d, close, t, p, theta, carry)
            e = EpochRecord(len(epochs), t, int(ts[t]), p, best, t, block.stop, block.returns,
                            block.positions, block.turnover, carry, block.carry_out,
                            len(candidates), skipped, scores if keep_candidate_scores else None)
            epochs.append(e)
            if on_epoch is not None:
                on_epoch(e)
            logger.debug("epoch %d t=%d selected %s j=%.6g", e.epoch, t, p.values(), best.j_val)
            carry, t, prev = e.carry_out, block.stop, best
    finally:
        scorer.close()

    if epochs:
        R = np.concatenate([e.oos_returns for e in epochs])
        pos = np.concatenate([e.oos_positions for e in epochs])
    else:
        R, pos = np.zeros(0), np.zeros(0, dtype=np.int8)
    return WalkForwardResult(epochs, theta, t0, R, np.cumprod(1.0 + R), pos,
                             selection_frequencies(epochs))
