"""Walk-forward selection on synthetic minute candles for each threshold.

Uses a reduced grid by default so the run finishes in seconds; pass --full-grid
for all 960 candidates (slow on one core).

    python3 scripts/synthetic_walkforward.py --bars 60000 --workers 2
"""

import argparse
import time

import numpy as np

from causalsig.metrics import duration_stats, summarize
from causalsig.decision import position_durations
from causalsig.synthetic import synthetic_candles
from causalsig.walkforward import FeatureStore, GridSpec, PipelineConfig, run_walkforward


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bars", type=int, default=60_000)
    ap.add_argument("--seed", default="synthetic-walkforward")
    ap.add_argument("--thetas", type=float, nargs="+", default=[0.6, 0.8, 1.0, 1.4, 1.6])
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--full-grid", action="store_true")
    args = ap.parse_args()

    grid = GridSpec() if args.full_grid else GridSpec(
        lambda1=(0.5, 1.0, 1.5), lambda2=(0.5, 1.0), amp=(1.0, 2.0), w_fit=(720, 1440), rho=(2, 3))
    candles = synthetic_candles(args.bars, args.seed)
    store = FeatureStore(candles, PipelineConfig())
    print(f"{args.bars} bars, {len(grid.candidates())} candidates")
    print("theta  epochs  total_return  max_drawdown  calmar  trades  median_hold  buy_hold_return  seconds")
    for theta in args.thetas:
        t = time.perf_counter()
        res = run_walkforward(store, grid, theta, workers=args.workers)
        if not res.epochs:
            print(f"{theta:5g}  no out-of-sample blocks fit in {args.bars} bars")
            continue
        lo, hi = res.oos_range
        rep = summarize(res.global_returns, res.global_equity, n_trades=int(res.cumulative_trades()[-1]))
        hold = duration_stats(position_durations(res.global_positions))
        bh = candles.close[hi - 1] / candles.close[lo - 1] - 1.0
        calmar = "n/a" if rep.calmar is None else f"{rep.calmar:.3f}"
        median = "n/a" if hold.empty else f"{hold.median:g}"
        print(f"{theta:5g}  {len(res.epochs):6d}  {rep.total_return:12.4f}  {rep.max_drawdown:12.4f}  "
              f"{calmar:>6}  {rep.total_trades:6d}  {median:>11}  {bh:15.4f}  {time.perf_counter() - t:7.1f}")


if __name__ == "__main__":
    main()
