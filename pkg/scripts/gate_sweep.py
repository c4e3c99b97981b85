"""Median |F| over the gate grid on a synthetic normalized panel.

    python3 scripts/gate_sweep.py --bars 30000
"""

import argparse

from causalsig.indicators import compute_panel
from causalsig.normalization import normalize
from causalsig.signal import median_abs_sweep
from causalsig.synthetic import synthetic_candles
from causalsig.walkforward import GridSpec


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bars", type=int, default=30_000)
    ap.add_argument("--seed", default="gate-sweep")
    ap.add_argument("--n-diff", type=int, default=2)
    ap.add_argument("--w-ma", type=int, default=2)
    args = ap.parse_args()

    g = GridSpec()
    panel = normalize(compute_panel(synthetic_candles(args.bars, args.seed)))
    rows = median_abs_sweep(panel, g.lambda1, g.lambda2, g.amp, n_diff=args.n_diff, w_ma=args.w_ma)
    print("lambda1  lambda2  amp  median_abs_f")
    for r in rows:
        print(f"{r['lambda1']:7g}  {r['lambda2']:7g}  {r['amp']:3g}  {r['median_abs_f']:.6f}")


if __name__ == "__main__":
    main()
