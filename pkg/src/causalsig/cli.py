"""Command-line entry points: fetch, backtest, walkforward, demo, sweep, report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .decision import position_durations, run_backtest
from .market_data import (CandleDataError, CandleSeries, FetchError, KlineClient, fetch_candles,
                          load_candles, merge_candles, regularize, write_candles)
from .metrics import duration_stats, summarize
from .reports import (candles_digest, read_columns, read_records, record_line, run_digest,
                      write_columns, write_manifest, write_records)
from .signal import derivative_lead_demo, one_at_a_time_sweep
from .synthetic import synthetic_candles
from .walkforward import FeatureStore, run_walkforward, selection_frequencies

log = logging.getLogger("causalsig")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PIPELINE = 4


class PipelineError(RuntimeError):
    pass


# -- shared helpers --------------------------------------------------------

def _parse_time(text: str) -> int:
    if text.lstrip("-").isdigit():
        return int(text)
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "symbol", None):
        cfg.symbol = args.symbol
    if getattr(args, "theta", None):
        cfg.thetas = list(args.theta)
        cfg.backtest_theta = args.theta[0]
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    if getattr(args, "out", None):
        cfg.out = args.out
    if getattr(args, "data", None):
        cfg.data = replace(cfg.data, path=args.data, synthetic_bars=None)
    if getattr(args, "date_from", None):
        cfg.data = replace(cfg.data, start=_parse_time(args.date_from))
    if getattr(args, "date_to", None):
        cfg.data = replace(cfg.data, end=_parse_time(args.date_to))
    return cfg.validate()


def digest_text(cfg: RunConfig) -> str:
    """Config snapshot that determines results (output location and worker count excluded)."""
    d = cfg.to_dict()
    d.pop("out")
    d.pop("workers")
    return json.dumps(d, sort_keys=True)


def load_data(cfg: RunConfig) -> CandleSeries:
    src = cfg.data
    if src.synthetic_bars is not None:
        series = synthetic_candles(src.synthetic_bars, src.seed_text, cfg.symbol)
    elif src.path is not None:
        series = regularize(load_candles(src.path, cfg.symbol))
    else:
        raise ConfigError("config.data needs either 'path' or 'synthetic_bars'")
    if src.last is not None and len(series) > src.last:
        fills = series.fill_count
        series = series.slice(len(series) - src.last)
        series = replace(series, fill_count=fills)
    return series


class _Run:
    """Output directory bookkeeping for one command invocation."""

    def __init__(self, cfg: RunConfig, input_digest: str):
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config_text = digest_text(cfg)
        self.input_digest = input_digest
        self.digest = run_digest(self.config_text, input_digest)
        self.outputs: list[Path] = []
        dump = {**cfg.to_dict(), "run_digest": self.digest}
        (self.out / "effective_config.json").write_text(json.dumps(dump, indent=2, sort_keys=True) + "\n")

    def path(self, *parts: str) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        if p not in self.outputs:
            self.outputs.append(p)
        return p

    def columns(self, name: str, cols: dict, **meta) -> None:
        write_columns(self.path(name), cols, {"run_digest": self.digest, **meta})

    def records(self, name: str, recs) -> None:
        write_records(self.path(name), recs, self.digest)

    def finish(self) -> None:
        write_manifest(self.out, self.config_text, self.input_digest, self.digest, self.outputs)


# -- commands --------------------------------------------------------------

def cmd_fetch(cfg: RunConfig) -> int:
    src = cfg.data
    if src.start is None or src.end is None:
        raise ConfigError("fetch needs data.start and data.end (or --from/--to)")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    target = Path(src.path) if src.path else out / f"{cfg.symbol}.csv"
    opts = cfg.fetch
    client = KlineClient(src.resolved_endpoint(), opts.page_size, opts.max_retries, opts.backoff_s,
                         opts.min_interval_s)
    if src.start >= src.end:
        raise ConfigError(f"empty fetch range: start={src.start} end={src.end}")
    fresh = fetch_candles(client.endpoint, cfg.symbol, src.start, src.end, client=client,
                          workers=opts.workers)
    if target.exists():
        fresh = merge_candles(load_candles(target, cfg.symbol), fresh)
    tmp = target.with_suffix(target.suffix + ".part")
    write_candles(fresh, tmp)
    os.replace(tmp, target)
    cfg_text = digest_text(cfg)
    digest = candles_digest(fresh)
    run = run_digest(cfg_text, digest)
    dump = {**cfg.to_dict(), "run_digest": run}
    (out / "effective_config.json").write_text(json.dumps(dump, indent=2, sort_keys=True) + "\n")
    write_manifest(out, cfg_text, digest, run, [target] if target.parent == out else [])
    log.info("wrote %d candles to %s", len(fresh), target)
    return EXIT_OK


def cmd_backtest(cfg: RunConfig) -> int:
    series = load_data(cfg)
    run = _Run(cfg, candles_digest(series))
    try:
        store = FeatureStore(series, cfg.pipeline())
        frame = store.cache.frame(cfg.backtest)
    except ValueError as exc:
        raise PipelineError(f"insufficient data for warm-up: {exc}") from exc
    theta = cfg.backtest_theta
    path, curve = run_backtest(frame, series.close, theta)
    vf = frame.valid_from
    run.columns("signal.csv", {
        "timestamp": series.timestamp, "close": series.close, **frame.columns(),
        "position": path.positions, "return": curve.returns, "equity": curve.equity,
    }, theta=theta)
    norm_cols = {"timestamp": series.timestamp}
    for k in store.panel.keys:
        norm_cols[f"{k}_centered"] = store.indicators.series[k] - store.panel.baseline[k]
        norm_cols[f"{k}_scale"] = store.panel.scale[k]
        norm_cols[f"{k}_z"] = store.panel.z[k]
    run.columns("normalization.csv", norm_cols, w_norm=cfg.w_norm)
    R = curve.returns[vf:]
    perf = summarize(R, path=path.positions[vf:], n_trades=curve.turnover)
    bh = summarize(np.concatenate([[0.0], np.diff(series.close[vf:]) / series.close[vf:-1]]))
    dur = duration_stats(curve.durations, series.timestamp)
    run.records("report.jsonl", [
        {"kind": "performance", "strategy": "proposed", "theta": theta, **perf.to_dict()},
        {"kind": "performance", "strategy": "buy_and_hold", **bh.to_dict()},
        {"kind": "durations", "theta": theta, "open_ended": curve.durations.open_ended, **dur.to_dict()},
        {"kind": "run", "n_bars": len(series), "valid_from": vf, "fill_count": series.fill_count,
         "params": asdict(frame.params)},
    ])
    run.finish()
    return EXIT_OK


def _theta_dir(theta: float) -> str:
    return f"theta_{theta:g}"


def _readable_prefix(path: Path, digest: str) -> list[dict]:
    """Epoch records of this run up to the first truncated or foreign line."""
    out = []
    with open(path) as fh:
        for line in fh:
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                break
            if rec.get("run_digest") != digest:
                break
            out.append(rec)
    return out


def cmd_walkforward(cfg: RunConfig, resume: bool = False) -> int:
    series = load_data(cfg)
    run = _Run(cfg, candles_digest(series))
    try:
        store = FeatureStore(series, cfg.pipeline())
    except ValueError as exc:
        raise PipelineError(f"insufficient data for warm-up: {exc}") from exc
    ts = series.timestamp
    for theta in cfg.thetas:
        sub = _theta_dir(theta)
        epochs_path = run.path(sub, "epochs.jsonl")
        prior: list[dict] = []
        if resume and epochs_path.exists():
            prior = _readable_prefix(epochs_path, run.digest)
        with open(epochs_path, "w") as fh:
            for r in prior:
                fh.write(record_line({k: v for k, v in r.items() if k != "run_digest"}, run.digest))
            fh.flush()

            def persist(e):
                fh.write(record_line(e.to_dict(), run.digest))
                fh.flush()

            try:
                res = run_walkforward(store, cfg.grid, theta, cfg.t0, workers=cfg.workers,
                                      tie_eps=cfg.tie_eps, resume=prior, on_epoch=persist)
            except ValueError as exc:
                raise PipelineError(f"theta={theta}: {exc}") from exc
        if not res.epochs:
            raise PipelineError(f"theta={theta}: no complete out-of-sample block fits in the data")
        lo, hi = res.oos_range
        bh_R = (series.close[lo:hi] - series.close[lo - 1:hi - 1]) / series.close[lo - 1:hi - 1]
        trades = res.cumulative_trades()
        run.columns(f"{sub}/equity.csv", {
            "timestamp": ts[lo:hi], "return": res.global_returns, "equity": res.global_equity,
            "position": res.global_positions, "cum_trades": trades,
            "buy_hold_equity": np.cumprod(1.0 + bh_R),
        }, theta=theta)
        perf = summarize(res.global_returns, res.global_equity, n_trades=int(trades[-1]))
        bh = summarize(bh_R)
        recs = [{"scope": "full", "strategy": "proposed", "theta": theta, **perf.to_dict()},
                {"scope": "full", "strategy": "buy_and_hold", "theta": theta, **bh.to_dict()}]
        for e in res.epochs:
            ep = summarize(e.oos_returns, n_trades=e.oos_turnover)
            recs.append({"scope": "epoch", "epoch": e.epoch, "strategy": "proposed", "theta": theta,
                         **ep.to_dict()})
        run.records(f"{sub}/report.jsonl", recs)
        durs = position_durations(res.global_positions)
        dstats = duration_stats(durs, ts[lo:hi])
        run.records(f"{sub}/durations.jsonl", [{"theta": theta, "open_ended": durs.open_ended,
                                                 **dstats.to_dict()}])
        run.records(f"{sub}/frequencies.jsonl",
                    [{"dimension": d, "value": v, "count": c}
                     for d, hist in res.selection_frequencies.items() for v, c in hist.items()])
        run.records(f"{sub}/run.jsonl", [{"theta": theta, "t0": res.t0, "n_epochs": len(res.epochs),
                                          "oos_start": lo, "oos_stop": hi,
                                          "fill_count": series.fill_count, "n_bars": len(series),
                                          "n_candidates": res.epochs[0].n_candidates}])
        log.info("theta=%g: %d epochs, final equity %.6f", theta, len(res.epochs), res.global_equity[-1])
    run.finish()
    return EXIT_OK


def cmd_demo(cfg: RunConfig) -> int:
    o = cfg.demo
    run = _Run(cfg, "none")
    res = derivative_lead_demo(tuple(o.amps), tuple(o.lambda2s), o.gate_amp, o.n, o.dt, o.t_max,
                               a=o.a, A0=o.A0, w=o.w, m=o.m)
    cols = {"t": res.t, "f": res.f, "df": res.df}
    cols.update({f"lead_A{a:g}": v for a, v in res.enhanced.items()})
    cols.update({f"gated_l2_{l2:g}": v for l2, v in res.gated.items()})
    cols.update({f"c2_l2_{l2:g}": v for l2, v in res.gated_c2.items()})
    run.columns("demo.csv", cols, a=o.a, A0=o.A0, w=o.w, m=o.m, n=o.n, dt=o.dt, gate_amp=o.gate_amp)
    recs = [{"A": a, "mean_lead": s.mean, "median_lead": s.median, "matched": s.matched,
             "unmatched": s.unmatched} for a, s in res.leads.items()]
    ref = res.enhanced.get(o.gate_amp)
    if ref is not None and 0.0 in res.gated:
        recs.append({"check": "lambda2_zero_equals_ungated",
                     "value": bool(np.array_equal(res.gated[0.0], ref, equal_nan=True))})
    run.records("leads.jsonl", recs)
    run.finish()
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    series = load_data(cfg)
    run = _Run(cfg, candles_digest(series))
    o = cfg.sweep
    try:
        store = FeatureStore(series, cfg.pipeline())
    except ValueError as exc:
        raise PipelineError(f"insufficient data for warm-up: {exc}") from exc
    grids = {"lambda1": cfg.grid.lambda1, "lambda2": cfg.grid.lambda2, "amp": cfg.grid.amp}
    fixed = {"lambda1": o.fixed_lambda1, "lambda2": o.fixed_lambda2, "amp": o.fixed_amp}
    rows = one_at_a_time_sweep(store.panel, grids, fixed, o.n_diff, o.w_ma, last=o.last)
    truncated = int(rows[0]["n"] < o.last)
    if truncated:
        log.warning("only %d valid bars available (< %d requested)", rows[0]["n"], o.last)
    run.columns("sweep.csv", {k: [r[k] for r in rows] for k in
                              ("swept", "lambda1", "lambda2", "amp", "n", "median_abs_f")},
                n_diff=o.n_diff, w_ma=o.w_ma, last=o.last, truncated=truncated)
    run.finish()
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    """Recompute summaries from the persisted walk-forward outputs in ``out``."""
    out = Path(cfg.out)
    subs = sorted(p for p in out.glob("theta_*") if (p / "epochs.jsonl").exists())
    if not subs:
        raise ConfigError(f"no walk-forward results under {out}")
    recs = []
    for sub in subs:
        epochs = read_records(sub / "epochs.jsonl")
        cols, _ = read_columns(sub / "equity.csv")
        R = cols["return"]
        perf = summarize(R, n_trades=int(cols["cum_trades"][-1]))
        recs.append({"theta_dir": sub.name, "n_epochs": len(epochs), **perf.to_dict()})
        for d, hist in selection_frequencies(epochs).items():
            recs.append({"theta_dir": sub.name, "dimension": d,
                         "counts": {str(k): v for k, v in hist.items()}})
    write_records(out / "summary.jsonl", recs)
    return EXIT_OK


# -- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--symbol")
    common.add_argument("--theta", type=float, action="append", help="repeat for several thresholds")
    common.add_argument("--from", dest="date_from", help="epoch ms or ISO date")
    common.add_argument("--to", dest="date_to", help="epoch ms or ISO date")
    common.add_argument("--workers", type=int)
    common.add_argument("--out")
    common.add_argument("--data", help="candle file (overrides config data source)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="causalsig", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fetch", "backtest", "demo", "sweep", "report"):
        sub.add_parser(name, parents=[common])
    wf = sub.add_parser("walkforward", parents=[common])
    wf.add_argument("--resume", action="store_true", help="continue from persisted epoch records")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args)
        if args.command == "fetch":
            return cmd_fetch(cfg)
        if args.command == "backtest":
            return cmd_backtest(cfg)
        if args.command == "walkforward":
            return cmd_walkforward(cfg, resume=args.resume)
        if args.command == "demo":
            return cmd_demo(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_report(cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (CandleDataError, FetchError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except PipelineError as exc:
        log.error("pipeline error: %s", exc)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
