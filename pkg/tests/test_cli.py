import json
from pathlib import Path

import pytest

from causalsig.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_PIPELINE, main
from causalsig.config import ConfigError, config_from_dict, load_config
from causalsig.market_data import INTERVAL_MS, load_candles, write_candles
from causalsig.reports import read_columns, read_records, sha256_file
from causalsig.synthetic import constant_candles

from klines_mock import T0, make_records

SMALL = {
    "symbol": "SYN",
    "data": {"synthetic_bars": 6000, "seed_text": "cli-tests"},
    "w_norm": 200,
    "grid": {"w_fit": [120, 240], "rho": [2, 3], "lambda1": [0.5, 1.0], "lambda2": [1.0], "amp": [1.0]},
    "thetas": [0.8, 1.0],
    "sweep": {"last": 1000},
}


def _cfg(tmp_path, **over):
    raw = json.loads(json.dumps(SMALL))
    raw.update(over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(raw))
    return str(p)


def _run(*argv):
    return main([str(a) for a in argv])


def _check_digests(out: Path, raw=()):
    """Every manifest output is checksummed; derived files also embed the run digest."""
    manifest = json.loads((out / "manifest.json").read_text())
    digest = manifest["run_digest"]
    for rel, checksum in manifest["outputs"].items():
        path = out / rel
        assert sha256_file(path) == checksum
        if rel in raw:
            assert path.read_text().startswith("timestamp,open,high,low,close,volume")
        elif path.suffix == ".csv":
            assert path.read_text().startswith(f"# run_digest={digest}")
        elif path.suffix == ".jsonl":
            assert all(r["run_digest"] == digest for r in read_records(path))
    if (out / "effective_config.json").exists():
        assert json.loads((out / "effective_config.json").read_text())["run_digest"] == digest
    return manifest


# -- config -------------------------------------------------------------------

def test_effective_config_lists_every_default_and_reloads(tmp_path):
    assert _run("demo", "--out", tmp_path / "o") == EXIT_OK
    dump = json.loads((tmp_path / "o" / "effective_config.json").read_text())
    for key in ("w_norm", "eps", "thetas", "grid", "indicators", "t0", "tie_eps", "workers"):
        assert key in dump
    assert dump["indicators"]["n_rsi"] == 14 and dump["w_norm"] == 5000
    assert config_from_dict(dump).to_dict() == {k: v for k, v in dump.items() if k != "run_digest"}


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"thetas": [0.0]})
    with pytest.raises(ConfigError):
        config_from_dict({"grid": {"rho": []}})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_exit_codes(tmp_path):
    assert _run("backtest", "--config", tmp_path / "missing.json") == EXIT_CONFIG
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,open,high,low,close,volume\n60000,1,0.5,2,1,1\n")
    assert _run("backtest", "--data", bad, "--out", tmp_path / "o1") == EXIT_DATA
    short = tmp_path / "short.csv"
    write_candles(constant_candles(300), short)
    assert _run("backtest", "--data", short, "--out", tmp_path / "o2") == EXIT_PIPELINE


# -- backtest --------------------------------------------------------------------

def test_backtest_constant_prices(tmp_path):
    data = tmp_path / "const.csv"
    write_candles(constant_candles(1000, 2.0), data)
    out = tmp_path / "bt"
    assert _run("backtest", "--config", _cfg(tmp_path), "--data", data, "--out", out) == EXIT_OK
    cols, meta = read_columns(out / "signal.csv")
    assert (cols["position"] == 0).all() and (cols["equity"] == 1).all()
    recs = {r["kind"]: r for r in read_records(out / "report.jsonl")}
    assert recs["durations"]["count"] == 0 and recs["durations"]["mean"] is None
    assert recs["run"]["fill_count"] == 0
    norm, _ = read_columns(out / "normalization.csv")
    assert {"RSI_centered", "RSI_scale", "RSI_z"} <= set(norm)
    _check_digests(out)


def test_backtest_records_fill_count(tmp_path):
    c = constant_candles(1000)
    keep = [i for i in range(1000) if i % 97 != 5]
    from causalsig.market_data import CandleSeries
    gappy = CandleSeries(c.symbol, c.timestamp[keep], c.open[keep], c.high[keep], c.low[keep],
                         c.close[keep], c.volume[keep])
    data = tmp_path / "gappy.csv"
    write_candles(gappy, data)
    out = tmp_path / "bt"
    assert _run("backtest", "--config", _cfg(tmp_path), "--data", data, "--out", out) == EXIT_OK
    run = [r for r in read_records(out / "report.jsonl") if r["kind"] == "run"][0]
    assert run["fill_count"] == 1000 - len(keep)


def test_backtest_is_byte_deterministic(tmp_path):
    cfg = _cfg(tmp_path)
    for d in ("a", "b"):
        assert _run("backtest", "--config", cfg, "--out", tmp_path / d) == EXIT_OK
    for name in ("signal.csv", "normalization.csv", "report.jsonl", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# -- walkforward and report --------------------------------------------------------

def test_walkforward_outputs_per_theta(tmp_path):
    out = tmp_path / "wf"
    assert _run("walkforward", "--config", _cfg(tmp_path), "--out", out) == EXIT_OK
    for th in ("theta_0.8", "theta_1"):
        d = out / th
        for name in ("epochs.jsonl", "equity.csv", "report.jsonl", "durations.jsonl",
                     "frequencies.jsonl", "run.jsonl"):
            assert (d / name).exists(), name
        cols, meta = read_columns(d / "equity.csv")
        assert {"cum_trades", "equity", "buy_hold_equity"} <= set(cols)
        scopes = {(r["scope"], r["strategy"]) for r in read_records(d / "report.jsonl")}
        assert {("full", "proposed"), ("full", "buy_and_hold"), ("epoch", "proposed")} <= scopes
    _check_digests(out)
    assert _run("report", "--out", out) == EXIT_OK
    summary = read_records(out / "summary.jsonl")
    assert {r["theta_dir"] for r in summary} == {"theta_0.8", "theta_1"}


def test_five_thetas_give_five_result_sets(tmp_path):
    out = tmp_path / "wf5"
    cfg = _cfg(tmp_path, thetas=[0.6, 0.8, 1.0, 1.4, 1.6])
    assert _run("walkforward", "--config", cfg, "--out", out) == EXIT_OK
    assert sorted(p.name for p in out.glob("theta_*")) == [
        "theta_0.6", "theta_0.8", "theta_1", "theta_1.4", "theta_1.6"]


def test_theta_flag_overrides(tmp_path):
    out = tmp_path / "wf"
    assert _run("walkforward", "--config", _cfg(tmp_path), "--theta", "1.4", "--out", out) == EXIT_OK
    assert [p.name for p in out.glob("theta_*")] == ["theta_1.4"]


def test_walkforward_resume_and_workers(tmp_path):
    cfg = _cfg(tmp_path)
    ref = tmp_path / "ref"
    assert _run("walkforward", "--config", cfg, "--out", ref) == EXIT_OK
    part = tmp_path / "part"
    assert _run("walkforward", "--config", cfg, "--out", part, "--workers", "2") == EXIT_OK
    for th in ("theta_0.8", "theta_1"):
        for name in ("epochs.jsonl", "equity.csv"):
            assert (part / th / name).read_bytes() == (ref / th / name).read_bytes()
    # simulate an interrupted run: half the records plus a torn final line
    ep = part / "theta_0.8" / "epochs.jsonl"
    lines = ep.read_text().splitlines(keepends=True)
    ep.write_text("".join(lines[: len(lines) // 2]) + lines[len(lines) // 2][:25])
    assert _run("walkforward", "--config", cfg, "--out", part, "--resume") == EXIT_OK
    assert ep.read_bytes() == (ref / "theta_0.8" / "epochs.jsonl").read_bytes()


def test_walkforward_insufficient_data(tmp_path):
    cfg = _cfg(tmp_path, data={"synthetic_bars": 700, "seed_text": "x"})
    assert _run("walkforward", "--config", cfg, "--out", tmp_path / "o") == EXIT_PIPELINE


def test_report_without_results(tmp_path):
    assert _run("report", "--out", tmp_path) == EXIT_CONFIG


# -- demo and sweep ------------------------------------------------------------------

def test_demo_outputs(tmp_path):
    out = tmp_path / "demo"
    assert _run("demo", "--out", out) == EXIT_OK
    cols, meta = read_columns(out / "demo.csv")
    assert meta["a"] == "0.5" and meta["A0"] == "2.0" and meta["n"] == "5" and meta["gate_amp"] == "10.0"
    assert {"lead_A2", "lead_A5", "lead_A10", "gated_l2_0", "gated_l2_2"} <= set(cols)
    recs = read_records(out / "leads.jsonl")
    leads = [r["mean_lead"] for r in recs if "A" in r]
    assert all(x > 0 for x in leads) and leads == sorted(leads)
    assert [r["value"] for r in recs if r.get("check") == "lambda2_zero_equals_ungated"] == [True]
    _check_digests(out)


def test_sweep_outputs(tmp_path):
    out = tmp_path / "sw"
    assert _run("sweep", "--config", _cfg(tmp_path), "--out", out) == EXIT_OK
    cols, meta = read_columns(out / "sweep.csv")
    assert len(cols["swept"]) == 2 + 1 + 1
    assert meta["n_diff"] == "2" and meta["w_ma"] == "2" and meta["truncated"] == "0"
    out2 = tmp_path / "sw2"
    cfg = _cfg(tmp_path, sweep={"last": 100_000})
    assert _run("sweep", "--config", cfg, "--out", out2) == EXIT_OK
    _, meta = read_columns(out2 / "sweep.csv")
    assert meta["truncated"] == "1"


# -- fetch ------------------------------------------------------------------------

def test_fetch_one_day_and_refetch_dedup(tmp_path, server_factory):
    srv = server_factory(make_records(3000), page=1000)
    cfg = _cfg(tmp_path, data={"endpoint": srv.url})
    out = tmp_path / "f"
    day = T0 + 1440 * INTERVAL_MS
    assert _run("fetch", "--config", cfg, "--from", T0, "--to", day, "--out", out) == EXIT_OK
    s = load_candles(out / "SYN.csv", "SYN")
    assert len(s) <= 1440 and len(s) == 1440
    assert (out / "manifest.json").exists()
    later = T0 + 2000 * INTERVAL_MS
    assert _run("fetch", "--config", cfg, "--from", T0 + 1000 * INTERVAL_MS, "--to", later,
                "--out", out) == EXIT_OK
    s = load_candles(out / "SYN.csv", "SYN")
    assert len(s) == 2000 and s.is_regular()
    _check_digests(out, raw=("SYN.csv",))


def test_fetch_endpoint_from_environment(tmp_path, server_factory, monkeypatch):
    srv = server_factory(make_records(10))
    monkeypatch.setenv("CAUSALSIG_KLINES_URL", srv.url)
    out = tmp_path / "f"
    assert _run("fetch", "--from", T0, "--to", T0 + 10 * INTERVAL_MS, "--out", out) == EXIT_OK
    assert len(load_candles(out / "SYNTH.csv", "SYNTH")) == 10


def test_fetch_unreachable_leaves_no_manifest(tmp_path):
    cfg = _cfg(tmp_path, data={"endpoint": "http://127.0.0.1:9/klines"}, fetch={"max_retries": 1, "backoff_s": 0.01})
    out = tmp_path / "f"
    assert _run("fetch", "--config", cfg, "--from", T0, "--to", T0 + 60 * INTERVAL_MS, "--out", out) == EXIT_DATA
    assert not (out / "manifest.json").exists()
    assert not list(out.glob("*.csv"))


def test_fetch_requires_range(tmp_path):
    assert _run("fetch", "--out", tmp_path / "f") == EXIT_CONFIG
    assert _run("fetch", "--from", T0, "--to", T0, "--out", tmp_path / "f") == EXIT_CONFIG
