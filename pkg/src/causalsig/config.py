"""Run configuration: a JSON file plus command-line overrides, with no hidden defaults."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .indicators import IndicatorConfig
from .normalization import DEFAULT_EPS, DEFAULT_W_NORM
from .signal import SignalParams
from .walkforward import GridSpec, PipelineConfig

ENDPOINT_ENV = "CAUSALSIG_KLINES_URL"
DEFAULT_ENDPOINT = "https://api.binance.com/api/v3/klines"
DEFAULT_THETAS = (0.6, 0.8, 1.0, 1.4, 1.6)


class ConfigError(ValueError):
    pass


@dataclass
class DataSource:
    path: str | None = None
    synthetic_bars: int | None = None
    seed_text: str = "causalsig"
    endpoint: str | None = None
    start: int | None = None
    end: int | None = None
    last: int | None = None

    def resolved_endpoint(self) -> str:
        return self.endpoint or os.environ.get(ENDPOINT_ENV) or DEFAULT_ENDPOINT


@dataclass
class FetchOptions:
    page_size: int = 1000
    max_retries: int = 4
    backoff_s: float = 0.5
    min_interval_s: float = 0.0
    workers: int = 1


@dataclass
class SweepOptions:
    last: int = 100_000
    n_diff: int = 2
    w_ma: int = 2
    fixed_lambda1: float = 1.0
    fixed_lambda2: float = 1.0
    fixed_amp: float = 1.0


@dataclass
class DemoOptions:
    a: float = 0.5
    A0: float = 2.0
    w: float = 1.0
    m: float = 0.1
    n: int = 5
    dt: float = 0.01
    t_max: float = 20.0
    amps: list[float] = field(default_factory=lambda: [2.0, 5.0, 10.0])
    gate_amp: float = 10.0
    lambda2s: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])


@dataclass
class RunConfig:
    symbol: str = "SYNTH"
    data: DataSource = field(default_factory=DataSource)
    indicators: IndicatorConfig = field(default_factory=IndicatorConfig)
    w_norm: int = DEFAULT_W_NORM
    eps: float = DEFAULT_EPS
    weights: list[float] | None = None
    thetas: list[float] = field(default_factory=lambda: list(DEFAULT_THETAS))
    grid: GridSpec = field(default_factory=GridSpec)
    t0: int | None = None
    tie_eps: float = 0.0
    out: str = "out"
    workers: int = 1
    backtest: SignalParams = field(default_factory=SignalParams)
    backtest_theta: float = 1.0
    sweep: SweepOptions = field(default_factory=SweepOptions)
    demo: DemoOptions = field(default_factory=DemoOptions)
    fetch: FetchOptions = field(default_factory=FetchOptions)

    def validate(self) -> "RunConfig":
        if not self.thetas or any(not th > 0 for th in self.thetas):
            raise ConfigError("thetas must be a non-empty list of positive values")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.w_norm < 2:
            raise ConfigError("w_norm must be >= 2")
        if self.data.path is not None and self.data.synthetic_bars is None and self.data.start is None:
            if not Path(self.data.path).exists():
                raise ConfigError(f"data path does not exist: {self.data.path}")
        return self

    def pipeline(self) -> PipelineConfig:
        w = tuple(self.weights) if self.weights is not None else None
        return PipelineConfig(self.indicators, self.w_norm, self.eps, w)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = self.grid.to_dict()
        d["backtest"]["weights"] = None if self.backtest.weights is None else list(self.backtest.weights)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_NESTED = {"data": DataSource, "indicators": IndicatorConfig, "sweep": SweepOptions,
           "demo": DemoOptions, "fetch": FetchOptions, "backtest": SignalParams}


def _build(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError, NotImplementedError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw)
    raw.pop("run_digest", None)  # present in effective-config dumps
    kw = {}
    for key, cls in _NESTED.items():
        if key in raw:
            sub = dict(raw.pop(key))
            if cls is SignalParams and sub.get("weights") is not None:
                sub["weights"] = tuple(sub["weights"])
            kw[key] = _build(cls, sub, key)
    if "grid" in raw:
        g = raw.pop("grid")
        kw["grid"] = _build(GridSpec, {k: tuple(v) for k, v in g.items()}, "grid")
    cfg = _build(RunConfig, {**raw, **kw}, "config")
    return cfg.validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    return config_from_dict(raw)
