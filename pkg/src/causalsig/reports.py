"""Columnar and record file formats, run digests, and manifests.

Columnar files: an optional ``# key=value`` comment line, then a header row and
comma-separated values with full float precision (``repr``), one row per bar.

Record files (``.jsonl``): one JSON object per line with sorted keys. Every
record written by a run carries that run's ``run_digest``.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import __version__


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def candles_digest(series) -> str:
    h = hashlib.sha256()
    h.update(series.symbol.encode())
    for col in (series.timestamp, series.open, series.high, series.low, series.close, series.volume):
        h.update(np.ascontiguousarray(col).tobytes())
    return h.hexdigest()


def run_digest(config_text: str, input_digest: str) -> str:
    return sha256_bytes(f"{__version__}\n{input_digest}\n{config_text}".encode())


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_columns(path: str | Path, columns: Mapping[str, Iterable], meta: Mapping[str, object] | None = None) -> None:
    """NaN is written as an empty field."""
    cols = {k: list(v) for k, v in columns.items()}
    n = {len(v) for v in cols.values()}
    if len(n) > 1:
        raise ValueError(f"columns have different lengths: { {k: len(v) for k, v in cols.items()} }")
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        fh.write(",".join(cols) + "\n")
        for row in zip(*cols.values()):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_columns(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    meta: dict[str, str] = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    if lines and lines[0].startswith("#"):
        for item in lines[0][1:].split():
            k, _, v = item.partition("=")
            meta[k] = v
        lines = lines[1:]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:] if ln]
    cols = {}
    for j, name in enumerate(header):
        raw = [r[j] for r in rows]
        try:
            cols[name] = np.array([float(v) if v != "" else np.nan for v in raw])
        except ValueError:
            cols[name] = np.array(raw, dtype=object)
    return cols, meta


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, float) and (math.isnan(v) or math.isinf(v)):
        return None
    return v


def record_line(record: Mapping, digest: str | None = None) -> str:
    rec = dict(record)
    if digest is not None:
        rec["run_digest"] = digest
    return json.dumps(_jsonable(rec), sort_keys=True) + "\n"


def write_records(path: str | Path, records: Iterable[Mapping], digest: str | None = None) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(record_line(rec, digest))


def read_records(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(ln) for ln in fh if ln.strip()]


def _rel(p: str, base: Path) -> str:
    try:
        return str(Path(p).relative_to(base))
    except ValueError:
        return str(Path(p).resolve())


def write_manifest(out_dir: str | Path, config_text: str, input_digest: str, digest: str,
                   outputs: Iterable[str | Path]) -> Path:
    out_dir = Path(out_dir)
    manifest = {
        "artifact_version": __version__,
        "config": json.loads(config_text),
        "input_digest": input_digest,
        "run_digest": digest,
        "outputs": {_rel(p, out_dir): sha256_file(p) for p in sorted(map(str, outputs))},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
