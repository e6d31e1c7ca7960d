"""
JSONL trajectory logs.

A log opens with a ``header`` record carrying the schema version, the full
scenario document and the seed, followed by the trial's records in emission
order.  Keys are sorted and floats use ``repr`` precision, so a log is a
byte-exact function of (config, seed, build) and can be replayed.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import SchemaMismatchError
from ..runner import Trial
from .config import SCHEMA_VERSION, config_from_dict, config_to_dict

LOG_SCHEMA_VERSION = 1


def dumps(record):
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


def header(cfg, seed):
    return {"kind": "header", "schema_version": LOG_SCHEMA_VERSION, "config_schema_version": SCHEMA_VERSION,
            "seed": int(seed), "config": config_to_dict(cfg)}


def run_logged(cfg, seed=None, sink=None):
    """Run one trial; return ``(result, log text)`` and optionally write to ``sink``.

    ``sink`` may be a path or a text stream.
    """
    seed = cfg.seed if seed is None else seed
    buf = io.StringIO()
    buf.write(dumps(header(cfg, seed)) + "\n")
    result = Trial(cfg, seed=seed, log=lambda rec: buf.write(dumps(rec) + "\n")).run()
    text = buf.getvalue()
    if sink is not None:
        if isinstance(sink, (str, Path)):
            Path(sink).parent.mkdir(parents=True, exist_ok=True)
            Path(sink).write_text(text)
        else:
            sink.write(text)
    return result, text


def parse_log(text, source="log"):
    records = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise SchemaMismatchError(f"{source}:{n}: not valid JSON ({exc.msg})") from None
    if not records or records[0].get("kind") != "header":
        raise SchemaMismatchError(f"{source}: missing header record")
    version = records[0].get("schema_version")
    if version != LOG_SCHEMA_VERSION:
        raise SchemaMismatchError(f"{source}: log schema_version {version}, expected {LOG_SCHEMA_VERSION}")
    return records


def read_log(path):
    p = Path(path)
    return parse_log(p.read_text(), str(p))


def log_config(records):
    return config_from_dict(records[0]["config"])


@dataclass
class Trajectory:
    """Per-step arrays pulled out of a log."""

    t: np.ndarray
    phase: list
    truth: np.ndarray
    truth_star: np.ndarray
    est: np.ndarray
    frame: list
    markers: np.ndarray
    target: list

    @classmethod
    def from_records(cls, records):
        steps = [r for r in records if r.get("kind") == "step"]
        return cls(
            t=np.array([r["t"] for r in steps]),
            phase=[r["phase"] for r in steps],
            truth=np.array([r["truth"] for r in steps]).reshape(-1, 4),
            truth_star=np.array([r["truth_star"] for r in steps]).reshape(-1, 4),
            est=np.array([r["est"] for r in steps]).reshape(-1, 4),
            frame=[r["frame"] for r in steps],
            markers=np.array([r["markers"] for r in steps], dtype=int),
            target=[r["target"] for r in steps],
        )

    def __len__(self):
        return len(self.t)


def replay(log):
    """Re-run the trial recorded in ``log`` (path or record list); return its records."""
    records = read_log(log) if isinstance(log, (str, Path)) else log
    cfg = log_config(records)
    _, text = run_logged(cfg, records[0]["seed"])
    return parse_log(text, "replay")


def divergence(a, b):
    """Largest absolute difference between matching numeric fields of two step sequences.

    Returns ``inf`` when the record structure differs.
    """
    if len(a) != len(b):
        return float("inf")
    worst = 0.0
    for ra, rb in zip(a, b):
        if ra.keys() != rb.keys() or ra.get("kind") != rb.get("kind"):
            return float("inf")
        for k in ra:
            va, vb = ra[k], rb[k]
            if isinstance(va, (int, float)) and isinstance(vb, (int, float)):
                worst = max(worst, abs(float(va) - float(vb)))
            elif isinstance(va, list) and isinstance(vb, list):
                try:
                    x, y = np.asarray(va, dtype=float), np.asarray(vb, dtype=float)
                except (TypeError, ValueError):
                    if va != vb:
                        return float("inf")
                    continue
                if x.shape != y.shape:
                    return float("inf")
                if x.size:
                    worst = max(worst, float(np.max(np.abs(x - y))))
            elif va != vb:
                return float("inf")
    return worst


def verify_replay(log):
    """Divergence between a stored log and its replay (0.0 means identical)."""
    records = read_log(log) if isinstance(log, (str, Path)) else log
    return divergence(records, replay(records))


def result_record(records):
    for r in reversed(records):
        if r.get("kind") == "result":
            return r
    return None
