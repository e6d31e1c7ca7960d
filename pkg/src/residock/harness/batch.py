"""
Monte Carlo batches: seeds ``base .. base + n - 1`` per approach.

Trials are independent, so they may run in worker processes; results and
logs are always merged in (approach, seed) order, which keeps a batch
byte-identical for a given config and base seed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..mission import AbortReason, TrialResult
from .config import APPROACHES
from .log import dumps, run_logged

CSV_COLUMNS = ("approach", "seed", "success", "duration_s", "abort_reason")


@dataclass(frozen=True)
class ApproachStats:
    approach: str
    trials: int
    successes: int
    durations: tuple
    mean_duration: float | None
    std_duration: float | None
    abort_reasons: dict

    @property
    def success_rate(self):
        return self.successes / self.trials if self.trials else 0.0


@dataclass(frozen=True)
class BatchSummary:
    per_approach: dict
    results: tuple = ()
    nees_mean: float | None = None
    nees_std: float | None = None

    def __post_init__(self):
        for s in self.per_approach.values():
            if s.successes > s.trials:
                raise ValueError("success count exceeds batch size")

    def successes(self, approach):
        return self.per_approach[approach].successes

    @property
    def total_trials(self):
        return sum(s.trials for s in self.per_approach.values())

    @property
    def failures(self):
        return sum(s.trials - s.successes for s in self.per_approach.values())

    @property
    def success_rate(self):
        n = self.total_trials
        return sum(s.successes for s in self.per_approach.values()) / n if n else 0.0

    @property
    def mean_duration(self):
        d = [x for s in self.per_approach.values() for x in s.durations]
        return float(np.mean(d)) if d else None

    def to_dict(self):
        return {
            "approaches": {
                a: {"trials": s.trials, "successes": s.successes, "success_rate": s.success_rate,
                    "durations": list(s.durations), "mean_duration": s.mean_duration,
                    "std_duration": s.std_duration, "abort_reasons": dict(sorted(s.abort_reasons.items()))}
                for a, s in self.per_approach.items()
            },
            "success_rate": self.success_rate,
            "mean_duration": self.mean_duration,
            "nees_mean": self.nees_mean,
            "nees_std": self.nees_std,
        }

    def rows(self):
        for r in self.results:
            yield {"approach": r.approach, "seed": r.seed, "success": r.success,
                   "duration_s": r.docking_duration, "abort_reason": r.abort_reason}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            row = dict(row)
            row["duration_s"] = "" if row["duration_s"] is None else repr(float(row["duration_s"]))
            row["abort_reason"] = row["abort_reason"] or ""
            w.writerow(row)
        return buf.getvalue()

    def to_jsonl(self):
        return "".join(dumps(row) + "\n" for row in self.rows()) + dumps({"summary": self.to_dict()}) + "\n"

    def format(self):
        lines = [f"{'approach':<8} {'ok':>5} {'mean_s':>8} {'std_s':>7}  aborts"]
        for a, s in self.per_approach.items():
            mean = "-" if s.mean_duration is None else f"{s.mean_duration:8.1f}"
            std = "-" if s.std_duration is None else f"{s.std_duration:7.1f}"
            aborts = ", ".join(f"{k}={v}" for k, v in sorted(s.abort_reasons.items())) or "-"
            lines.append(f"{a:<8} {s.successes:>2}/{s.trials:<2} {mean:>8} {std:>7}  {aborts}")
        if self.nees_mean is not None:
            lines.append(f"NEES mean {self.nees_mean:.2f} (std {self.nees_std:.2f})")
        return "\n".join(lines)


def summarize(results):
    """Aggregate trial results into a :class:`BatchSummary` (approaches in first-seen order)."""
    results = tuple(results)
    groups = {}
    for r in results:
        groups.setdefault(r.approach, []).append(r)
    per = {}
    for a, rs in groups.items():
        d = [float(r.docking_duration) for r in rs if r.success and r.docking_duration is not None]
        reasons = {}
        for r in rs:
            if not r.success:
                reasons[r.abort_reason] = reasons.get(r.abort_reason, 0) + 1
        per[a] = ApproachStats(
            approach=a,
            trials=len(rs),
            successes=sum(1 for r in rs if r.success),
            durations=tuple(d),
            mean_duration=float(np.mean(d)) if d else None,
            std_duration=float(np.std(d)) if d else None,
            abort_reasons=reasons,
        )
    nees = [r.extra.get("nees_mean") for r in results if r.extra.get("nees_mean") is not None]
    nees = [x for x in nees if math.isfinite(x)]
    return BatchSummary(per, results, float(np.mean(nees)) if nees else None,
                        float(np.std(nees)) if nees else None)


def _run_one(job):
    cfg, approach, seed = job
    trial_cfg = replace(cfg, approach=approach, seed=seed)
    try:
        result, text = run_logged(trial_cfg, seed)
    except Exception as exc:  # a crashed trial is a failed trial
        result = TrialResult(False, None, AbortReason.RUNTIME.value, [], math.nan, 0, seed, approach,
                             {"error": f"{type(exc).__name__}: {exc}"})
        text = dumps({"kind": "error", "approach": approach, "seed": seed,
                      "error": result.extra["error"]}) + "\n"
    return result, text


def run_batch(config, approaches=APPROACHES, n_seeds=10, base_seed=None, out_dir=None, workers=1,
              summary_format="csv"):
    """Run ``n_seeds`` trials per approach and summarise them.

    With ``out_dir``, each trial's log goes to ``logs/<approach>-<seed>.jsonl``
    and the summary to ``summary.csv`` (or ``summary.jsonl``) plus ``summary.json``.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    base = config.seed if base_seed is None else int(base_seed)
    approaches = tuple(approaches)
    for a in approaches:
        if a not in APPROACHES:
            raise ValueError(f"unknown approach {a!r}")
    jobs = [(config, a, base + i) for a in approaches for i in range(n_seeds)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_one, jobs))
    else:
        outputs = [_run_one(j) for j in jobs]
    summary = summarize(r for r, _ in outputs)
    if out_dir is not None:
        write_batch(out_dir, outputs, summary, summary_format)
    return summary


def write_batch(out_dir, outputs, summary, summary_format="csv"):
    out = Path(out_dir)
    logs = out / "logs"
    logs.mkdir(parents=True, exist_ok=True)
    for result, text in outputs:
        (logs / f"{result.approach}-{result.seed:06d}.jsonl").write_text(text)
    if summary_format == "csv":
        (out / "summary.csv").write_text(summary.to_csv())
    else:
        (out / "summary.jsonl").write_text(summary.to_jsonl())
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), sort_keys=True, indent=2) + "\n")
    return out
