"""Latency percentiles, access rate, latency deviation, windowed series and
report (de)serialization."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .domain import ActionSet, StepRecord
from .errors import ReportError

REPORT_FORMAT = "edgehedge-report"
REPORT_VERSION = 1
PERCENTILES = (("median", 0.5), ("p90", 0.90), ("p95", 0.95), ("p99", 0.99))
REFERENCE_POLICY = "SafeTail"


def percentile(samples: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the ``ceil(q * N)``-th smallest sample."""
    if len(samples) == 0:
        raise ReportError("percentile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise ReportError(f"percentile fraction must be in [0, 1], got {q}")
    ordered = sorted(samples)
    rank = max(1, math.ceil(q * len(ordered)))
    return float(ordered[rank - 1])


def access_rate(action: ActionSet, n: int) -> float:
    return action.size / n


def latency_deviation(tau: float, achieved: float) -> float:
    """Slack against the target; positive means the target was beaten."""
    return tau - achieved


def window_average(records: Sequence[StepRecord], beta: int, n: int) -> list:
    """Means over consecutive non-overlapping windows of ``beta`` steps.

    A trailing partial window is dropped.
    """
    if beta < 1:
        raise ReportError("window size beta must be >= 1")
    out = []
    for w in range(len(records) // beta):
        chunk = records[w * beta:(w + 1) * beta]
        out.append({
            "window_index": w,
            "mean_access_rate": float(np.mean([access_rate(r.action, n) for r in chunk])),
            "mean_latency_deviation": float(np.mean(
                [latency_deviation(r.target_latency, r.achieved_latency) for r in chunk])),
            "mean_abs_reward": float(np.mean([abs(r.reward) for r in chunk])),
        })
    return out


def summarize(records: Sequence[StepRecord], n: int) -> dict:
    lat = [r.achieved_latency for r in records]
    out = {label: percentile(lat, q) for label, q in PERCENTILES}
    out["mean_access_rate"] = float(np.mean([access_rate(r.action, n) for r in records]))
    out["mean_latency_deviation"] = float(np.mean(
        [latency_deviation(r.target_latency, r.achieved_latency) for r in records]))
    out["miss_rate"] = float(np.mean([r.miss for r in records]))
    out["mean_abs_reward"] = float(np.mean([abs(r.reward) for r in records]))
    return out


def build_report(records_by_policy: Mapping[str, Sequence[StepRecord]], n: int, beta: int,
                 meta: Mapping | None = None) -> dict:
    """Assemble the report dictionary for one evaluation run."""
    if not records_by_policy:
        raise ReportError("no policies to report")
    policies = {name: summarize(recs, n) for name, recs in records_by_policy.items()}
    windows = {name: window_average(recs, beta, n) for name, recs in records_by_policy.items()}
    any_recs = next(iter(records_by_policy.values()))
    taus = [r.target_latency for r in any_recs]
    target = {label: percentile(taus, q) for label, q in PERCENTILES}
    target["mean"] = float(np.mean(taus))

    labels = [label for label, _ in PERCENTILES]
    speedups = {}
    if REFERENCE_POLICY in policies:
        ref = policies[REFERENCE_POLICY]
        speedups["vs_safetail"] = {
            name: {l: p[l] / ref[l] for l in labels} for name, p in policies.items()}
    if "Oracle" in policies:
        best = policies["Oracle"]
        speedups["oracle"] = {name: {l: p[l] / best[l] for l in labels} for name, p in policies.items()}
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        **dict(meta or {}),
        "n": n,
        "beta": beta,
        "steps": len(any_recs),
        "policies": policies,
        "target_latency": target,
        "speedups": speedups,
        "windows": windows,
    }


def dumps_report(report: Mapping) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(report: Mapping, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps_report(report))


def read_report(path) -> dict:
    try:
        report = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ReportError(f"report not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path}: not valid JSON ({exc})") from None
    if report.get("format") != REPORT_FORMAT or report.get("version") != REPORT_VERSION:
        raise ReportError(f"{path}: not a version-{REPORT_VERSION} {REPORT_FORMAT} file")
    return report


# Percentile panels: the overview panel and one per baseline family.
PERCENTILE_PANELS = {
    "latency_overview": ("SafeTail", "Target", "Oracle", "Rand-1", "MinLoad-1", "MinProp-1"),
    "latency_vs_rand": ("SafeTail", "Rand-1", "Rand-2", "Rand-3"),
    "latency_vs_minload": ("SafeTail", "MinLoad-1", "MinLoad-2", "MinLoad-3"),
    "latency_vs_minprop": ("SafeTail", "MinProp-1", "MinProp-2", "MinProp-3"),
}
WINDOW_PANELS = {
    "access_rate": "mean_access_rate",
    "latency_deviation": "mean_latency_deviation",
    "abs_reward": "mean_abs_reward",
}


def export_plot_data(report: Mapping, directory) -> list:
    """Write one CSV per figure panel; returns the written paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    policies = report["policies"]
    for panel, names in PERCENTILE_PANELS.items():
        rows = []
        for name in names:
            if name == "Target":
                stats = {l: report["target_latency"]["mean"] for l, _ in PERCENTILES}
            elif name in policies:
                stats = policies[name]
            else:
                continue
            rows += [(name, label, repr(float(stats[label]))) for label, _ in PERCENTILES]
        if not rows:
            continue
        path = d / f"{panel}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "percentile_label", "latency_seconds"])
            w.writerows(rows)
        written.append(path)
    for panel, key in WINDOW_PANELS.items():
        path = d / f"{panel}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["window_index", "metric_value", "policy"])
            for name in sorted(report["windows"]):
                for win in report["windows"][name]:
                    w.writerow([win["window_index"], repr(float(win[key])), name])
        written.append(path)
    return written
