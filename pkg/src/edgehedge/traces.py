"""Synthetic network/compute traces, their CSV form, and service profiling.

The generators stand in for measured WiFi throughput, ping RTT and
execution-time traces. Shapes: bandwidth falls with the congestion level,
RTTs are lognormal per distance bucket, and computation time grows slowly
with the number of parallel instances until a knee, after which both the
mean and the spread climb quickly.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import truncnorm

from .errors import ConfigError, ProfilingError
from .policy import DEFAULT_KNEE_RATIO, knee_nu

BANDWIDTH_CSV = "bandwidth.csv"
RTT_CSV = "rtt.csv"
COMP_CSV = "comp.csv"
MIN_SAMPLES_PER_CELL = 100
MIN_PROFILE_SAMPLES = 30

# name -> (input Mb, estimated output Mb, features, per-k medians, per-k sigmas)
SERVICE_PRESETS = {
    "fast": dict(
        input_size=4.0, est_output_size=0.4, features=(0.41, 0.5),
        medians=(0.40, 0.42, 0.46, 0.62, 0.90), sigmas=(0.02, 0.03, 0.05, 0.12, 0.25)),
    "medium": dict(
        input_size=6.0, est_output_size=1.2, features=(0.92, 0.75),
        medians=(1.50, 1.56, 1.68, 2.30, 3.40), sigmas=(0.08, 0.10, 0.16, 0.40, 0.85)),
    "slow": dict(
        input_size=16.0, est_output_size=16.0, features=(10.0, 44.1),
        medians=(4.0, 4.2, 4.5, 6.1, 9.0), sigmas=(0.20, 0.25, 0.40, 1.00, 2.20)),
}


@dataclass
class TraceGenSpec:
    """Distribution parameters for :func:`generate_traces`.

    Bandwidth lists are indexed by congestion level; ``rtt_medians`` by
    distance bucket. ``comp`` maps a service name to ``(means, sigmas)``
    per parallel count; by default all presets are generated.
    """

    uplink_means: tuple = (90.0, 80.0, 66.0, 50.0, 34.0)
    downlink_means: tuple = (110.0, 98.0, 80.0, 60.0, 40.0)
    bw_stds: tuple = (6.0, 7.0, 8.0, 9.0, 10.0)
    bw_min: float = 1.0
    bw_max: float = 160.0
    rtt_medians: tuple = (0.006, 0.010, 0.018)
    rtt_sigma_log: float = 0.3
    comp: dict = field(default_factory=lambda: {
        name: (p["medians"], p["sigmas"]) for name, p in SERVICE_PRESETS.items()})
    samples_per_cell: int = 200

    def validate(self) -> None:
        levels = len(self.uplink_means)
        if levels == 0 or len(self.downlink_means) != levels or len(self.bw_stds) != levels:
            raise ConfigError("bandwidth means/stds must have one entry per congestion level")
        if not 0 < self.bw_min < self.bw_max:
            raise ConfigError("need 0 < bw_min < bw_max")
        for m in (*self.uplink_means, *self.downlink_means):
            if not self.bw_min <= m <= self.bw_max:
                raise ConfigError(f"bandwidth mean {m} outside [{self.bw_min}, {self.bw_max}]")
        if any(s < 0 for s in self.bw_stds):
            raise ConfigError("bandwidth stds must be >= 0")
        if not self.rtt_medians or any(m <= 0 for m in self.rtt_medians):
            raise ConfigError("rtt medians must be positive")
        if self.rtt_sigma_log < 0:
            raise ConfigError("rtt_sigma_log must be >= 0")
        if self.samples_per_cell < MIN_SAMPLES_PER_CELL:
            raise ConfigError(f"samples_per_cell must be >= {MIN_SAMPLES_PER_CELL}")
        for name, (means, sigmas) in self.comp.items():
            if len(means) != len(sigmas) or len(means) < 2:
                raise ConfigError(f"service {name!r}: need >= 2 parallel counts with matching sigmas")
            if any(m <= 0 for m in means) or any(s < 0 for s in sigmas):
                raise ConfigError(f"service {name!r}: means must be > 0 and sigmas >= 0")


@dataclass
class TraceSet:
    bandwidth_samples: dict  # congestion level -> array (m, 2) of (uplink, downlink)
    rtt_samples: dict  # distance bucket -> array (m,)
    comp_samples: dict  # service -> {k: array (m,)}

    @property
    def congestion_levels(self) -> int:
        return len(self.bandwidth_samples)

    def bucket_median_prop(self, bucket: int) -> float:
        """Median one-way propagation delay of a distance bucket (half the RTT)."""
        return float(np.median(self.rtt_samples[bucket])) / 2.0


def _truncated_normal(rng, mean, std, lo, hi, size):
    if std == 0:
        return np.full(size, float(mean))
    a, b = (lo - mean) / std, (hi - mean) / std
    return truncnorm.rvs(a, b, loc=mean, scale=std, size=size, random_state=rng)


def generate_traces(spec: TraceGenSpec, rng: np.random.Generator) -> TraceSet:
    spec.validate()
    m = spec.samples_per_cell
    bandwidth = {}
    for c, (up, down, std) in enumerate(zip(spec.uplink_means, spec.downlink_means, spec.bw_stds)):
        ups = _truncated_normal(rng, up, std, spec.bw_min, spec.bw_max, m)
        downs = _truncated_normal(rng, down, std, spec.bw_min, spec.bw_max, m)
        bandwidth[c] = np.column_stack([ups, downs])
    rtt = {b: med * np.exp(spec.rtt_sigma_log * rng.standard_normal(m))
           for b, med in enumerate(spec.rtt_medians)}
    comp = {}
    for name in sorted(spec.comp):
        means, sigmas = spec.comp[name]
        comp[name] = {}
        for k, (mu, sd) in enumerate(zip(means, sigmas), start=1):
            # keep draws physical: truncate at 1% of the single-instance mean
            comp[name][k] = _truncated_normal(rng, mu, sd, 0.01 * means[0], np.inf, m)
    return TraceSet(bandwidth, rtt, comp)


def write_traces(traces: TraceSet, directory) -> None:
    """Write the three trace CSVs; floats use ``repr`` so reading back is exact."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / BANDWIDTH_CSV, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["congestion_level", "uplink_mbps", "downlink_mbps"])
        for c in sorted(traces.bandwidth_samples):
            for up, down in traces.bandwidth_samples[c]:
                w.writerow([c, repr(float(up)), repr(float(down))])
    with open(d / RTT_CSV, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["distance_bucket", "rtt_seconds"])
        for b in sorted(traces.rtt_samples):
            for v in traces.rtt_samples[b]:
                w.writerow([b, repr(float(v))])
    with open(d / COMP_CSV, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["service", "k_parallel", "latency_seconds"])
        for name in sorted(traces.comp_samples):
            for k in sorted(traces.comp_samples[name]):
                for v in traces.comp_samples[name][k]:
                    w.writerow([name, k, repr(float(v))])


def _read_rows(path, header):
    if not os.path.exists(path):
        raise ConfigError(f"trace file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got != header:
            raise ConfigError(f"{path}: expected header {header}, got {got}")
        yield from reader


def read_traces(directory) -> TraceSet:
    d = Path(directory)
    bw: dict = {}
    for c, up, down in _read_rows(d / BANDWIDTH_CSV, ["congestion_level", "uplink_mbps", "downlink_mbps"]):
        bw.setdefault(int(c), []).append((float(up), float(down)))
    rtt: dict = {}
    for b, v in _read_rows(d / RTT_CSV, ["distance_bucket", "rtt_seconds"]):
        rtt.setdefault(int(b), []).append(float(v))
    comp: dict = {}
    for name, k, v in _read_rows(d / COMP_CSV, ["service", "k_parallel", "latency_seconds"]):
        comp.setdefault(name, {}).setdefault(int(k), []).append(float(v))
    traces = TraceSet(
        {c: np.array(v) for c, v in sorted(bw.items())},
        {b: np.array(v) for b, v in sorted(rtt.items())},
        {s: {k: np.array(v) for k, v in sorted(ks.items())} for s, ks in sorted(comp.items())},
    )
    check_traces(traces)
    return traces


def check_traces(traces: TraceSet) -> None:
    if sorted(traces.bandwidth_samples) != list(range(len(traces.bandwidth_samples))):
        raise ConfigError("congestion levels must be 0..C-1 without gaps")
    if sorted(traces.rtt_samples) != list(range(len(traces.rtt_samples))):
        raise ConfigError("distance buckets must be 0..B-1 without gaps")
    cells = [*traces.bandwidth_samples.values(), *traces.rtt_samples.values()]
    cells += [v for ks in traces.comp_samples.values() for v in ks.values()]
    for cell in cells:
        if len(cell) < MIN_SAMPLES_PER_CELL:
            raise ConfigError(f"every trace cell needs >= {MIN_SAMPLES_PER_CELL} samples")
        if np.any(np.asarray(cell) <= 0):
            raise ConfigError("trace samples must be positive")


def profile_service(comp_samples: dict, knee_ratio: float = DEFAULT_KNEE_RATIO):
    """Per-parallel-count ``(median, sigma)`` and the knee count ``nu``.

    ``comp_samples`` maps ``k`` (1..K) to execution-time samples.
    """
    ks = sorted(comp_samples)
    if len(ks) < 2:
        raise ProfilingError("profiling needs at least two parallel-count levels")
    if ks != list(range(1, len(ks) + 1)):
        raise ProfilingError(f"parallel counts must be 1..K, got {ks}")
    stats = []
    for k in ks:
        samples = np.asarray(comp_samples[k], dtype=float)
        if samples.size < MIN_PROFILE_SAMPLES:
            raise ProfilingError(f"k={k}: {samples.size} samples, need >= {MIN_PROFILE_SAMPLES}")
        # constant samples: report an exact zero rather than rounding residue
        sigma = 0.0 if np.ptp(samples) == 0 else float(np.std(samples, ddof=1))
        stats.append((float(np.median(samples)), sigma))
    nu = knee_nu([m for m, _ in stats], knee_ratio)
    return tuple(stats), nu
