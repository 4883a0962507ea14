"""Per-server service latency, redundant-dispatch latency and the
stochastic computation-time model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import ActionSet, EdgeServerState, ServiceProfile, UserProfile
from .errors import ConfigError, LoadError

FLOOR_FRACTION = 0.01


@dataclass(frozen=True)
class LatencyBreakdown:
    upload_tx: float
    prop_in: float
    download_tx: float
    compute: float
    upload_out: float
    prop_out: float
    download_out: float

    @property
    def total(self) -> float:
        return (self.upload_tx + self.prop_in + self.download_tx) + self.compute + (
            self.upload_out + self.prop_out + self.download_out)


@dataclass(frozen=True)
class CompModel:
    """Computation-time predictor.

    ``table`` mode predicts the profiled median for the parallel count;
    ``linear`` mode predicts ``a * input_size + b . features + c[k - 1]``.
    ``floor=None`` means 1% of the service's single-instance median.
    """

    mode: str = "table"
    a: float = 0.0
    b: tuple = ()
    c: tuple = ()
    floor: float | None = None

    def __post_init__(self):
        if self.mode not in ("table", "linear"):
            raise ConfigError(f"unknown computation model mode {self.mode!r}")
        if self.floor is not None and self.floor <= 0:
            raise ConfigError("computation floor must be positive")

    def floor_for(self, service: ServiceProfile) -> float:
        return self.floor if self.floor is not None else FLOOR_FRACTION * service.median(1)

    def predict(self, service: ServiceProfile, k: int) -> float:
        """Noise-free prediction, clamped at the floor."""
        if not 1 <= k <= service.k_max:
            raise LoadError(f"cannot host {k} parallel instances of {service.name!r} (K_max={service.k_max})")
        if self.mode == "table":
            y = service.median(k)
        else:
            if len(self.c) < k:
                raise ConfigError(f"linear model has no per-count term for k={k}")
            if len(self.b) != len(service.features):
                raise ConfigError("linear model feature coefficients do not match service features")
            y = self.a * service.input_size + float(np.dot(self.b, service.features)) + self.c[k - 1]
        return max(y, self.floor_for(service))


@dataclass(frozen=True)
class JitterSpec:
    """Log-space dispersion of the propagation delay around its median."""

    sigma_log: float = 0.25

    def __post_init__(self):
        if self.sigma_log < 0:
            raise ConfigError("sigma_log must be >= 0")


def effective_share(base_bw: float, active_users: int) -> float:
    """Per-user bandwidth when ``active_users`` share a link equally."""
    if active_users < 1:
        raise ValueError("active_users must count at least the request being served")
    return base_bw / active_users


def compute_latency(model: CompModel, service: ServiceProfile, k_parallel: int,
                    rng: np.random.Generator, scale: float = 1.0) -> float:
    """Draw a computation time for ``k_parallel`` co-running instances.

    The prediction is perturbed with Gaussian noise of std ``sigma_k`` and
    clamped at the floor. ``scale`` multiplies both mean and std (used for
    heterogeneous-speed test environments).
    """
    y_hat = model.predict(service, k_parallel) * scale
    sigma = service.sigma(k_parallel) * scale
    floor = model.floor_for(service) * scale
    if sigma == 0:
        return max(y_hat, floor)
    return max(float(rng.normal(y_hat, sigma)), floor)


def sample_propagation(median_prop: float, jitter: JitterSpec, rng: np.random.Generator) -> float:
    """Lognormal one-way propagation delay with the given median."""
    if median_prop < 0:
        raise ValueError("median_prop must be >= 0")
    if median_prop == 0 or jitter.sigma_log == 0:
        return float(median_prop)
    return float(median_prop * math.exp(jitter.sigma_log * rng.standard_normal()))


def service_latency(server: EdgeServerState, user: UserProfile, service: ServiceProfile,
                    actual_output_size: float, comp: float, prop: float,
                    sharing_users: int = 1, single_transfer_terms: bool = False) -> LatencyBreakdown:
    """Latency of running the service on one server.

    Server bandwidths are divided equally among ``sharing_users``. Both the
    uploading and downloading legs of each transfer are charged over the same
    bottleneck; ``single_transfer_terms`` halves them for sensitivity runs.
    """
    if comp < 0 or prop < 0:
        raise ValueError("computation and propagation latencies must be >= 0")
    bw_in = min(effective_share(server.downlink_bw, sharing_users), user.uplink_bw)
    bw_out = min(effective_share(server.uplink_bw, sharing_users), user.downlink_bw)
    tx_in = service.input_size / bw_in
    tx_out = actual_output_size / bw_out
    if single_transfer_terms:
        tx_in /= 2
        tx_out /= 2
    return LatencyBreakdown(tx_in, prop, tx_in, comp, tx_out, prop, tx_out)


def redundant_latency(per_server: Sequence[float], action: ActionSet) -> float:
    """Fastest response among the dispatched servers (``inf`` if all refused)."""
    return min(per_server[i] for i in action.members)
