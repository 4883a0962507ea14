"""Target latency, reward shaping and training-target construction.

These are the scheduler's decision rules; they are independent of the
network that learns from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import ActionSet, EdgeServerState, ServiceProfile, UserProfile
from .errors import ConfigError

DEFAULT_KNEE_RATIO = 1.25


@dataclass(frozen=True)
class RewardParams:
    delta: float
    n: int

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError(f"reward delta must be positive, got {self.delta}")
        if self.n < 1:
            raise ConfigError("reward n must be >= 1")


def knee_nu(medians: Sequence[float], ratio: float = DEFAULT_KNEE_RATIO) -> int:
    """Smallest parallel count ``k`` whose successor's median jumps by more than ``ratio``.

    Falls back to ``K_max - 1`` (at least 1) when the medians have no knee.
    """
    for k in range(1, len(medians)):
        if medians[k] / medians[k - 1] > ratio:
            return k
    return max(1, len(medians) - 1)


def target_latency(user: UserProfile, service: ServiceProfile,
                   servers: Sequence[EdgeServerState]) -> float:
    """Heuristic per-request latency goal.

    Transfers are charged at the user's own bandwidths, propagation at the
    median of the servers' median delays, and computation at the profiled
    median for ``service.nu`` parallel instances.
    """
    if not servers:
        raise ValueError("target latency needs at least one server")
    rho = float(np.median([s.median_prop for s in servers]))
    tx_in = service.input_size / user.uplink_bw
    tx_out = service.est_output_size / user.downlink_bw
    return (tx_in + rho + tx_in) + service.median(service.nu) + (tx_out + rho + tx_out)


def reward(achieved: float, tau: float, k: int, params: RewardParams) -> float:
    """Non-positive reward for dispatching to ``k`` servers and achieving ``achieved``.

    Zero when the target is hit exactly, beaten with a single server, or
    missed with every server. Missing it with spare servers costs
    ``delta * exp(n - k)``; beating it with redundancy costs
    ``delta * exp(achieved - tau)``.
    """
    n = params.n
    if not 1 <= k <= n:
        raise ValueError(f"action size {k} outside [1, {n}]")
    if achieved == tau:
        return 0.0
    if achieved < tau:
        if k == 1:
            return 0.0
        return -params.delta * math.exp(achieved - tau)
    if k == n:
        return 0.0
    return -params.delta * math.exp(n - k)


def _masks(n: int) -> np.ndarray:
    return np.arange(1, 2**n, dtype=np.int64)


def build_target_vector(action: ActionSet, reward_value: float, n: int) -> np.ndarray:
    """Soft training target over all ``2**n - 1`` actions.

    A zero reward yields a one-hot vector on the taken action. Otherwise the
    taken action and every action it contains get ``max(0, 1/(2**n-1) + r)``
    and the leftover mass is spread equally over all other actions. When the
    taken action is the full set there is nothing to spread onto and the
    vector falls back to uniform.
    """
    if reward_value > 0:
        raise ValueError(f"reward must be <= 0, got {reward_value}")
    size = 2**n - 1
    out = np.zeros(size)
    if reward_value == 0:
        out[action.index] = 1.0
        return out
    in_subset = (_masks(n) & ~action.bitmask) == 0
    value = max(0.0, 1.0 / size + reward_value)
    out[in_subset] = value
    rest = ~in_subset
    n_rest = int(rest.sum())
    if n_rest == 0:
        out[:] = 1.0 / size
        return out
    residual = 1.0 - value * int(in_subset.sum())
    assert residual >= 0.0, residual
    out[rest] = residual / n_rest
    return out
