"""Core value types, the action-space encoding and state flattening.

Units throughout: seconds for latencies, megabits for sizes and
megabits/second for bandwidths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError, StateError

SERVER_FEATURES = ("uplink_bw", "downlink_bw", "mem_util", "cpu_util", "active_users", "median_prop")
MAX_SERVERS = 16


@dataclass(frozen=True)
class EdgeServerState:
    """Dynamic view of one edge server at a timestep."""

    uplink_bw: float
    downlink_bw: float
    mem_util: float
    cpu_util: float
    active_users: int
    median_prop: float

    def __post_init__(self):
        if not (self.uplink_bw > 0 and self.downlink_bw > 0):
            raise StateError(f"server bandwidths must be positive, got {self.uplink_bw}, {self.downlink_bw}")
        if not (0.0 <= self.mem_util <= 1.0 and 0.0 <= self.cpu_util <= 1.0):
            raise StateError("utilizations must lie in [0, 1]")
        if self.active_users < 0:
            raise StateError("active_users must be >= 0")
        if self.median_prop < 0:
            raise StateError("median_prop must be >= 0")

    def as_tuple(self) -> tuple:
        return (self.uplink_bw, self.downlink_bw, self.mem_util, self.cpu_util,
                float(self.active_users), self.median_prop)


@dataclass(frozen=True)
class UserProfile:
    uplink_bw: float
    downlink_bw: float
    location_id: str = "L0"

    def __post_init__(self):
        if not (self.uplink_bw > 0 and self.downlink_bw > 0):
            raise StateError("user bandwidths must be positive")


@dataclass(frozen=True)
class ServiceProfile:
    """Static description of a service.

    ``comp_stats[k - 1]`` holds ``(median, sigma)`` of the computation time
    when ``k`` instances run in parallel on one server; ``nu`` is the
    parallel count whose median defines the computation part of the target
    latency.
    """

    input_size: float
    est_output_size: float
    comp_stats: tuple
    nu: int
    features: tuple = ()
    name: str = "service"

    def __post_init__(self):
        object.__setattr__(self, "comp_stats", tuple((float(m), float(s)) for m, s in self.comp_stats))
        object.__setattr__(self, "features", tuple(float(f) for f in self.features))
        if self.input_size <= 0 or self.est_output_size <= 0:
            raise ConfigError(f"service {self.name!r}: sizes must be positive")
        if not self.comp_stats:
            raise ConfigError(f"service {self.name!r}: comp_stats is empty")
        for median, sigma in self.comp_stats:
            if median <= 0 or sigma < 0:
                raise ConfigError(f"service {self.name!r}: medians must be > 0 and sigmas >= 0")
        if not 1 <= self.nu <= self.k_max:
            raise ConfigError(f"service {self.name!r}: nu={self.nu} outside [1, {self.k_max}]")

    @property
    def k_max(self) -> int:
        return len(self.comp_stats)

    def median(self, k: int) -> float:
        return self.comp_stats[k - 1][0]

    def sigma(self, k: int) -> float:
        return self.comp_stats[k - 1][1]


@dataclass(frozen=True)
class ActionSet:
    """A nonempty subset of the ``n`` servers.

    The action index is ``bitmask - 1`` where bit ``i`` is set iff server
    ``i`` is a member.
    """

    members: frozenset
    n: int

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(m) for m in self.members))
        if not self.members:
            raise ConfigError("an action must contain at least one server")
        if min(self.members) < 0 or max(self.members) >= self.n:
            raise ConfigError(f"action members {sorted(self.members)} out of range for n={self.n}")

    @classmethod
    def from_index(cls, index: int, n: int) -> "ActionSet":
        if not 0 <= index < 2**n - 1:
            raise ConfigError(f"action index {index} out of range for n={n}")
        mask = index + 1
        return cls(frozenset(i for i in range(n) if mask >> i & 1), n)

    @property
    def bitmask(self) -> int:
        return sum(1 << i for i in self.members)

    @property
    def index(self) -> int:
        return self.bitmask - 1

    @property
    def size(self) -> int:
        return len(self.members)

    def issubset(self, other: "ActionSet") -> bool:
        return self.bitmask & ~other.bitmask == 0

    def __iter__(self):
        return iter(sorted(self.members))

    def __repr__(self):
        return f"ActionSet({sorted(self.members)}, n={self.n})"


@lru_cache(maxsize=None)
def _actions(n: int) -> tuple:
    return tuple(ActionSet.from_index(i, n) for i in range(2**n - 1))


def enumerate_actions(n: int) -> list:
    """All ``2**n - 1`` nonempty server subsets in bitmask order."""
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_SERVERS:
        raise ConfigError(f"number of servers must be in [1, {MAX_SERVERS}], got {n!r}")
    return list(_actions(int(n)))


def full_action(n: int) -> ActionSet:
    return ActionSet.from_index(2**n - 2, n)


@dataclass(frozen=True)
class EnvState:
    """What the scheduler observes at a timestep."""

    servers: tuple
    input_size: float
    est_output_size: float
    features: tuple
    user_uplink_bw: float
    user_downlink_bw: float

    @property
    def n(self) -> int:
        return len(self.servers)

    @property
    def dim(self) -> int:
        return 6 * self.n + 2 + len(self.features) + 2

    def to_vector(self) -> np.ndarray:
        """Raw (unscaled) features: servers in index order, then service, then user."""
        values = [v for s in self.servers for v in s.as_tuple()]
        values += [self.input_size, self.est_output_size, *self.features]
        values += [self.user_uplink_bw, self.user_downlink_bw]
        return np.asarray(values, dtype=float)


@dataclass(frozen=True)
class StepRecord:
    """One step of a run: the unit of training data and of metric aggregation."""

    state: np.ndarray
    action: ActionSet
    reward: float
    achieved_latency: float
    target_latency: float
    per_server_latency: Optional[tuple] = None
    miss: bool = False

    def __post_init__(self):
        if self.reward > 0:
            raise StateError(f"reward must be <= 0, got {self.reward}")


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-feature ``(min, max)`` bounds used for min-max scaling."""

    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigError("normalization bounds must be 1-D arrays of equal length")
        if not np.all(lo < hi):
            bad = np.flatnonzero(~(lo < hi)).tolist()
            raise ConfigError(f"normalization requires min < max; violated at features {bad}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @classmethod
    def for_layout(cls, n: int, server_bounds: Sequence, service_bounds: Sequence,
                   user_bounds: Sequence) -> "NormalizationSpec":
        """Bounds following the flattening layout.

        ``server_bounds`` has one ``(min, max)`` per server feature and is
        repeated for every server; ``service_bounds`` covers input size,
        estimated output size and each service feature; ``user_bounds``
        covers the user's uplink and downlink.
        """
        if len(server_bounds) != len(SERVER_FEATURES):
            raise ConfigError(f"expected {len(SERVER_FEATURES)} server bounds, got {len(server_bounds)}")
        bounds = list(server_bounds) * n + list(service_bounds) + list(user_bounds)
        lo, hi = zip(*bounds)
        return cls(np.array(lo, dtype=float), np.array(hi, dtype=float))


def flatten_state(state: EnvState, norm: NormalizationSpec) -> np.ndarray:
    """Min-max scale an observed state into ``[0, 1]^d``."""
    raw = state.to_vector()
    return scale_vectors(raw, norm)


def scale_vectors(raw: np.ndarray, norm: NormalizationSpec) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != norm.dim:
        raise StateError(f"state vector has length {raw.shape[-1]}, normalization expects {norm.dim}")
    return np.clip((raw - norm.lower) / (norm.upper - norm.lower), 0.0, 1.0)


class StateEncoder(TransformerMixin, BaseEstimator):
    """Transformer turning observed states into scaled feature rows.

    Bounds come from the run configuration rather than from the data, so
    ``fit`` only validates them; the encoding stays stationary across
    episodes.

    Parameters
    ----------
    norm : NormalizationSpec
        Feature bounds in flattening order.
    """

    def __init__(self, norm: NormalizationSpec = None):
        self.norm = norm

    def fit(self, X=None, y=None):
        if not isinstance(self.norm, NormalizationSpec):
            raise ConfigError("StateEncoder requires a NormalizationSpec")
        self.n_features_in_ = self.norm.dim
        return self

    def transform(self, X: Iterable) -> np.ndarray:
        check_is_fitted(self, "n_features_in_")
        rows = [x.to_vector() if isinstance(x, EnvState) else np.asarray(x, dtype=float) for x in X]
        if not rows:
            return np.empty((0, self.n_features_in_))
        return scale_vectors(np.vstack(rows), self.norm)
