"""Comparison policies: Oracle, Rand-x, MinProp-x and MinLoad-x."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .domain import ActionSet, EdgeServerState, full_action
from .errors import ConfigError

REDUNDANCY_LEVELS = (1, 2, 3)


def _check_x(x: int, n: int) -> None:
    if not 1 <= x <= n:
        raise ConfigError(f"redundancy level x={x} must be in [1, {n}]")


def oracle(real, fallback_latency: float) -> tuple:
    """Dispatch everywhere; the latency is the fastest admitting server.

    Returns ``(action, latency, miss)``.
    """
    n = len(real.per_server_latency)
    best = min(real.per_server_latency)
    return full_action(n), min(best, fallback_latency), best == float("inf")


def rand_x(x: int, n: int, rng: np.random.Generator) -> ActionSet:
    _check_x(x, n)
    return ActionSet(frozenset(rng.permutation(n)[:x].tolist()), n)


def _smallest(x: int, keys: Sequence) -> ActionSet:
    n = len(keys)
    _check_x(x, n)
    order = sorted(range(n), key=lambda i: (keys[i], i))
    return ActionSet(frozenset(order[:x]), n)


def min_prop_x(x: int, servers: Sequence[EdgeServerState]) -> ActionSet:
    """The ``x`` servers with the smallest median propagation delay (ties: lower index)."""
    return _smallest(x, [s.median_prop for s in servers])


def min_load_x(x: int, servers: Sequence[EdgeServerState]) -> ActionSet:
    """The ``x`` servers running the fewest services (ties: lower index)."""
    return _smallest(x, [s.active_users for s in servers])
