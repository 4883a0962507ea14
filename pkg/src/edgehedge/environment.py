"""Episode/step simulation of a single user dispatching to ``n`` edge servers.

Every step the environment computes the latency every server *would*
deliver (its full realization) before any action is applied, so several
policies can be scored on identical randomness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import ActionSet, EdgeServerState, EnvState, ServiceProfile, UserProfile
from .errors import ConfigError
from .latency import CompModel, JitterSpec, compute_latency, redundant_latency, sample_propagation, service_latency
from .traces import TraceSet


@dataclass(frozen=True)
class SimConfig:
    n: int = 5
    max_load: int = 4
    steps_per_episode: int = 256
    episodes: int = 60
    seed: int = 0
    p_up: float = 0.3
    p_down: float = 0.3
    fallback_latency: Optional[float] = None
    k_max: int = 5
    prop_sigma_log: float = 0.25
    output_jitter: tuple = (0.8, 1.2)
    single_transfer_terms: bool = False
    server_compute_scale: Optional[tuple] = None
    cpu_idle: float = 0.10
    cpu_per_user: float = 0.20
    mem_idle: float = 0.25
    mem_per_user: float = 0.15
    util_noise: float = 0.03

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.max_load < 1:
            raise ConfigError("max_load must be >= 1")
        if self.max_load > self.k_max:
            raise ConfigError(f"max_load={self.max_load} exceeds K_max={self.k_max}")
        if self.p_up < 0 or self.p_down < 0 or self.p_up + self.p_down > 1:
            raise ConfigError("load walk needs p_up, p_down >= 0 and p_up + p_down <= 1")
        if self.steps_per_episode < 1 or self.episodes < 1:
            raise ConfigError("steps_per_episode and episodes must be >= 1")
        if self.fallback_latency is not None and self.fallback_latency <= 0:
            raise ConfigError("fallback_latency must be positive")
        lo, hi = self.output_jitter
        if not 0 < lo <= hi:
            raise ConfigError("output_jitter must satisfy 0 < low <= high")
        if self.server_compute_scale is not None:
            if len(self.server_compute_scale) != self.n or min(self.server_compute_scale) <= 0:
                raise ConfigError("server_compute_scale needs n positive entries")


@dataclass(frozen=True)
class StepRealization:
    env_state: EnvState
    per_server_latency: tuple  # inf where the server would refuse
    output_size: float


class EdgeEnvironment:
    """Trace-driven environment.

    Server bandwidth is drawn each step from the trace cell whose congestion
    level equals the server's active users; a server's distance bucket (and
    so its median propagation delay) is fixed for an episode. CPU and memory
    utilization track the load with a little noise.
    """

    def __init__(self, cfg: SimConfig, service: ServiceProfile, user: UserProfile,
                 traces: TraceSet, comp_model: CompModel = CompModel()):
        if cfg.k_max > service.k_max:
            raise ConfigError(f"service {service.name!r} is profiled up to k={service.k_max}, "
                              f"config needs K_max={cfg.k_max}")
        self.cfg = cfg
        self.service = service
        self.user = user
        self.traces = traces
        self.comp_model = comp_model
        self.jitter = JitterSpec(cfg.prop_sigma_log)
        self.scales = cfg.server_compute_scale or (1.0,) * cfg.n
        if cfg.fallback_latency is not None:
            self.fallback_latency = cfg.fallback_latency
        else:
            self.fallback_latency = 3.0 * service.median(service.nu)

    # -- state construction -------------------------------------------------
    def _server(self, load: int, median_prop: float, rng: np.random.Generator) -> EdgeServerState:
        cfg = self.cfg
        cell = self.traces.bandwidth_samples[min(load, self.traces.congestion_levels - 1)]
        up, down = cell[rng.integers(len(cell))]
        noise = rng.normal(0.0, cfg.util_noise, size=2) if cfg.util_noise > 0 else (0.0, 0.0)
        cpu = float(np.clip(cfg.cpu_idle + cfg.cpu_per_user * load + noise[0], 0.0, 1.0))
        mem = float(np.clip(cfg.mem_idle + cfg.mem_per_user * load + noise[1], 0.0, 1.0))
        return EdgeServerState(float(up), float(down), mem, cpu, int(load), float(median_prop))

    def _state(self, loads, props, rng) -> EnvState:
        s = self.service
        servers = tuple(self._server(l, p, rng) for l, p in zip(loads, props))
        return EnvState(servers, s.input_size, s.est_output_size, s.features,
                        self.user.uplink_bw, self.user.downlink_bw)

    def reset_episode(self, rng: np.random.Generator) -> EnvState:
        """Fresh initial state: loads uniform on ``0..max_load-1``."""
        cfg = self.cfg
        loads = rng.integers(0, cfg.max_load, size=cfg.n)
        buckets = rng.integers(0, len(self.traces.rtt_samples), size=cfg.n)
        props = [self.traces.bucket_median_prop(int(b)) for b in buckets]
        return self._state(loads, props, rng)

    # -- stepping -----------------------------------------------------------
    def realize_step(self, state: EnvState, rng: np.random.Generator) -> StepRealization:
        cfg = self.cfg
        lo, hi = cfg.output_jitter
        out_size = self.service.est_output_size * float(rng.uniform(lo, hi))
        latencies = []
        for i, server in enumerate(state.servers):
            if server.active_users >= cfg.max_load:
                latencies.append(float("inf"))
                continue
            k = server.active_users + 1
            comp = compute_latency(self.comp_model, self.service, k, rng, self.scales[i])
            prop = sample_propagation(server.median_prop, self.jitter, rng)
            breakdown = service_latency(server, self.user, self.service, out_size, comp, prop,
                                        sharing_users=k, single_transfer_terms=cfg.single_transfer_terms)
            latencies.append(breakdown.total)
        return StepRealization(state, tuple(latencies), out_size)

    def achieved_latency(self, real: StepRealization, action: ActionSet) -> tuple:
        """``(latency, miss)`` for ``action`` on a realization.

        The user never waits longer than the on-device fallback, so the
        latency is capped at ``fallback_latency``; this keeps the full set
        dominant even when every admitting server is slower than the
        fallback. A miss is a step where every dispatched server refused.
        """
        lat = redundant_latency(real.per_server_latency, action)
        return min(lat, self.fallback_latency), lat == float("inf")

    def advance(self, state: EnvState, rng: np.random.Generator) -> EnvState:
        """One clamped lazy random-walk step of every server's load."""
        cfg = self.cfg
        u = rng.random(cfg.n)
        loads = np.array([s.active_users for s in state.servers])
        loads = loads + (u < cfg.p_up) - ((u >= cfg.p_up) & (u < cfg.p_up + cfg.p_down))
        loads = np.clip(loads, 0, cfg.max_load)
        return self._state(loads, [s.median_prop for s in state.servers], rng)

    def apply_action_and_advance(self, state: EnvState, real: StepRealization, action: ActionSet,
                                 rng: np.random.Generator) -> tuple:
        """Score ``action`` and move to the next step: ``(achieved, miss, next_state)``.

        Dispatched replicas do not outlive the step, so the next state does
        not depend on the action.
        """
        achieved, miss = self.achieved_latency(real, action)
        return achieved, miss, self.advance(state, rng)
