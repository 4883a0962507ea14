"""Run configuration file: schema, loading, hashing and scenario assembly."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .domain import NormalizationSpec, ServiceProfile, StateEncoder, UserProfile
from .environment import EdgeEnvironment, SimConfig
from .errors import ConfigError
from .latency import CompModel
from .learner import ExploreSchedule, RewardTargetClassifier, TrainingParams
from .policy import DEFAULT_KNEE_RATIO, RewardParams, knee_nu
from .seeding import substream
from .traces import SERVICE_PRESETS, TraceGenSpec, TraceSet, generate_traces, profile_service, read_traces

CONFIG_VERSION = 1


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SimSection(_Section):
    n: int = Field(5, ge=1, le=16)
    max_load: int = Field(4, ge=1)
    k_max: int = Field(5, ge=1)
    steps_per_episode: int = Field(256, ge=1)
    episodes: int = Field(50, ge=1)
    eval_episodes: int = Field(20, ge=1)
    p_up: float = Field(0.3, ge=0, le=1)
    p_down: float = Field(0.3, ge=0, le=1)
    fallback_latency: Optional[float] = Field(None, gt=0)
    prop_sigma_log: float = Field(0.25, ge=0)
    output_jitter: Tuple[float, float] = (0.8, 1.2)
    single_transfer_terms: bool = False
    server_compute_scale: Optional[List[float]] = None


class CompModelSection(_Section):
    mode: Literal["table", "linear"] = "table"
    a: float = 0.0
    b: List[float] = []
    c: List[float] = []
    floor: Optional[float] = Field(None, gt=0)


class ServiceSection(_Section):
    preset: Optional[Literal["fast", "medium", "slow"]] = "fast"
    name: Optional[str] = None
    input_size: Optional[float] = Field(None, gt=0)
    est_output_size: Optional[float] = Field(None, gt=0)
    features: Optional[List[float]] = None
    # explicit per-k (median, sigma); overrides profiling
    comp_stats: Optional[List[Tuple[float, float]]] = None
    profile: Optional[str] = None
    nu: Optional[int] = Field(None, ge=1)
    knee_ratio: float = Field(DEFAULT_KNEE_RATIO, gt=1)
    comp_model: CompModelSection = CompModelSection()


class UserSection(_Section):
    uplink_bw: float = Field(30.0, gt=0)
    downlink_bw: float = Field(60.0, gt=0)
    location_id: str = "L0"


class RewardSection(_Section):
    delta: float = Field(0.003, gt=0)


class FnnSection(_Section):
    hidden_widths: List[int] = list((128, 128, 64, 64, 32))
    learning_rate: float = Field(1e-3, gt=0)
    beta_1: float = Field(0.9, ge=0, lt=1)
    beta_2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    batch_size: int = Field(32, ge=1)

    @field_validator("hidden_widths")
    @classmethod
    def _five_layers(cls, v):
        if len(v) != 5 or min(v) < 1:
            raise ValueError("the scheduler network has exactly 5 positive-width hidden layers")
        return v


class ExploreSection(_Section):
    epsilon: float = Field(1.0, ge=0, le=1)
    epsilon_decay: float = Field(0.02, ge=0)
    epsilon_min: float = Field(0.01, ge=0, le=1)
    decay_mode: Literal["per_step_linear", "per_training_round_linear"] = "per_training_round_linear"


class TrainingSection(_Section):
    kappa: int = Field(128, ge=1)
    replay_window: Optional[int] = Field(1024, ge=1)
    epochs_per_round: int = Field(1, ge=1)
    beta: int = Field(200, ge=1)


class GeneratorSection(_Section):
    uplink_means: List[float] = list(TraceGenSpec.uplink_means)
    downlink_means: List[float] = list(TraceGenSpec.downlink_means)
    bw_stds: List[float] = list(TraceGenSpec.bw_stds)
    bw_min: float = TraceGenSpec.bw_min
    bw_max: float = TraceGenSpec.bw_max
    rtt_medians: List[float] = list(TraceGenSpec.rtt_medians)
    rtt_sigma_log: float = TraceGenSpec.rtt_sigma_log
    comp: Optional[dict] = None
    samples_per_cell: int = TraceGenSpec.samples_per_cell

    def to_spec(self) -> TraceGenSpec:
        kw = self.model_dump(exclude={"comp"})
        spec = TraceGenSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in kw.items()})
        if self.comp is not None:
            try:
                spec.comp = {name: (tuple(v["means"]), tuple(v["sigmas"])) for name, v in self.comp.items()}
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"generator.comp entries need 'means' and 'sigmas' ({exc})") from None
        spec.validate()
        return spec


class TracesSection(_Section):
    path: Optional[str] = None
    generator: GeneratorSection = GeneratorSection()


class RunConfig(_Section):
    version: Literal[1] = CONFIG_VERSION
    seed: int = 0
    sim: SimSection = SimSection()
    service: ServiceSection = ServiceSection()
    user: UserSection = UserSection()
    reward: RewardSection = RewardSection()
    fnn: FnnSection = FnnSection()
    explore: ExploreSection = ExploreSection()
    training: TrainingSection = TrainingSection()
    traces: TracesSection = TracesSection()


def default_config() -> RunConfig:
    return RunConfig()


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid run config: {_format_errors(exc)}") from None


def load_config(path) -> tuple:
    """Read and validate a JSON run config; returns ``(config, base_dir)``."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(data), p.resolve().parent


def config_json(cfg: RunConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(config_json(cfg).encode()).hexdigest()[:16]


# -- assembly -----------------------------------------------------------------
@dataclass
class Scenario:
    cfg: RunConfig
    env: EdgeEnvironment
    encoder: StateEncoder
    reward_params: RewardParams
    traces: TraceSet


def _resolve(path: str, base_dir) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base_dir is None else Path(base_dir) / p


def load_traces(cfg: RunConfig, base_dir=None) -> TraceSet:
    if cfg.traces.path is not None:
        return read_traces(_resolve(cfg.traces.path, base_dir))
    return generate_traces(cfg.traces.generator.to_spec(), substream(cfg.seed, "traces"))


def build_service(cfg: RunConfig, traces: TraceSet, base_dir=None) -> ServiceProfile:
    sec = cfg.service
    preset = SERVICE_PRESETS[sec.preset] if sec.preset else {}
    name = sec.name or sec.preset
    if name is None:
        raise ConfigError("service needs a name or a preset")

    def pick(field):
        value = getattr(sec, field)
        if value is None:
            if field not in preset:
                raise ConfigError(f"service.{field} is required without a preset")
            value = preset[field]
        return value

    stats, nu = None, None
    if sec.comp_stats is not None:
        stats = tuple(tuple(s) for s in sec.comp_stats)
        nu = knee_nu([m for m, _ in stats], sec.knee_ratio)
    elif sec.profile is not None:
        path = _resolve(sec.profile, base_dir)
        try:
            prof = json.loads(path.read_text())["services"][name]
        except FileNotFoundError:
            raise ConfigError(f"service profile not found: {path}") from None
        except (KeyError, TypeError, json.JSONDecodeError):
            raise ConfigError(f"{path}: no profile for service {name!r}") from None
        stats, nu = tuple(tuple(s) for s in prof["comp_stats"]), prof["nu"]
    else:
        if name not in traces.comp_samples:
            raise ConfigError(f"traces contain no computation samples for service {name!r}")
        stats, nu = profile_service(traces.comp_samples[name], sec.knee_ratio)
    if sec.nu is not None:
        nu = sec.nu
    return ServiceProfile(
        input_size=pick("input_size"), est_output_size=pick("est_output_size"),
        comp_stats=stats, nu=nu, features=tuple(pick("features")), name=name)


def normalization_for(cfg: RunConfig, service: ServiceProfile, traces: TraceSet) -> NormalizationSpec:
    """Bounds from the generator/trace ranges and the run's static inputs."""
    bw_hi = max(float(np.max(c)) for c in traces.bandwidth_samples.values())
    bw_hi = max(bw_hi, cfg.traces.generator.bw_max)
    prop_hi = max(traces.bucket_median_prop(b) for b in traces.rtt_samples) * 2.0
    server = [(0.0, bw_hi), (0.0, bw_hi), (0.0, 1.0), (0.0, 1.0),
              (0.0, float(cfg.sim.max_load)), (0.0, prop_hi)]

    def around(v):
        return (0.0, 2.0 * abs(v)) if v != 0 else (0.0, 1.0)

    static = [around(service.input_size), around(service.est_output_size)]
    static += [around(f) for f in service.features]
    user = [around(cfg.user.uplink_bw), around(cfg.user.downlink_bw)]
    return NormalizationSpec.for_layout(cfg.sim.n, server, static, user)


def sim_config(cfg: RunConfig) -> SimConfig:
    s = cfg.sim
    return SimConfig(
        n=s.n, max_load=s.max_load, steps_per_episode=s.steps_per_episode, episodes=s.episodes,
        seed=cfg.seed, p_up=s.p_up, p_down=s.p_down, fallback_latency=s.fallback_latency,
        k_max=s.k_max, prop_sigma_log=s.prop_sigma_log, output_jitter=tuple(s.output_jitter),
        single_transfer_terms=s.single_transfer_terms,
        server_compute_scale=tuple(s.server_compute_scale) if s.server_compute_scale else None)


def build_scenario(cfg: RunConfig, base_dir=None, traces: TraceSet | None = None) -> Scenario:
    if traces is None:
        traces = load_traces(cfg, base_dir)
    service = build_service(cfg, traces, base_dir)
    cm = cfg.service.comp_model
    comp_model = CompModel(cm.mode, cm.a, tuple(cm.b), tuple(cm.c), cm.floor)
    user = UserProfile(cfg.user.uplink_bw, cfg.user.downlink_bw, cfg.user.location_id)
    env = EdgeEnvironment(sim_config(cfg), service, user, traces, comp_model)
    encoder = StateEncoder(normalization_for(cfg, service, traces)).fit()
    return Scenario(cfg, env, encoder, RewardParams(cfg.reward.delta, cfg.sim.n), traces)


def build_model(cfg: RunConfig) -> RewardTargetClassifier:
    f = cfg.fnn
    init_seed = int(substream(cfg.seed, "learner-init").integers(2**32))
    return RewardTargetClassifier(
        hidden_widths=tuple(f.hidden_widths), learning_rate=f.learning_rate, beta_1=f.beta_1,
        beta_2=f.beta_2, epsilon=f.adam_eps, batch_size=f.batch_size, random_state=init_seed,
        n_outputs=2**cfg.sim.n - 1)


def training_params(cfg: RunConfig) -> TrainingParams:
    e = cfg.explore
    schedule = ExploreSchedule(e.epsilon, e.epsilon_decay, min(e.epsilon_min, e.epsilon), e.decay_mode)
    t = cfg.training
    return TrainingParams(
        episodes=cfg.sim.episodes, steps_per_episode=cfg.sim.steps_per_episode, kappa=t.kappa,
        replay_window=t.replay_window, epochs_per_round=t.epochs_per_round, schedule=schedule)
