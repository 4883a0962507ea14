"""Reward-trained feed-forward scheduler.

:class:`RewardTargetClassifier` is a small ReLU/softmax network trained with
categorical cross-entropy against *soft* target vectors (one probability
vector per sample) using Adam. It follows the scikit-learn estimator API so
it can be cloned, grid-searched and pickled like any other classifier.
:func:`train_scheduler` runs the episode/step loop that produces its
training data.
"""

from __future__ import annotations

import io
import json
import logging
import zipfile
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .domain import ActionSet, StepRecord
from .errors import ConfigError, ModelError, TrainingError
from .policy import build_target_vector, reward, target_latency

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "edgehedge-fnn"
CHECKPOINT_VERSION = 1
DEFAULT_HIDDEN = (128, 128, 64, 64, 32)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


class RewardTargetClassifier(ClassifierMixin, BaseEstimator):
    """Feed-forward network over ``n_outputs`` actions trained on soft targets.

    Parameters
    ----------
    hidden_widths : tuple of int
        Width of each ReLU hidden layer.
    learning_rate, beta_1, beta_2, epsilon : float
        Adam step size and moment/stability constants.
    batch_size : int
        Minibatch size; one Adam update per minibatch.
    max_iter : int
        Passes over the data made by :meth:`fit`. :meth:`partial_fit`
        always makes exactly one.
    shuffle : bool
        Shuffle samples before each pass.
    random_state : int or None
        Seeds weight initialization and shuffling.
    n_outputs : int or None
        Number of actions. Inferred from 2-D targets when ``None``.

    Attributes
    ----------
    coefs_, intercepts_ : list of ndarray
        Layer weights (``(fan_in, fan_out)``) and biases.
    loss_ : float
        Mean cross-entropy of the most recent pass.
    t_ : int
        Number of Adam updates applied so far.
    """

    def __init__(self, hidden_widths=DEFAULT_HIDDEN, learning_rate=1e-3, beta_1=0.9, beta_2=0.999,
                 epsilon=1e-8, batch_size=32, max_iter=1, shuffle=True, random_state=None,
                 n_outputs=None):
        self.hidden_widths = hidden_widths
        self.learning_rate = learning_rate
        self.beta_1 = beta_1
        self.beta_2 = beta_2
        self.epsilon = epsilon
        self.batch_size = batch_size
        self.max_iter = max_iter
        self.shuffle = shuffle
        self.random_state = random_state
        self.n_outputs = n_outputs

    # -- setup ----------------------------------------------------------------
    def _targets(self, y, n_samples: int) -> np.ndarray:
        y = np.asarray(y)
        if y.ndim == 1:
            n_out = self.n_outputs if self.n_outputs is not None else int(y.max()) + 1
            if y.min() < 0 or y.max() >= n_out:
                raise ModelError("class labels out of range")
            Y = np.zeros((y.size, n_out))
            Y[np.arange(y.size), y.astype(int)] = 1.0
        elif y.ndim == 2:
            Y = y.astype(float)
            if np.any(Y < 0) or not np.allclose(Y.sum(axis=1), 1.0, atol=1e-6):
                raise ModelError("soft targets must be non-negative rows summing to 1")
        else:
            raise ModelError("targets must be labels (1-D) or probability rows (2-D)")
        if Y.shape[0] != n_samples:
            raise ModelError(f"{n_samples} samples but {Y.shape[0]} targets")
        if self.n_outputs is not None and Y.shape[1] != self.n_outputs:
            raise ModelError(f"targets have width {Y.shape[1]}, expected {self.n_outputs}")
        return Y

    def _initialize(self, n_features: int, n_outputs: int) -> None:
        if any(w < 1 for w in self.hidden_widths):
            raise ConfigError("hidden widths must be positive")
        self._rng = np.random.default_rng(self.random_state)
        dims = [n_features, *self.hidden_widths, n_outputs]
        self.coefs_, self.intercepts_ = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / fan_in)
            self.coefs_.append(self._rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.intercepts_.append(np.zeros(fan_out))
        self._m = [np.zeros_like(p) for p in self._params()]
        self._v = [np.zeros_like(p) for p in self._params()]
        self.t_ = 0
        self.n_features_in_ = n_features
        self.n_outputs_ = n_outputs
        self.classes_ = np.arange(n_outputs)
        self.loss_curve_ = []

    def _params(self) -> list:
        return [*self.coefs_, *self.intercepts_]

    def _check_X(self, X) -> np.ndarray:
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ModelError(f"input has {X.shape[1]} features, network expects {self.n_features_in_}")
        return X

    # -- math -----------------------------------------------------------------
    def _forward(self, X: np.ndarray) -> list:
        activations = [X]
        a = X
        for W, b in zip(self.coefs_[:-1], self.intercepts_[:-1]):
            a = np.maximum(a @ W + b, 0.0)
            activations.append(a)
        activations.append(a @ self.coefs_[-1] + self.intercepts_[-1])
        return activations

    def loss_gradient(self, X, Y) -> tuple:
        """Mean cross-entropy and its gradients ``(loss, coef_grads, intercept_grads)``."""
        acts = self._forward(X)
        logits = acts[-1]
        logp = _log_softmax(logits)
        B = X.shape[0]
        loss = float(-(Y * logp).sum() / B)
        # same softmax as predict_proba, so t == p gives an exactly zero gradient
        delta = (_softmax(logits) - Y) / B
        coef_grads = [None] * len(self.coefs_)
        intercept_grads = [None] * len(self.coefs_)
        for layer in range(len(self.coefs_) - 1, -1, -1):
            coef_grads[layer] = acts[layer].T @ delta
            intercept_grads[layer] = delta.sum(axis=0)
            if layer:
                delta = (delta @ self.coefs_[layer].T) * (acts[layer] > 0)
        return loss, coef_grads, intercept_grads

    def _adam_update(self, grads: list) -> None:
        self.t_ += 1
        b1, b2 = self.beta_1, self.beta_2
        lr_t = self.learning_rate * np.sqrt(1 - b2**self.t_) / (1 - b1**self.t_)
        for p, g, m, v in zip(self._params(), grads, self._m, self._v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr_t * m / (np.sqrt(v) + self.epsilon)

    def _one_pass(self, X: np.ndarray, Y: np.ndarray) -> float:
        order = self._rng.permutation(X.shape[0]) if self.shuffle else np.arange(X.shape[0])
        total = 0.0
        for start in range(0, X.shape[0], self.batch_size):
            idx = order[start:start + self.batch_size]
            loss, cg, ig = self.loss_gradient(X[idx], Y[idx])
            if not np.isfinite(loss):
                err = TrainingError(f"non-finite loss {loss} at Adam step {self.t_ + 1}")
                err.batch = (X[idx], Y[idx])
                raise err
            self._adam_update([*cg, *ig])
            total += loss * idx.size
        self.loss_ = total / X.shape[0]
        self.loss_curve_.append(self.loss_)
        return self.loss_

    # -- estimator API --------------------------------------------------------
    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        Y = self._targets(y, X.shape[0])
        self._initialize(X.shape[1], Y.shape[1])
        for _ in range(self.max_iter):
            self._one_pass(X, Y)
        return self

    def partial_fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        Y = self._targets(y, X.shape[0])
        if not hasattr(self, "coefs_"):
            self._initialize(X.shape[1], Y.shape[1])
        X = self._check_X(X)
        if Y.shape[1] != self.n_outputs_:
            raise ModelError(f"targets have width {Y.shape[1]}, network has {self.n_outputs_} outputs")
        self._one_pass(X, Y)
        return self

    def initialize(self, n_features: int, n_outputs: int):
        """Create fresh weights without training."""
        self._initialize(n_features, n_outputs)
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "coefs_")
        return self._forward(self._check_X(X))[-1]

    def predict_proba(self, X) -> np.ndarray:
        return _softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        # np.argmax returns the first maximum: ties go to the lowest action index
        return np.argmax(self.decision_function(X), axis=1)


# -- checkpoints ---------------------------------------------------------------
def save_checkpoint(model: RewardTargetClassifier, path, meta: Optional[dict] = None) -> None:
    """Write weights, Adam moments and RNG state to a deterministic ``.npz``.

    Archive members: ``header`` (JSON: format, version, estimator params,
    layer dims, Adam step, shuffle RNG state, user metadata) and, for each
    layer ``i``, ``W{i}``, ``b{i}``, ``mW{i}``, ``mb{i}``, ``vW{i}``,
    ``vb{i}`` as row-major float64 arrays.
    """
    check_is_fitted(model, "coefs_")
    L = len(model.coefs_)
    params = model.get_params()
    params["hidden_widths"] = list(params["hidden_widths"])
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "params": params,
        "dims": [model.n_features_in_, *[W.shape[1] for W in model.coefs_]],
        "t": model.t_,
        "loss_curve": model.loss_curve_,
        "rng_state": model._rng.bit_generator.state,
        "meta": meta or {},
    }
    arrays = {"header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for i in range(L):
        arrays[f"W{i}"] = model.coefs_[i]
        arrays[f"b{i}"] = model.intercepts_[i]
        arrays[f"mW{i}"], arrays[f"mb{i}"] = model._m[i], model._m[L + i]
        arrays[f"vW{i}"], arrays[f"vb{i}"] = model._v[i], model._v[L + i]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


def load_checkpoint(path) -> tuple:
    """Inverse of :func:`save_checkpoint`; returns ``(model, meta)``."""
    try:
        data = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise ModelError(f"checkpoint not found: {path}") from None
    except (ValueError, OSError, zipfile.BadZipFile) as exc:
        raise ModelError(f"{path}: unreadable checkpoint ({exc})") from None
    with data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
            raise ModelError(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} checkpoint")
        params = dict(header["params"])
        params["hidden_widths"] = tuple(params["hidden_widths"])
        model = RewardTargetClassifier(**params)
        dims = header["dims"]
        model._initialize(dims[0], dims[-1])
        L = len(dims) - 1
        model.coefs_ = [data[f"W{i}"].copy() for i in range(L)]
        model.intercepts_ = [data[f"b{i}"].copy() for i in range(L)]
        model._m = [data[f"mW{i}"].copy() for i in range(L)] + [data[f"mb{i}"].copy() for i in range(L)]
        model._v = [data[f"vW{i}"].copy() for i in range(L)] + [data[f"vb{i}"].copy() for i in range(L)]
    model.t_ = header["t"]
    model.loss_curve_ = list(header["loss_curve"])
    model._rng.bit_generator.state = header["rng_state"]
    return model, header["meta"]


# -- exploration ---------------------------------------------------------------
DECAY_MODES = ("per_step_linear", "per_training_round_linear")


@dataclass(frozen=True)
class ExploreSchedule:
    epsilon: float = 1.0
    epsilon_decay: float = 0.02
    epsilon_min: float = 0.01
    decay_mode: str = "per_training_round_linear"
    epsilon_max: Optional[float] = None

    def __post_init__(self):
        if self.decay_mode not in DECAY_MODES:
            raise ConfigError(f"decay_mode must be one of {DECAY_MODES}")
        if not 0.0 <= self.epsilon_min <= self.epsilon <= 1.0:
            raise ConfigError("need 0 <= epsilon_min <= epsilon <= 1")
        if self.epsilon_decay < 0:
            raise ConfigError("epsilon_decay must be >= 0")
        if self.epsilon_max is None:
            object.__setattr__(self, "epsilon_max", self.epsilon)

    def decayed(self, event: str) -> "ExploreSchedule":
        """Schedule after a ``"step"`` or ``"round"`` event."""
        if (event == "step") != (self.decay_mode == "per_step_linear"):
            return self
        eps = min(self.epsilon_max, max(self.epsilon_min, self.epsilon - self.epsilon_decay))
        return replace(self, epsilon=eps)


def select_action(model: RewardTargetClassifier, state_vec: np.ndarray, schedule: ExploreSchedule,
                  rng: np.random.Generator, n: int) -> ActionSet:
    """Epsilon-greedy: uniform over all actions w.p. epsilon, else the network's argmax."""
    n_actions = 2**n - 1
    if rng.random() < schedule.epsilon:
        return ActionSet.from_index(int(rng.integers(n_actions)), n)
    return ActionSet.from_index(int(model.predict(np.asarray(state_vec)[None, :])[0]), n)


# -- training loop --------------------------------------------------------------
@dataclass(frozen=True)
class TrainingParams:
    episodes: int
    steps_per_episode: int
    kappa: int = 128
    replay_window: Optional[int] = None
    epochs_per_round: int = 1
    schedule: ExploreSchedule = field(default_factory=ExploreSchedule)

    def __post_init__(self):
        if self.kappa < 1 or self.epochs_per_round < 1:
            raise ConfigError("kappa and epochs_per_round must be >= 1")
        if self.replay_window is not None and self.replay_window < self.kappa:
            raise ConfigError("replay_window must be >= kappa")


@dataclass
class TrainResult:
    model: RewardTargetClassifier
    records: list
    epsilons: list  # epsilon after each training round
    losses: list  # mean loss of each training round


def training_targets(records, n: int) -> tuple:
    """Stack stored tuples into ``(X, V)`` for the network."""
    X = np.vstack([r.state for r in records])
    V = np.vstack([build_target_vector(r.action, r.reward, n) for r in records])
    return X, V


def train_scheduler(scenario, model: RewardTargetClassifier, params: TrainingParams,
                    env_rng: np.random.Generator, explore_rng: np.random.Generator,
                    log_dir=None) -> TrainResult:
    """Run ``episodes x steps_per_episode`` steps, retraining every ``kappa`` steps.

    ``model`` must already be initialized (see
    :meth:`RewardTargetClassifier.initialize`).
    """
    env, encoder, rparams = scenario.env, scenario.encoder, scenario.reward_params
    n = env.cfg.n
    store = deque(maxlen=params.replay_window or params.kappa)
    schedule = params.schedule
    records, epsilons, losses = [], [], []
    step = 0
    for episode in range(params.episodes):
        state = env.reset_episode(env_rng)
        for _ in range(params.steps_per_episode):
            x = encoder.transform([state])[0]
            action = select_action(model, x, schedule, explore_rng, n)
            real = env.realize_step(state, env_rng)
            achieved, miss, next_state = env.apply_action_and_advance(state, real, action, env_rng)
            tau = target_latency(env.user, env.service, state.servers)
            r = reward(achieved, tau, action.size, rparams)
            rec = StepRecord(x, action, r, achieved, tau, real.per_server_latency, miss)
            records.append(rec)
            store.append(rec)
            step += 1
            schedule = schedule.decayed("step")
            if step % params.kappa == 0 and len(store) >= params.kappa:
                X, V = training_targets(store, n)
                try:
                    for _ in range(params.epochs_per_round):
                        model.partial_fit(X, V)
                except TrainingError as exc:
                    if log_dir is not None:
                        Path(log_dir).mkdir(parents=True, exist_ok=True)
                        bx, bv = getattr(exc, "batch", (X, V))
                        np.savez(Path(log_dir) / "failed_batch.npz", X=bx, V=bv)
                    raise
                losses.append(model.loss_)
                schedule = schedule.decayed("round")
                epsilons.append(schedule.epsilon)
            state = next_state
        log.debug("episode %d done, epsilon %.3f", episode, schedule.epsilon)
    return TrainResult(model, records, epsilons, losses)
