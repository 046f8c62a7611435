"""Deep Q-network learner written directly on numpy.

The Q-function is a small fully connected network mapping the six state
features to one value per action (idle, charge). Parameters are float64
throughout so gradients can be checked against finite differences.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .data import SLOTS_PER_DAY
from .environment import EnvState, EpisodeConfig

N_FEATURES = 6
N_ACTIONS = 2
CHECKPOINT_FORMAT = "evcharge-dqn"
CHECKPOINT_VERSION = 1


class DivergenceError(FloatingPointError):
    """Raised when a TD update produces a non-finite loss or parameters."""


# --------------------------------------------------------------------------
# activations
#
# Each entry maps pre-activations z to (h, aux) and (z, aux) to dh/dz, where
# aux carries whatever the forward pass can share with the derivative.


def _softplus(z):
    e = np.exp(-np.abs(z))
    return np.maximum(z, 0.0) + np.log1p(e), e


def _softplus_grad(z, e):
    # logistic sigmoid from the cached exp(-|z|)
    inv = 1.0 / (1.0 + e)
    return np.where(z >= 0, inv, e * inv)


def _relu(z):
    return np.maximum(z, 0.0), None


def _relu_grad(z, aux):
    return (z > 0).astype(z.dtype)


def _tanh(z):
    h = np.tanh(z)
    return h, h


def _tanh_grad(z, h):
    return 1.0 - h * h


def _identity(z):
    return z, None


def _identity_grad(z, aux):
    return np.ones_like(z)


ACTIVATIONS = {
    "softplus": (_softplus, _softplus_grad),
    "relu": (_relu, _relu_grad),
    "tanh": (_tanh, _tanh_grad),
    "linear": (_identity, _identity_grad),
}


# --------------------------------------------------------------------------
# network


def _layout(dims: Sequence[int]) -> list[tuple[int, int, int, int]]:
    """(weight offset, bias offset, fan_in, fan_out) per layer in a flat vector."""
    out = []
    offset = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        out.append((offset, offset + fan_in * fan_out, fan_in, fan_out))
        offset += fan_in * fan_out + fan_out
    return out


class QNetwork:
    """Feedforward Q-approximator.

    All parameters live in one flat float64 vector ``flat`` laid out as
    W0, b0, W1, b1, ...; ``weights[i]`` (shape ``(dims[i], dims[i + 1])``)
    and ``biases[i]`` are views into it. Hidden layers use ``activation``,
    the output layer is linear.
    """

    def __init__(self, dims: Sequence[int] = (N_FEATURES, 64, 64, N_ACTIONS), activation: str = "softplus",
                 rng: np.random.Generator | None = None):
        if len(dims) < 2:
            raise ValueError("network needs an input and an output layer")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.dims = tuple(int(d) for d in dims)
        self.activation = activation
        self._bind(np.zeros(sum(i * o + o for i, o in zip(self.dims[:-1], self.dims[1:]))))
        rng = rng if rng is not None else np.random.default_rng(0)
        for w in self.weights:
            bound = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            w[...] = rng.uniform(-bound, bound, size=w.shape)

    def _bind(self, flat: np.ndarray) -> None:
        self.flat = flat
        self.weights = []
        self.biases = []
        for w_off, b_off, fan_in, fan_out in _layout(self.dims):
            self.weights.append(flat[w_off:b_off].reshape(fan_in, fan_out))
            self.biases.append(flat[b_off:b_off + fan_out])

    @classmethod
    def zeros(cls, dims: Sequence[int], activation: str = "softplus") -> "QNetwork":
        net = cls(dims, activation)
        net.flat[...] = 0.0
        return net

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_params(self) -> int:
        return self.flat.size

    def params(self) -> list[np.ndarray]:
        """Parameter views in flat order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def get_flat(self) -> np.ndarray:
        return self.flat.copy()

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != self.flat.shape:
            raise ValueError(f"flat parameter vector has length {flat.size}, expected {self.flat.size}")
        self.flat[...] = flat

    def copy(self) -> "QNetwork":
        net = QNetwork.__new__(QNetwork)
        net.dims = self.dims
        net.activation = self.activation
        net._bind(self.flat.copy())
        return net

    def forward(self, x: np.ndarray) -> np.ndarray:
        act = ACTIVATIONS[self.activation][0]
        h = x
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = act(h)[0]
        return h

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[tuple]]:
        """Forward pass that keeps (layer input, pre-activation, aux) for backprop."""
        act = ACTIVATIONS[self.activation][0]
        cache = []
        h = x
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h_next, aux = act(z)
            else:
                h_next, aux = z, None
            cache.append((h, z, aux))
            h = h_next
        return h, cache

    def backward(self, grad_out: np.ndarray, cache) -> np.ndarray:
        """Flat gradient of ``sum(grad_out * output)`` w.r.t. ``flat``."""
        dact = ACTIVATIONS[self.activation][1]
        grad = np.empty_like(self.flat)
        delta = grad_out
        layout = _layout(self.dims)
        for i in range(self.n_layers - 1, -1, -1):
            h_in, z, aux = cache[i]
            if i < self.n_layers - 1:
                delta = delta * dact(z, aux)
            w_off, b_off, fan_in, fan_out = layout[i]
            np.matmul(h_in.T, delta, out=grad[w_off:b_off].reshape(fan_in, fan_out))
            np.sum(delta, axis=0, out=grad[b_off:b_off + fan_out])
            if i > 0:
                delta = delta @ self.weights[i].T
        return grad

    def all_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat)))


def q_values(net: QNetwork, state_features: np.ndarray) -> np.ndarray:
    """Return ``(Q(s, idle), Q(s, charge))`` for one feature vector."""
    x = np.asarray(state_features, dtype=np.float64)
    if x.shape != (net.dims[0],):
        raise ValueError(f"expected {net.dims[0]} features, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite state features")
    return net.forward(x[None, :])[0]


def greedy_action(q: np.ndarray) -> int:
    # ties go to idle
    return 1 if q[1] > q[0] else 0


def select_action(net: QNetwork, state_features: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return greedy_action(q_values(net, state_features))


def sync_target(net: QNetwork, target_net: QNetwork) -> QNetwork:
    """Hard-copy ``net``'s parameters into ``target_net`` in place."""
    if net.dims != target_net.dims:
        raise ValueError(f"shape mismatch: {net.dims} vs {target_net.dims}")
    target_net.flat[...] = net.flat
    target_net.activation = net.activation
    return target_net


# --------------------------------------------------------------------------
# state features


@dataclass(frozen=True)
class FeatureScaler:
    """Maps raw environment states onto roughly unit-scaled network inputs."""

    max_price: float
    pv_cap_kw: float
    load_cap_kw: float
    ev_budget: float
    horizon: int = SLOTS_PER_DAY

    @classmethod
    def for_episode(cls, config: EpisodeConfig) -> "FeatureScaler":
        budget = config.budget if config.budget > 0 else 1.0
        return cls(config.tariff.max_price, config.env.pv_cap_kw, config.env.load_cap_kw, budget)

    def __call__(self, state: EnvState) -> np.ndarray:
        return np.array(
            (
                state.price / self.max_price,
                state.pv / self.pv_cap_kw,
                state.non_ev / self.load_cap_kw,
                state.ev_run / self.ev_budget,
                state.soc,
                state.t / SLOTS_PER_DAY,
            )
        )


# --------------------------------------------------------------------------
# replay buffer


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring of transitions."""

    def __init__(self, capacity: int, n_features: int = N_FEATURES):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, n_features))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, n_features))
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._head = 0

    def __len__(self) -> int:
        return self.size

    def push(self, state, action: int, reward: float, next_state, done: bool) -> None:
        i = self._head
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = done
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push_many(self, states, actions, rewards, next_states, dones) -> None:
        """Push rows in order; equivalent to calling ``push`` once per row."""
        k = len(rewards)
        if k > self.capacity:
            sl = slice(k - self.capacity, k)
            self._head = (self._head + k - self.capacity) % self.capacity
            self.size = self.capacity
            states, actions, rewards, next_states = states[sl], actions[sl], rewards[sl], next_states[sl]
            dones = np.broadcast_to(dones, (k,))[sl]
            k = self.capacity
        idx = (self._head + np.arange(k)) % self.capacity
        self.states[idx] = states
        self.actions[idx] = actions
        self.rewards[idx] = rewards
        self.next_states[idx] = next_states
        self.dones[idx] = dones
        self._head = (self._head + k) % self.capacity
        self.size = min(self.size + k, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.dones[idx])

    def contents(self) -> Batch:
        """All stored transitions, oldest first."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = (np.arange(self.capacity) + self._head) % self.capacity
        return Batch(self.states[order], self.actions[order], self.rewards[order], self.next_states[order],
                     self.dones[order])


# --------------------------------------------------------------------------
# temporal-difference learning


def td_targets(target_net: QNetwork, batch: Batch, gamma: float) -> np.ndarray:
    next_q = target_net.forward(batch.next_states).max(axis=1)
    return batch.rewards + gamma * np.where(batch.dones, 0.0, next_q)


def td_loss_and_grads(net: QNetwork, target_net: QNetwork, batch: Batch, gamma: float) -> tuple[float, np.ndarray]:
    """Mean squared TD error and its flat gradient w.r.t. ``net.flat``.

    Targets are held fixed (no gradient flows through the target network).
    """
    y = td_targets(target_net, batch, gamma)
    q, cache = net.forward_cached(batch.states)
    n = len(y)
    rows = np.arange(n)
    err = q[rows, batch.actions] - y
    loss = float(np.mean(err ** 2))
    grad_q = np.zeros_like(q)
    grad_q[rows, batch.actions] = 2.0 * err / n
    return loss, net.backward(grad_q, cache)


def td_loss(net: QNetwork, target_net: QNetwork, batch: Batch, gamma: float) -> float:
    y = td_targets(target_net, batch, gamma)
    q = net.forward(batch.states)
    return float(np.mean((q[np.arange(len(y)), batch.actions] - y) ** 2))


def clip_by_global_norm(grad: np.ndarray, max_norm: float | None) -> np.ndarray:
    if max_norm is None:
        return grad
    norm = float(np.sqrt(grad @ grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        params -= self.lr * grad


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        self.m *= b1
        self.m += (1 - b1) * grad
        self.v *= b2
        self.v += (1 - b2) * grad * grad
        params -= lr_t * self.m / (np.sqrt(self.v) + self.eps)


OPTIMIZERS = {"sgd": SGD, "adam": Adam}


def td_update(net: QNetwork, target_net: QNetwork, batch: Batch, gamma: float, lr: float,
              clip_norm: float | None = 10.0, optimizer: SGD | Adam | None = None) -> float:
    """One gradient step on the TD loss; returns the loss before the step.

    Plain SGD with rate ``lr`` unless a stateful ``optimizer`` is passed.
    """
    if len(batch.rewards) == 0:
        raise ValueError("empty batch")
    with np.errstate(all="ignore"):  # non-finite values are reported below
        loss, grads = td_loss_and_grads(net, target_net, batch, gamma)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite TD loss {loss}")
    grads = clip_by_global_norm(grads, clip_norm)
    (optimizer or SGD(lr)).step(net.flat, grads)
    if not net.all_finite():
        raise DivergenceError("non-finite parameters after TD update")
    return loss


# --------------------------------------------------------------------------
# checkpoints


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path: str | Path, net: QNetwork, config: dict | None = None,
                    rng: np.random.Generator | None = None, meta: dict | None = None) -> Path:
    """Write a JSON checkpoint. Python float repr round-trips float64 exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": list(net.dims),
        "activation": net.activation,
        "params": net.flat.tolist(),
        "config_hash": config_hash(config or {}),
        "config": config or {},
        "rng_state": rng.bit_generator.state if rng is not None else None,
        "meta": meta or {},
    }
    path.write_text(json.dumps(blob))
    return path


class CheckpointError(ValueError):
    pass


def load_checkpoint(path: str | Path) -> tuple[QNetwork, dict]:
    """Return the network and the raw checkpoint dict."""
    try:
        blob = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an {CHECKPOINT_FORMAT} checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {blob.get('version')} != supported {CHECKPOINT_VERSION}")
    net = QNetwork(blob["dims"], blob["activation"])
    net.set_flat(np.array(blob["params"], dtype=np.float64))
    return net, blob


def restore_rng(blob: dict) -> np.random.Generator | None:
    state = blob.get("rng_state")
    if state is None:
        return None
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng
