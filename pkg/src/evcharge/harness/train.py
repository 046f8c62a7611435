"""DQN training loop over daily episodes."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..agent import (
    N_ACTIONS,
    N_FEATURES,
    OPTIMIZERS,
    DivergenceError,
    FeatureScaler,
    QNetwork,
    ReplayBuffer,
    save_checkpoint,
    sync_target,
    td_update,
)
from ..data import SLOTS_PER_DAY, Dataset
from ..environment import EnvConfig, EpisodeConfig, initial_state, transition

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    gamma: float = 0.99
    lr: float = 1e-3
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.6
    batch_size: int = 64
    target_sync: int = 500
    buffer_capacity: int = 50_000
    train_every: int = 16
    learning_starts: int = 1_000
    clip_norm: float | None = 10.0
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "softplus"
    optimizer: str = "adam"
    eval_every: int = 25
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must be in [0, 1]")
        if not (0 <= self.eps_end <= 1 and 0 <= self.eps_start <= 1):
            raise ValueError("epsilon bounds must be in [0, 1]")
        if self.epochs < 0 or self.batch_size <= 0 or self.target_sync <= 0 or self.train_every <= 0:
            raise ValueError("epochs, batch size, sync interval and train_every must be positive")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @property
    def dims(self) -> tuple[int, ...]:
        return (N_FEATURES, *self.hidden, N_ACTIONS)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**data)


def epsilon_at(step: int, total_steps: int, config: TrainConfig) -> float:
    """Exponential decay from ``eps_start`` to ``eps_end`` over the first
    ``eps_decay_fraction`` of training, constant afterwards."""
    decay_steps = config.eps_decay_fraction * total_steps
    if decay_steps <= 0 or step >= decay_steps or config.eps_start <= 0:
        return config.eps_end
    if config.eps_end <= 0:
        return config.eps_start * (1 - step / decay_steps)
    return config.eps_start * (config.eps_end / config.eps_start) ** (step / decay_steps)


@dataclass
class TrainResult:
    net: QNetwork
    best_net: QNetwork
    episode_rewards: list[float] = field(default_factory=list)
    episode_days: list[str] = field(default_factory=list)
    greedy_scores: list[tuple[int, float]] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    steps: int = 0
    syncs: list[int] = field(default_factory=list)
    updates: int = 0
    best_score: float = -math.inf
    rng: np.random.Generator | None = None


class EpisodeBatch:
    """All training days advanced together, one slot per tick.

    Because every episode sits at the same slot, the state features are
    built for the whole batch at once; dynamics still go through the
    single-episode ``transition``.
    """

    def __init__(self, episodes: list[EpisodeConfig]):
        self.episodes = episodes
        self.n = len(episodes)
        env = episodes[0].env
        self.horizon = env.horizon
        self.price_scale = 1.0 / env.tariff.max_price
        self.pv = np.array([e.day.pv for e in episodes]) / env.pv_cap_kw
        self.non_ev = np.array([e.day.non_ev for e in episodes]) / env.load_cap_kw
        self.prices = env.tariff.slot_prices * self.price_scale
        self.inv_budget = np.array([1.0 / FeatureScaler.for_episode(e).ev_budget for e in episodes])

    def reset(self) -> np.ndarray:
        self.states = [initial_state(e) for e in self.episodes]
        self.t = 0
        return self.features()

    def features(self) -> np.ndarray:
        t = self.t
        x = np.empty((self.n, 6))
        if t < self.horizon:
            x[:, 0] = self.prices[t]
            x[:, 1] = self.pv[:, t]
            x[:, 2] = self.non_ev[:, t]
        else:
            x[:, :3] = 0.0
        x[:, 3] = [s.ev_run for s in self.states]
        x[:, 3] *= self.inv_budget
        x[:, 4] = [s.soc for s in self.states]
        x[:, 5] = t / SLOTS_PER_DAY
        return x

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
        rewards = np.empty(self.n)
        for i, (state, episode) in enumerate(zip(self.states, self.episodes)):
            self.states[i], r, done, _ = transition(state, int(actions[i]), episode)
            rewards[i] = r.total
        self.t += 1
        return self.features(), rewards, done


def greedy_actions(net: QNetwork, x: np.ndarray) -> np.ndarray:
    q = net.forward(x)
    return (q[:, 1] > q[:, 0]).astype(np.int64)  # ties go to idle


def greedy_returns(net: QNetwork, batch: EpisodeBatch) -> np.ndarray:
    x = batch.reset()
    totals = np.zeros(batch.n)
    done = False
    while not done:
        x, r, done = batch.step(greedy_actions(net, x))
        totals += r
    return totals


def greedy_return(net: QNetwork, episode: EpisodeConfig) -> float:
    return float(greedy_returns(net, EpisodeBatch([episode]))[0])


def training_episodes(dataset: Dataset, env_config: EnvConfig) -> list[EpisodeConfig]:
    """Training days with metered EV demand; zero-demand days are degenerate and skipped."""
    episodes = [EpisodeConfig(d, env_config) for d in dataset.train_days]
    skipped = sum(e.p_day_ev <= 0 for e in episodes)
    if skipped:
        logger.info("skipping %d training days without EV demand", skipped)
    return [e for e in episodes if e.p_day_ev > 0]


def train(
    dataset: Dataset,
    env_config: EnvConfig,
    config: TrainConfig = TrainConfig(),
    out_dir: str | Path | None = None,
    on_update: Callable[[int, QNetwork, QNetwork], None] | None = None,
) -> TrainResult:
    """Train a DQN for ``config.epochs`` epochs.

    One epoch runs one epsilon-greedy episode on every training day; the
    days advance in lockstep. ``train_every`` counts environment
    transitions per gradient update and ``target_sync`` counts gradient
    updates per hard target copy. Every ``eval_every`` epochs the greedy
    policy is scored on the training days and the best network is kept.
    """
    episodes = training_episodes(dataset, env_config)
    if not episodes:
        raise ValueError("no training day with positive EV demand")
    batch_env = EpisodeBatch(episodes)
    n = batch_env.n

    rng = np.random.default_rng(config.seed)
    net = QNetwork(config.dims, config.activation, rng)
    target = net.copy()
    buffer = ReplayBuffer(config.buffer_capacity)
    optimizer = OPTIMIZERS[config.optimizer](config.lr)
    result = TrainResult(net=net, best_net=net.copy(), rng=rng)
    dates = [e.day.date.isoformat() for e in episodes]

    total_steps = config.epochs * n * env_config.horizon
    warmup = max(config.batch_size, config.learning_starts)
    step = 0
    updates = 0
    for epoch in range(config.epochs):
        x = batch_env.reset()
        ep_rewards = np.zeros(n)
        done = False
        while not done:
            eps = epsilon_at(step, total_steps, config)
            explore = rng.random(n) < eps
            random_actions = rng.integers(0, N_ACTIONS, n)
            actions = np.where(explore, random_actions, greedy_actions(net, x)) if not explore.all() else random_actions
            x_next, rewards, done = batch_env.step(actions)
            buffer.push_many(x, actions, rewards, x_next, done)
            ep_rewards += rewards
            x = x_next
            step += n
            if len(buffer) < warmup:
                continue
            while updates < step // config.train_every:
                sample = buffer.sample(config.batch_size, rng)
                try:
                    loss = td_update(net, target, sample, config.gamma, config.lr, config.clip_norm, optimizer)
                except DivergenceError as exc:
                    logger.error("divergence at update %d (epoch %d, env step %d): %s", updates, epoch, step, exc)
                    raise DivergenceError(f"update {updates}: {exc}") from exc
                updates += 1
                result.losses.append(loss)
                if updates % config.target_sync == 0:
                    sync_target(net, target)
                    result.syncs.append(updates)
                if on_update is not None:
                    on_update(updates, net, target)
        result.episode_rewards.extend(ep_rewards.tolist())
        result.episode_days.extend(dates)

        if (epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs:
            score = float(np.mean(greedy_returns(net, batch_env)))
            result.greedy_scores.append((epoch + 1, score))
            if score > result.best_score:
                result.best_score = score
                result.best_net = net.copy()
            logger.info("epoch %d: greedy train return %.3f, epsilon %.3f", epoch + 1, score,
                        epsilon_at(step, total_steps, config))

    result.steps = step
    result.updates = updates
    if out_dir is not None:
        write_run(out_dir, result, config)
    return result


def write_run(out_dir: str | Path, result: TrainResult, config: TrainConfig) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = config.to_dict()
    meta = {"steps": result.steps, "updates": result.updates, "best_score": result.best_score}
    save_checkpoint(out / "checkpoint_final.json", result.net, cfg, result.rng, meta)
    save_checkpoint(out / "checkpoint_best.json", result.best_net, cfg, result.rng, meta)
    with open(out / "learning_curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "day", "total_reward"])
        for i, (day, r) in enumerate(zip(result.episode_days, result.episode_rewards)):
            writer.writerow([i, day, repr(r)])
    with open(out / "greedy_scores.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "greedy_train_return"])
        writer.writerows(result.greedy_scores)
    return out
