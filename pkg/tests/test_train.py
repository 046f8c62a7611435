import datetime as dt

import numpy as np
import pytest

from evcharge.agent import DivergenceError, QNetwork, load_checkpoint
from evcharge.data import Dataset, HouseholdDay, synthesize_dataset, solar_evening_profile
from evcharge.environment import EnvConfig
from evcharge.harness import DQNPolicy, TrainConfig, epsilon_at, evaluate, train

from conftest import make_day

FAST = dict(hidden=(16, 16), batch_size=16, learning_starts=32, eval_every=5)


@pytest.fixture(scope="module")
def two_days():
    ds = synthesize_dataset(2, seed=4, profile=solar_evening_profile())
    return ds, EnvConfig.from_dataset(ds)


def test_epsilon_schedule():
    cfg = TrainConfig()
    total = 1000
    assert epsilon_at(0, total, cfg) == 1.0
    assert epsilon_at(600, total, cfg) == 0.05
    assert epsilon_at(999, total, cfg) == 0.05
    assert epsilon_at(300, total, cfg) == pytest.approx(np.sqrt(0.05))
    values = [epsilon_at(s, total, cfg) for s in range(total)]
    assert all(0 <= v <= 1 for v in values)
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(gamma=1.5)
    with pytest.raises(ValueError):
        TrainConfig(eps_end=-0.1)
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"learning_rate": 0.1})
    cfg = TrainConfig(hidden=[8, 8])
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_zero_epochs_returns_initialization(tmp_path, two_days):
    ds, env = two_days
    cfg = TrainConfig(epochs=0, seed=11, **FAST)
    result = train(ds, env, cfg, tmp_path)
    init = QNetwork(cfg.dims, cfg.activation, np.random.default_rng(11))
    assert result.net.flat.tobytes() == init.flat.tobytes()
    saved, _ = load_checkpoint(tmp_path / "checkpoint_final.json")
    assert saved.flat.tobytes() == init.flat.tobytes()
    assert result.updates == 0 and result.episode_rewards == []


def test_training_is_deterministic(two_days):
    ds, env = two_days
    cfg = TrainConfig(epochs=5, seed=2, **FAST)
    a, b = train(ds, env, cfg), train(ds, env, cfg)
    assert a.episode_rewards == b.episode_rewards
    assert a.losses == b.losses
    assert a.net.flat.tobytes() == b.net.flat.tobytes()
    assert len(a.episode_rewards) == 5 * 2


def test_run_outputs(tmp_path, two_days):
    ds, env = two_days
    result = train(ds, env, TrainConfig(epochs=5, seed=0, **FAST), tmp_path)
    curve = (tmp_path / "learning_curve.csv").read_text().splitlines()
    assert curve[0] == "episode,day,total_reward" and len(curve) == 11
    best, blob = load_checkpoint(tmp_path / "checkpoint_best.json")
    assert best.flat.tobytes() == result.best_net.flat.tobytes()
    assert blob["config"]["epochs"] == 5


def test_target_syncs_only_on_multiples_of_interval(two_days):
    ds, env = two_days
    changes = []
    last = {}

    def watch(update, net, target):
        flat = target.flat.tobytes()
        if last and flat != last["flat"]:
            changes.append(update)
        last["flat"] = flat

    result = train(ds, env, TrainConfig(epochs=4, target_sync=7, train_every=4, **FAST), on_update=watch)
    assert result.updates > 30
    assert changes and all(u % 7 == 0 for u in changes)
    assert result.syncs == list(range(7, result.updates + 1, 7))


def test_updates_follow_train_every(two_days):
    ds, env = two_days
    cfg = TrainConfig(epochs=3, train_every=8, **FAST)
    result = train(ds, env, cfg)
    assert result.steps == 3 * 2 * 96
    assert result.updates == result.steps // 8


def test_divergence_raises(two_days):
    ds, env = two_days
    cfg = TrainConfig(epochs=2, lr=1e300, optimizer="sgd", clip_norm=None, **FAST)
    with pytest.raises(DivergenceError):
        train(ds, env, cfg)


def test_days_without_demand_are_skipped():
    idle = Dataset((make_day(pv=0.5, non_ev=1.0, ev=0.0),))
    env = EnvConfig.from_dataset(idle)
    with pytest.raises(ValueError, match="positive EV demand"):
        train(idle, env, TrainConfig(epochs=1, **FAST))


def test_learning_progress_on_repeated_day():
    ds = synthesize_dataset(1, seed=8, profile=solar_evening_profile())
    env = EnvConfig.from_dataset(ds)
    result = train(ds, env, TrainConfig(epochs=300, train_every=4, seed=0, **FAST))
    rewards = np.array(result.episode_rewards)
    assert rewards[-100:].mean() > rewards[:100].mean()


def _blatant_day(date):
    hours = (np.arange(96) + 0.5) / 4
    pv = np.where((hours > 9) & (hours < 16), 6.0 * np.exp(-0.5 * ((hours - 12.5) / 1.5) ** 2), 0.0)
    non_ev = np.full(96, 0.4)
    ev = np.zeros(96)
    ev[46:52] = 3.3  # the user habitually charges around noon
    return HouseholdDay(date, pv, non_ev, ev)


def test_agent_moves_charging_into_solar_hours():
    days = tuple(_blatant_day(dt.date(2018, 7, 1) + dt.timedelta(i)) for i in range(4))
    ds = Dataset(days, frozenset({days[-1].date}))
    env = EnvConfig.from_dataset(ds)
    result = train(ds, env, TrainConfig(epochs=300, train_every=4, seed=0, **FAST))
    _, rollouts = evaluate(DQNPolicy(result.best_net), ds, env, return_rollouts=True)
    traj = rollouts[0].trajectory
    charged = traj[:, 4] == 1
    assert charged.sum() > 0
    assert (traj[charged, 2] > 0).mean() >= 0.8
