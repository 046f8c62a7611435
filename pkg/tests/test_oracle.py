import itertools

import numpy as np
import pytest

from evcharge.environment import BatterySpec, ChargingEnv, EpisodeConfig, apply_action, initial_state
from evcharge.harness import DQNPolicy, dp_oracle, evaluate, exhaustive_oracle, make_policy
from evcharge.harness.oracle import charge_ladder, enumerate_returns
from evcharge.agent import QNetwork

from conftest import make_day, random_toy_day, toy_env


def _sequence_return(config, actions):
    env = ChargingEnv(config)
    return env.rollout(actions)


@pytest.mark.parametrize("seed", range(15))
def test_dp_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    env = toy_env(rng.random(96), cost_q=tuple(sorted(rng.uniform(-0.01, 0.05, 3))))
    day = random_toy_day(rng)
    dp = dp_oracle(day, env, horizon=10)
    ex = dp_oracle(day, env, horizon=10, method="exhaustive")
    assert dp.total_reward == pytest.approx(ex.total_reward, abs=1e-9)
    assert dp.total_reward == pytest.approx(enumerate_returns(EpisodeConfig(day, env.with_horizon(10))).max(),
                                            abs=1e-9)
    assert _sequence_return(EpisodeConfig(day, env.with_horizon(10)), dp.actions) == pytest.approx(dp.total_reward)


def test_horizon_three_matches_all_eight_sequences():
    rng = np.random.default_rng(42)
    day = random_toy_day(rng)
    cfg = EpisodeConfig(day, toy_env().with_horizon(3))
    returns = [_sequence_return(cfg, seq) for seq in itertools.product((0, 1), repeat=3)]
    result = dp_oracle(cfg)
    assert result.total_reward == pytest.approx(max(returns), abs=1e-12)
    assert len(result.actions) == 3


def test_single_charge_budget_picks_best_slot():
    pv = np.zeros(96)
    pv[2:6] = 4.0
    ev = np.zeros(96)
    ev[7] = 4.0  # one 3.3 kW charge fits the budget, a second one does not
    index = np.zeros(96)
    index[5] = 1.0
    day = make_day(pv=pv, non_ev=0.5, ev=ev)
    cfg = EpisodeConfig(day, toy_env(index, battery=BatterySpec(taper_soc=0.99)).with_horizon(8))
    assert cfg.soc_start <= 0.99
    singles = []
    for t in range(8):
        acts = np.zeros(8, dtype=int)
        acts[t] = 1
        singles.append(_sequence_return(cfg, acts))
    result = dp_oracle(cfg)
    assert result.actions == tuple(int(t == 5) for t in range(8))
    assert int(np.argmax(singles)) == 5
    assert result.total_reward == pytest.approx(max(singles))


def test_separable_rewards_make_per_step_greedy_optimal():
    rng = np.random.default_rng(3)
    day = random_toy_day(rng)
    day = make_day(pv=day.pv, non_ev=day.non_ev, ev=np.full(96, 3.3))  # huge budget, low starting SoC
    cfg = EpisodeConfig(day, toy_env(rng.random(96)).with_horizon(12))
    state, greedy_total = initial_state(cfg), 0.0
    for _ in range(12):
        options = [apply_action(state, a, cfg) for a in (0, 1)]
        best = max(options, key=lambda o: o[1].total)
        state, greedy_total = best[0], greedy_total + best[1].total
    assert dp_oracle(cfg).total_reward == pytest.approx(greedy_total)


def test_exhaustive_horizon_limit():
    with pytest.raises(ValueError):
        exhaustive_oracle(EpisodeConfig(make_day(ev=1.0), toy_env().with_horizon(21)))


def test_charge_ladder_tracks_taper():
    cfg = EpisodeConfig(make_day(ev=np.r_[np.full(10, 3.3), np.zeros(86)]), toy_env())
    ladder = charge_ladder(cfg, 12)
    steps = np.diff([run for run, _ in ladder])
    assert set(np.round(steps, 9)) <= {3.3, 1.5}
    assert all(soc <= 1.0 for _, soc in ladder)


def test_oracle_bounds_every_policy(small_dataset, env_config):
    oracle = evaluate(make_policy("dp-oracle"), small_dataset, env_config)
    policies = [make_policy(k) for k in ("metered-replay", "random", "tariff-greedy", "solar-greedy")]
    policies.append(DQNPolicy(QNetwork(rng=np.random.default_rng(0))))
    for policy in policies:
        report = evaluate(policy, small_dataset, env_config)
        for o, r in zip(oracle.rows, report.rows):
            assert o.total_reward >= r.total_reward - 1e-9, policy.name
