"""Acceptance suite: one PASS/FAIL line per criterion.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import gradcheck  # noqa: E402
import reward_tables as rt  # noqa: E402
from conftest import random_toy_day, toy_env  # noqa: E402
from evcharge.data import solar_evening_profile, synthesize_dataset  # noqa: E402
from evcharge.environment import (  # noqa: E402
    BatterySpec,
    EnvConfig,
    EpisodeConfig,
    apply_action,
    charging_power,
    initial_state,
    reward_r1,
    reward_r2,
    reward_r3,
    reward_r4,
    starting_soc,
)
from evcharge.harness import DQNPolicy, TrainConfig, dp_oracle, evaluate, exhaustive_oracle, make_policy, train  # noqa: E402
from evcharge.tariff import AUSTIN_2018_SUMMER, price_at  # noqa: E402

RESULTS: list[str] = []

LEARNING_SEEDS = range(5)
RATIO_MIN = 0.9
SOLAR_MIN = 80.0


def record(name: str, ok: bool, detail: str) -> None:
    RESULTS.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


# ---------------------------------------------------------------- tariff


def test_tariff_prices():
    t0 = time.perf_counter()
    examples = {23: 0.01188, 60: 0.11003, 88: 0.01188, 24: 0.06218, 80: 0.06218}
    expected = [0.01188] * 24 + [0.06218] * 32 + [0.11003] * 24 + [0.06218] * 8 + [0.01188] * 8
    got = [price_at(AUSTIN_2018_SUMMER, t) for t in range(96)]
    ok = all(price_at(AUSTIN_2018_SUMMER, t) == p for t, p in examples.items()) and got == expected
    elapsed = time.perf_counter() - t0
    record("ToU tariff prices", ok and elapsed < 1.0,
           f"5 representative slots exact, 96/96 slots mapped to the right band, {elapsed:.3f} s")


# ---------------------------------------------------------------- battery


def test_starting_soc():
    soc = starting_soc(BatterySpec(capacity_kwh=24, efficiency=0.905), 21.9)
    record("starting SoC", abs(soc - 0.793547) <= 1e-6, f"SoC_start(21.9) = {soc:.7f} (target 0.793547 +/- 1e-6)")


def test_charger_levels_and_soc_update():
    battery = BatterySpec()
    levels = [charging_power(battery, s) for s in (0.5, 0.95, 0.9)]
    cfg = EpisodeConfig(random_toy_day(np.random.default_rng(0)), toy_env())
    nxt, _, _ = apply_action(initial_state(cfg)._replace(soc=0.5), 1, cfg)
    errors = [abs(levels[0] - 3.3), abs(levels[1] - 1.5), abs(levels[2] - 3.3),
              abs(nxt.soc - (0.5 + 0.905 * 3.3 / 96))]
    record("charger levels and SoC update", max(errors) <= 1e-9 and abs(nxt.soc - 0.531109) < 5e-7,
           f"P(0.5, 0.95, 0.9) = {levels}, SoC' = {nxt.soc:.9f}, max error {max(errors):.1e}")


# ---------------------------------------------------------------- rewards


def test_reward_tables():
    rng = np.random.default_rng(2024)
    n = 10_000
    hits = {name: set() for name in ("r1", "r2", "r3", "r4")}
    mismatches = 0
    for _ in range(n):
        a = int(rng.integers(0, 2))
        # r1: PV is zero half the time; ev_run lands on either side of the budget and on it exactly
        pv = float(rng.choice([0.0, rng.uniform(0, 8)]))
        p_day = float(rng.uniform(0, 60))
        run = float(rng.choice([rng.uniform(0, 2 * p_day + 1), 1.05 * p_day]))
        value, case = rt.lookup(rt.R1_CASES, a, pv, run, 1.05 * p_day)
        mismatches += reward_r1(a, pv, run, p_day) != value
        hits["r1"].add(case)

        q = np.sort(rng.uniform(-1, 1, 3))
        x = float(rng.choice([rng.uniform(-1.5, 1.5), *q]))  # quantile values themselves are boundary cases
        for name, fn, cases in (("r2", reward_r2, rt.R2_CASES), ("r3", reward_r3, rt.R3_CASES)):
            value, case = rt.lookup(cases, a, x, *q)
            mismatches += fn(a, x, *q) != value
            hits[name].add(case)

        soc = float(rng.choice([rng.uniform(0.1, 1.1), 1.0]))
        value, case = rt.lookup(rt.R4_CASES, a, soc)
        mismatches += reward_r4(a, soc) != value
        hits["r4"].add(case)

    full = {"r1": 5, "r2": 5, "r3": 5, "r4": 2}
    covered = all(len(hits[k]) == full[k] for k in full)
    record("reward truth tables", mismatches == 0 and covered,
           f"{n} random inputs, {mismatches} mismatches, 0 uncovered, branches hit "
           + ", ".join(f"{k} {len(hits[k])}/{full[k]}" for k in full))


# ---------------------------------------------------------------- agent


def test_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    errors = [gradcheck.relative_error(*gradcheck.random_case(rng)) for _ in range(100)]
    elapsed = time.perf_counter() - t0
    worst = max(errors)
    record("TD-loss gradient check", worst < 1e-4 and elapsed < 30,
           f"100 random (net, batch) draws, worst relative error {worst:.2e} (< 1e-4), {elapsed:.1f} s")


# ---------------------------------------------------------------- oracle


def test_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    disagreements = 0
    for i in range(50):
        env = toy_env(rng.random(96), cost_q=tuple(sorted(rng.uniform(-0.01, 0.05, 3)))).with_horizon(12)
        cfg = EpisodeConfig(random_toy_day(rng), env)
        dp = dp_oracle(cfg)
        ex = exhaustive_oracle(cfg)  # all 4,096 sequences
        disagreements += abs(dp.total_reward - ex.total_reward) > 1e-9
    elapsed = time.perf_counter() - t0
    record("DP oracle equals exhaustive search", disagreements == 0 and elapsed < 10,
           f"50 toy days at horizon 12, {disagreements} disagreements, {elapsed:.1f} s")


# ---------------------------------------------------------------- learning


def _acceptance_dataset():
    ds = synthesize_dataset(20, seed=1, profile=solar_evening_profile(), test_fraction=0.25)
    return ds, EnvConfig.from_dataset(ds)


def _train_and_evaluate(ds, env, seed):
    result = train(ds, env, TrainConfig(epochs=1000, seed=seed))
    return evaluate(DQNPolicy(result.best_net), ds, env)


@pytest.fixture(scope="module")
def learning_runs():
    ds, env = _acceptance_dataset()
    oracle = evaluate(make_policy("dp-oracle"), ds, env)
    reports, times = [], []
    for seed in LEARNING_SEEDS:
        t0 = time.perf_counter()
        reports.append(_train_and_evaluate(ds, env, seed))
        times.append(time.perf_counter() - t0)
    return ds, env, oracle, reports, times


@pytest.mark.slow
def test_learning(learning_runs):
    _, _, oracle, reports, times = learning_runs
    oracle_reward = oracle.aggregate["total_reward"]
    dqn_reward = float(np.mean([r.aggregate["total_reward"] for r in reports]))
    ratio = dqn_reward / oracle_reward
    solar = float(np.mean([r.aggregate["solar_utilization_pct"] for r in reports]))
    savings = float(np.mean([r.aggregate["cost_savings_pct"] for r in reports]))
    per_seed = ", ".join(f"{r.aggregate['total_reward'] / oracle_reward:.3f}" for r in reports)
    print(f"\nper-seed reward ratios: {per_seed}; train+eval minutes per seed: "
          + ", ".join(f"{t / 60:.1f}" for t in times))
    record("DQN reward vs oracle", ratio >= RATIO_MIN,
           f"mean held-out reward {dqn_reward:.2f} vs oracle {oracle_reward:.2f}, ratio {ratio:.3f} "
           f"(>= {RATIO_MIN}) over 5 seeds [{per_seed}]")
    record("solar utilization", solar >= SOLAR_MIN, f"mean {solar:.1f}% (>= {SOLAR_MIN}%)")
    record("cost savings vs metered", savings > 0, f"mean {savings:.1f}% (> 0)")
    record("training runtime", max(times) < 15 * 60,
           f"1000 epochs per seed, slowest seed {max(times) / 60:.1f} min (< 15 min)")


@pytest.mark.slow
def test_determinism(learning_runs):
    ds, env, _, reports, _ = learning_runs
    seed = LEARNING_SEEDS[0]
    again = _train_and_evaluate(ds, env, seed)
    same = again.to_dict() == reports[0].to_dict()
    record("determinism", same, f"seed {seed} trained and evaluated twice, identical EvalReports: {same}")


def test_metered_self_comparison():
    ds, env = _acceptance_dataset()
    report = evaluate(make_policy("metered-replay"), ds, env)
    savings = [r.cost_savings_pct for r in report.rows]
    record("metered self-comparison", all(s == 0.0 for s in savings),
           f"savings on {len(savings)} held-out days: {savings}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
