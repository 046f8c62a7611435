"""Greedy rollouts on held-out days and the cost / solar metrics."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from ..data import Dataset, HouseholdDay, SLOTS_PER_DAY, daily_ev_demand
from ..environment import ChargingEnv, EnvConfig, EpisodeConfig
from ..tariff import day_costs
from .policies import MeteredReplay, Policy

SOLAR_MODES = ("ev-only", "net-of-load")


def solar_utilization(p_ev: np.ndarray, pv: np.ndarray, non_ev: np.ndarray | None = None,
                      mode: str = "ev-only") -> float:
    """Percent of EV charging energy covered by concurrent PV (NaN when nothing was charged).

    ``ev-only`` compares PV with the EV load alone; ``net-of-load`` first
    serves the non-EV load from PV.
    """
    p_ev = np.asarray(p_ev, dtype=float)
    total = float(p_ev.sum())
    if total <= 0:
        return math.nan
    if mode == "ev-only":
        available = np.asarray(pv, dtype=float)
    elif mode == "net-of-load":
        if non_ev is None:
            raise ValueError("net-of-load mode needs the non-EV load")
        available = np.clip(np.asarray(pv, dtype=float) - np.asarray(non_ev, dtype=float), 0.0, None)
    else:
        raise ValueError(f"unknown solar utilization mode {mode!r}")
    return 100.0 * float(np.minimum(p_ev, available).sum()) / total


def cost_savings(metered_cost: float, policy_cost: float) -> float:
    """Percent saving relative to the metered bill; NaN when the bill is not positive."""
    if metered_cost <= 0:
        return math.nan
    return 100.0 * (metered_cost - policy_cost) / metered_cost


@dataclass
class DayResult:
    date: dt.date
    daily_ev_demand: float
    cost_savings_pct: float
    solar_utilization_pct: float
    total_reward: float
    metered_cost: float
    policy_cost: float
    energy_ratio: float
    flag: str = ""

    def to_dict(self) -> dict:
        out = asdict(self)
        out["date"] = self.date.isoformat()
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in out.items()}


@dataclass
class Rollout:
    day: HouseholdDay
    trajectory: np.ndarray
    p_ev: np.ndarray


@dataclass
class EvalReport:
    policy: str
    rows: list[DayResult] = field(default_factory=list)

    @staticmethod
    def _mean(values) -> float:
        vals = [v for v in values if not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def aggregate(self) -> dict:
        return {
            "daily_ev_demand": self._mean(r.daily_ev_demand for r in self.rows),
            "cost_savings_pct": self._mean(r.cost_savings_pct for r in self.rows),
            "solar_utilization_pct": self._mean(r.solar_utilization_pct for r in self.rows),
            "total_reward": self._mean(r.total_reward for r in self.rows),
        }

    def to_dict(self) -> dict:
        agg = {k: (None if math.isnan(v) else v) for k, v in self.aggregate.items()}
        return {"policy": self.policy, "rows": [r.to_dict() for r in self.rows], "aggregate": agg}


def rollout(policy: Policy, config: EpisodeConfig) -> ChargingEnv:
    env = ChargingEnv(config)
    policy.reset(config)
    state = env.state
    while not env.done:
        state, _, _, _ = env.step(policy.act(state))
    return env


def evaluate_day(policy: Policy, day: HouseholdDay, env_config: EnvConfig,
                 solar_mode: str = "ev-only") -> tuple[DayResult, Rollout]:
    config = EpisodeConfig(day, env_config)
    env = rollout(policy, config)
    traj = env.trajectory_array()
    if isinstance(policy, MeteredReplay):
        p_ev = np.array(day.ev_metered, dtype=float)
    else:
        p_ev = np.zeros(SLOTS_PER_DAY)
        p_ev[: len(traj)] = traj[:, 5]

    metered_cost = float(day_costs(env_config.tariff, day).sum())
    policy_cost = float(day_costs(env_config.tariff, day, p_ev).sum())
    demand = daily_ev_demand(day)
    flag = ""
    if metered_cost <= 0:
        flag = "metered cost not positive; savings undefined"
    elif p_ev.sum() <= 0:
        flag = "no charging; solar utilization not applicable"
    row = DayResult(
        date=day.date,
        daily_ev_demand=demand,
        cost_savings_pct=cost_savings(metered_cost, policy_cost),
        solar_utilization_pct=solar_utilization(p_ev, day.pv, day.non_ev, solar_mode),
        total_reward=env.episode_reward,
        metered_cost=metered_cost,
        policy_cost=policy_cost,
        energy_ratio=float(p_ev.sum() / demand) if demand > 0 else math.nan,
        flag=flag,
    )
    return row, Rollout(day, traj, p_ev)


def evaluate(policy: Policy, days: Dataset | Iterable[HouseholdDay], env_config: EnvConfig,
             solar_mode: str = "ev-only", return_rollouts: bool = False):
    """Roll ``policy`` greedily over each test day and score it.

    A ``Dataset`` contributes its test partition; any other iterable is
    used as given.
    """
    if isinstance(days, Dataset):
        train = {d.date for d in days.train_days}
        days = days.test_days
        if any(d.date in train for d in days):
            raise ValueError("test days overlap training days")
    report = EvalReport(policy.name)
    rollouts = []
    for day in days:
        row, ro = evaluate_day(policy, day, env_config, solar_mode)
        report.rows.append(row)
        rollouts.append(ro)
    return (report, rollouts) if return_rollouts else report
