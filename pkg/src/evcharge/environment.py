"""Daily EV charging MDP: battery dynamics, rewards and the episode loop.

One episode replays one household day. At every 15-minute slot the agent
either charges (action 1) at the charger level allowed by the current state
of charge, or stays idle (action 0). Transitions are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .data import SLOTS_PER_DAY, SLOTS_PER_HOUR, Dataset, HouseholdDay, daily_ev_demand
from .flexibility import FlexibilityProfile, build_flexibility_profile
from .tariff import AUSTIN_2018_SUMMER, CostQuantiles, TariffSchedule, cost_quantiles

IDLE, CHARGE = 0, 1
BUDGET_FACTOR = 1.05


class EpisodeFinished(RuntimeError):
    """Raised when acting on an episode that already reached its horizon."""


@dataclass(frozen=True)
class BatterySpec:
    capacity_kwh: float = 24.0
    efficiency: float = 0.905
    soc_min: float = 0.1
    soc_max: float = 1.0
    p_high: float = 3.3
    p_low: float = 1.5
    taper_soc: float = 0.9

    def __post_init__(self):
        if not 0 <= self.soc_min < self.taper_soc < self.soc_max <= 1:
            raise ValueError("need 0 <= soc_min < taper_soc < soc_max <= 1")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must be in (0, 1]")
        if not 0 < self.p_low < self.p_high:
            raise ValueError("need 0 < p_low < p_high")
        if self.capacity_kwh <= 0:
            raise ValueError("capacity must be positive")

    def soc_gain(self, p_ev: float) -> float:
        return self.efficiency * p_ev / (SLOTS_PER_HOUR * self.capacity_kwh)


def starting_soc(battery: BatterySpec, p_day_ev: float) -> float:
    """State of charge at midnight such that the metered energy refills the pack."""
    if p_day_ev < 0:
        raise ValueError("daily EV demand must be non-negative")
    return max(1.0 - battery.soc_gain(p_day_ev), battery.soc_min)


def charging_power(battery: BatterySpec, soc: float) -> float:
    return battery.p_high if soc <= battery.taper_soc else battery.p_low


# --------------------------------------------------------------------------
# rewards


def reward_r1(action: int, pv: float, ev_run_after: float, p_day_ev: float, budget_factor: float = BUDGET_FACTOR) -> float:
    """Daily-energy reward: favour charging within budget, especially under PV."""
    within = ev_run_after <= budget_factor * p_day_ev
    if action:
        if not within:
            return -10.0
        return 3.0 if pv > 0 else 2.0
    return -0.25 if within else 0.0


def reward_r2(action: int, flex_value: float, q25: float, q50: float, q75: float) -> float:
    """Habit reward: charging in slots the user historically charges in pays more."""
    if not action:
        return 0.0
    if flex_value <= q25:
        return -2.0
    if flex_value <= q50:
        return -1.0
    if flex_value <= q75:
        return 1.0
    return 2.0


def reward_r3(action: int, cost: float, q25: float, q50: float, q75: float) -> float:
    """Cost reward: cheaper slots pay more."""
    if not action:
        return 0.0
    if cost <= q25:
        return 2.0
    if cost <= q50:
        return 1.0
    if cost <= q75:
        return -1.0
    return -2.0


def reward_r4(action: int, soc_after: float) -> float:
    return -10.0 if action and soc_after >= 1.0 else 0.0


DEFAULT_WEIGHTS = (1.0, 1.0, 1.0, 1.0)


def total_reward(r1: float, r2: float, r3: float, r4: float, weights: Sequence[float] = DEFAULT_WEIGHTS) -> float:
    d1, d2, d3, d4 = weights
    return d1 * r1 + d2 * r2 + d3 * r3 + d4 * r4


class RewardBreakdown(NamedTuple):
    r1: float
    r2: float
    r3: float
    r4: float
    total: float
    weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS

    @classmethod
    def combine(cls, r1, r2, r3, r4, weights=DEFAULT_WEIGHTS) -> "RewardBreakdown":
        return cls(r1, r2, r3, r4, total_reward(r1, r2, r3, r4, weights), tuple(weights))


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class EnvConfig:
    """Settings shared by every episode: tariff, battery, reward thresholds."""

    flex: FlexibilityProfile
    cost_q: CostQuantiles
    tariff: TariffSchedule = AUSTIN_2018_SUMMER
    battery: BatterySpec = field(default_factory=BatterySpec)
    weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS
    budget_factor: float = BUDGET_FACTOR
    horizon: int = SLOTS_PER_DAY
    pv_cap_kw: float = 10.0
    load_cap_kw: float = 10.0

    def __post_init__(self):
        if not 1 <= self.horizon <= SLOTS_PER_DAY:
            raise ValueError(f"horizon must be in [1, {SLOTS_PER_DAY}]")
        if len(self.weights) != 4:
            raise ValueError("need four reward weights")

    @classmethod
    def from_dataset(
        cls,
        dataset: Dataset,
        tariff: TariffSchedule = AUSTIN_2018_SUMMER,
        exclude_zero_cost: bool = True,
        **kwargs,
    ) -> "EnvConfig":
        """Fit the habit index and cost quantiles on the training partition."""
        return cls(
            flex=build_flexibility_profile(dataset),
            cost_q=cost_quantiles(dataset, tariff, exclude_zero=exclude_zero_cost),
            tariff=tariff,
            **kwargs,
        )

    def with_horizon(self, horizon: int) -> "EnvConfig":
        return replace(self, horizon=horizon)


@dataclass(frozen=True)
class EpisodeConfig:
    """One day bound to the shared environment settings."""

    day: HouseholdDay
    env: EnvConfig
    p_day_ev: float = field(init=False)
    soc_start: float = field(init=False)

    def __post_init__(self):
        p_day = daily_ev_demand(self.day)
        object.__setattr__(self, "p_day_ev", p_day)
        object.__setattr__(self, "soc_start", starting_soc(self.env.battery, p_day))
        # plain lists: scalar indexing is far cheaper than on ndarrays in the step loop
        object.__setattr__(self, "_prices", self.env.tariff.slot_prices.tolist())
        object.__setattr__(self, "_pv", self.day.pv.tolist())
        object.__setattr__(self, "_non_ev", self.day.non_ev.tolist())
        object.__setattr__(self, "_flex", self.env.flex.index.tolist())

    @property
    def battery(self) -> BatterySpec:
        return self.env.battery

    @property
    def tariff(self) -> TariffSchedule:
        return self.env.tariff

    @property
    def flex(self) -> FlexibilityProfile:
        return self.env.flex

    @property
    def cost_q(self) -> CostQuantiles:
        return self.env.cost_q

    @property
    def horizon(self) -> int:
        return self.env.horizon

    @property
    def budget(self) -> float:
        return self.env.budget_factor * self.p_day_ev


class EnvState(NamedTuple):
    price: float
    pv: float
    non_ev: float
    ev_run: float
    soc: float
    t: int


class StepInfo(NamedTuple):
    p_ev: float
    cost: float
    soc_unclamped: float


def initial_state(config: EpisodeConfig) -> EnvState:
    return _state_at(config, 0, 0.0, config.soc_start)


def _state_at(config: EpisodeConfig, t: int, ev_run: float, soc: float) -> EnvState:
    if t >= config.horizon:
        return EnvState(0.0, 0.0, 0.0, ev_run, soc, t)
    return EnvState(config._prices[t], config._pv[t], config._non_ev[t], ev_run, soc, t)


def transition(state: EnvState, action: int, config: EpisodeConfig) -> tuple[EnvState, RewardBreakdown, bool, StepInfo]:
    """``apply_action`` plus the charged power and slot cost of the step."""
    t = state.t
    if t >= config.horizon:
        raise EpisodeFinished(f"episode ended at slot {config.horizon}")
    if action not in (IDLE, CHARGE):
        raise ValueError(f"action must be 0 or 1, got {action!r}")
    battery = config.env.battery

    p_ev = charging_power(battery, state.soc) if action else 0.0
    soc_after = state.soc + battery.soc_gain(p_ev) if action else state.soc
    ev_run_after = state.ev_run + p_ev
    cost = state.price * (p_ev + state.non_ev - state.pv) / SLOTS_PER_HOUR

    q = config.env.flex
    c = config.env.cost_q
    rewards = RewardBreakdown.combine(
        reward_r1(action, state.pv, ev_run_after, config.p_day_ev, config.env.budget_factor),
        reward_r2(action, config._flex[t], q.q25, q.q50, q.q75),
        reward_r3(action, cost, c.q25, c.q50, c.q75),
        reward_r4(action, soc_after),
        config.env.weights,
    )
    soc_next = min(soc_after, battery.soc_max)
    nxt = _state_at(config, t + 1, ev_run_after, soc_next)
    return nxt, rewards, t + 1 >= config.horizon, StepInfo(p_ev, cost, soc_after)


def apply_action(state: EnvState, action: int, config: EpisodeConfig) -> tuple[EnvState, RewardBreakdown, bool]:
    """Advance one slot. Rewards are judged on the pre-transition state, with
    the budget and battery checks using the post-charge energy and SoC."""
    nxt, rewards, done, _ = transition(state, action, config)
    return nxt, rewards, done


# --------------------------------------------------------------------------
# stateful episode wrapper


TRAJECTORY_COLUMNS = (
    "t", "price", "pv", "non_ev", "action", "p_ev", "soc", "r1", "r2", "r3", "r4", "R", "cost",
)


class ChargingEnv:
    """Mutable single-episode wrapper with a reset/step interface.

    Records a trajectory row per step (pre-transition state, action and
    rewards) for later reporting.
    """

    def __init__(self, config: EpisodeConfig):
        self.config = config
        self.reset()

    @classmethod
    def for_day(cls, day: HouseholdDay, env: EnvConfig) -> "ChargingEnv":
        return cls(EpisodeConfig(day, env))

    def reset(self) -> EnvState:
        self.state = initial_state(self.config)
        self.done = False
        self.trajectory: list[tuple] = []
        self.episode_reward = 0.0
        return self.state

    def step(self, action: int) -> tuple[EnvState, float, bool, StepInfo]:
        if self.done:
            raise EpisodeFinished("call reset() before stepping a finished episode")
        s = self.state
        nxt, rewards, done, info = transition(s, action, self.config)
        self.trajectory.append(
            (s.t, s.price, s.pv, s.non_ev, action, info.p_ev, s.soc, *rewards[:4], rewards.total, info.cost)
        )
        self.state, self.done = nxt, done
        self.episode_reward += rewards.total
        return nxt, rewards.total, done, info

    def rollout(self, actions: Sequence[int]) -> float:
        self.reset()
        for a in actions:
            self.step(int(a))
        return self.episode_reward

    def trajectory_array(self) -> np.ndarray:
        return np.array(self.trajectory, dtype=float).reshape(-1, len(TRAJECTORY_COLUMNS))
