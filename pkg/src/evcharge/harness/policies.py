"""Decision rules that can be rolled out through the environment."""

from __future__ import annotations

import numpy as np

from ..agent import FeatureScaler, QNetwork, greedy_action
from ..environment import CHARGE, IDLE, EnvState, EpisodeConfig, charging_power
from ..flexibility import CHARGING_THRESHOLD_KW
from .oracle import dp_oracle


class Policy:
    """Base class: ``reset`` is called once per episode, then ``act`` per slot."""

    name = "policy"

    def reset(self, config: EpisodeConfig) -> None:
        self.config = config

    def act(self, state: EnvState) -> int:
        raise NotImplementedError

    def _fits_budget(self, state: EnvState) -> bool:
        p = charging_power(self.config.battery, state.soc)
        return state.ev_run + p <= self.config.budget


class DQNPolicy(Policy):
    """Greedy (epsilon = 0) action from a Q-network."""

    name = "dqn-greedy"

    def __init__(self, net: QNetwork):
        self.net = net

    def reset(self, config: EpisodeConfig) -> None:
        super().reset(config)
        self.scaler = FeatureScaler.for_episode(config)

    def act(self, state: EnvState) -> int:
        return greedy_action(self.net.forward(self.scaler(state)[None, :])[0])


class MeteredReplay(Policy):
    """Charges whenever the meter shows charging. Evaluation replays the metered
    power itself for cost and solar metrics; these actions only score rewards."""

    name = "metered-replay"

    def act(self, state: EnvState) -> int:
        return CHARGE if self.config.day.ev_metered[state.t] > CHARGING_THRESHOLD_KW else IDLE


class RandomPolicy(Policy):
    name = "random"

    def __init__(self, seed: int = 0, p_charge: float = 0.5):
        self.rng = np.random.default_rng(seed)
        self.p_charge = p_charge

    def act(self, state: EnvState) -> int:
        return int(self.rng.random() < self.p_charge)


class TariffGreedy(Policy):
    """Charges in the cheapest tariff band while the daily budget allows."""

    name = "tariff-greedy"

    def reset(self, config: EpisodeConfig) -> None:
        super().reset(config)
        self.cheapest = float(config.tariff.slot_prices.min())

    def act(self, state: EnvState) -> int:
        return int(state.price <= self.cheapest and self._fits_budget(state))


class SolarGreedy(Policy):
    """Charges whenever PV covers the charger level, within the daily budget."""

    name = "solar-greedy"

    def act(self, state: EnvState) -> int:
        p = charging_power(self.config.battery, state.soc)
        return int(state.pv >= p and self._fits_budget(state))


class OraclePolicy(Policy):
    """Replays the exact optimum computed by dynamic programming."""

    name = "dp-oracle"

    def reset(self, config: EpisodeConfig) -> None:
        super().reset(config)
        self.actions = dp_oracle(config).actions

    def act(self, state: EnvState) -> int:
        return self.actions[state.t]


POLICY_KINDS = {
    "metered-replay": MeteredReplay,
    "random": RandomPolicy,
    "tariff-greedy": TariffGreedy,
    "solar-greedy": SolarGreedy,
    "dp-oracle": OraclePolicy,
}


def make_policy(kind: str, **kwargs) -> Policy:
    if kind == "dqn-greedy":
        return DQNPolicy(kwargs["net"])
    try:
        return POLICY_KINDS[kind](**kwargs)
    except KeyError:
        raise ValueError(f"unknown policy kind {kind!r}") from None
