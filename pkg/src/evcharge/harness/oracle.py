"""Exact optimal action sequences for a single day.

With a charge-only battery the SoC and cumulative EV energy after any
action prefix depend only on how many charges it contains, so the episode
collapses to a DP over (slot, charges taken). The exhaustive search is kept
as an independent check for short horizons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import HouseholdDay
from ..environment import (
    CHARGE,
    IDLE,
    EnvConfig,
    EnvState,
    EpisodeConfig,
    charging_power,
    initial_state,
    transition,
)

MAX_EXHAUSTIVE_HORIZON = 20


@dataclass(frozen=True)
class OracleResult:
    actions: tuple[int, ...]
    total_reward: float


def charge_ladder(config: EpisodeConfig, n: int) -> list[tuple[float, float]]:
    """(ev_run, soc) after 0..n charges."""
    battery = config.battery
    ev_run, soc = 0.0, config.soc_start
    ladder = [(ev_run, soc)]
    for _ in range(n):
        p = charging_power(battery, soc)
        ev_run += p
        soc = min(soc + battery.soc_gain(p), battery.soc_max)
        ladder.append((ev_run, soc))
    return ladder


def _episode(day: HouseholdDay | EpisodeConfig, env_config: EnvConfig | None, horizon: int | None) -> EpisodeConfig:
    if isinstance(day, EpisodeConfig):
        config = day
        if horizon is not None and horizon != config.horizon:
            config = EpisodeConfig(config.day, config.env.with_horizon(horizon))
        return config
    if env_config is None:
        raise ValueError("env_config is required when passing a HouseholdDay")
    if horizon is not None:
        env_config = env_config.with_horizon(horizon)
    return EpisodeConfig(day, env_config)


def dp_oracle(day: HouseholdDay | EpisodeConfig, env_config: EnvConfig | None = None,
              horizon: int | None = None, method: str = "dp") -> OracleResult:
    """Undiscounted-return-maximising action sequence for one day.

    ``method="exhaustive"`` enumerates all ``2**horizon`` sequences and is
    limited to horizons of at most 20 slots.
    """
    config = _episode(day, env_config, horizon)
    if method == "exhaustive":
        return exhaustive_oracle(config)
    if method != "dp":
        raise ValueError(f"unknown oracle method {method!r}")

    T = config.horizon
    ladder = charge_ladder(config, T)
    # value[k] holds V[t + 1][k] while sweeping t backwards
    value = np.zeros(T + 2)
    choice = np.zeros((T, T + 1), dtype=np.int8)
    for t in range(T - 1, -1, -1):
        new_value = np.zeros(T + 2)
        for k in range(t + 1):
            ev_run, soc = ladder[k]
            state = EnvState(config._prices[t], config._pv[t], config._non_ev[t], ev_run, soc, t)
            _, r_idle, _, _ = transition(state, IDLE, config)
            _, r_charge, _, _ = transition(state, CHARGE, config)
            idle = r_idle.total + value[k]
            charge = r_charge.total + value[k + 1]
            if charge > idle:
                new_value[k], choice[t, k] = charge, CHARGE
            else:
                new_value[k], choice[t, k] = idle, IDLE
        value = new_value

    actions = []
    k = 0
    for t in range(T):
        a = int(choice[t, k])
        actions.append(a)
        k += a
    return OracleResult(tuple(actions), float(value[0]))


def exhaustive_oracle(config: EpisodeConfig) -> OracleResult:
    """Depth-first enumeration of every action sequence through the environment."""
    T = config.horizon
    if T > MAX_EXHAUSTIVE_HORIZON:
        raise ValueError(f"exhaustive search limited to horizon <= {MAX_EXHAUSTIVE_HORIZON}, got {T}")

    best_total = -np.inf
    best_actions: tuple[int, ...] = ()

    def search(state: EnvState, prefix: tuple[int, ...], total: float) -> None:
        nonlocal best_total, best_actions
        for a in (IDLE, CHARGE):
            nxt, rewards, done, _ = transition(state, a, config)
            seq = prefix + (a,)
            if done:
                if total + rewards.total > best_total:
                    best_total, best_actions = total + rewards.total, seq
            else:
                search(nxt, seq, total + rewards.total)

    search(initial_state(config), (), 0.0)
    return OracleResult(best_actions, float(best_total))


def enumerate_returns(config: EpisodeConfig) -> np.ndarray:
    """Return of every one of the ``2**horizon`` sequences, indexed by bitmask (slot 0 = MSB)."""
    T = config.horizon
    if T > MAX_EXHAUSTIVE_HORIZON:
        raise ValueError(f"enumeration limited to horizon <= {MAX_EXHAUSTIVE_HORIZON}")
    out = np.empty(2 ** T)
    for mask in range(2 ** T):
        state = initial_state(config)
        total = 0.0
        for t in range(T):
            a = (mask >> (T - 1 - t)) & 1
            state, rewards, _, _ = transition(state, a, config)
            total += rewards.total
        out[mask] = total
    return out
