import datetime as dt

import numpy as np
import pytest

from evcharge.data import HouseholdDay, solar_evening_profile, synthesize_dataset
from evcharge.environment import EnvConfig


def make_day(pv=0.0, non_ev=0.0, ev=0.0, date=dt.date(2018, 4, 22)) -> HouseholdDay:
    """Day whose series are scalars broadcast to 96 slots, or explicit vectors."""
    full = lambda v: np.broadcast_to(np.asarray(v, dtype=float), (96,)).copy()
    return HouseholdDay(date, full(pv), full(non_ev), full(ev))


@pytest.fixture(scope="session")
def small_dataset():
    return synthesize_dataset(8, seed=3, profile=solar_evening_profile(), test_fraction=0.25)


@pytest.fixture(scope="session")
def env_config(small_dataset):
    return EnvConfig.from_dataset(small_dataset)


def toy_env(flex_index=None, cost_q=(0.0, 0.01, 0.02), **kw):
    from evcharge.flexibility import FlexibilityProfile
    from evcharge.tariff import CostQuantiles

    index = np.linspace(0, 1, 96) if flex_index is None else flex_index
    return EnvConfig(FlexibilityProfile.from_index(index), CostQuantiles(*cost_q), **kw)


def random_toy_day(rng: np.random.Generator, date=dt.date(2018, 6, 1)) -> HouseholdDay:
    """Small random day whose EV demand fits a short horizon."""
    pv = np.where(rng.random(96) < 0.5, rng.uniform(0, 5, 96), 0.0)
    non_ev = rng.uniform(0.1, 3, 96)
    ev = np.zeros(96)
    ev[rng.choice(12, size=rng.integers(1, 6), replace=False)] = 3.3
    return HouseholdDay(date, pv, non_ev, ev)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
