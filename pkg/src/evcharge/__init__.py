"""Solar-aware residential EV charging with deep Q-learning."""

from .data import Dataset, HouseholdDay, daily_ev_demand, ingest_csv, synthesize_dataset, synthesize_day
from .environment import BatterySpec, ChargingEnv, EnvConfig, EnvState, EpisodeConfig, RewardBreakdown, apply_action
from .flexibility import FlexibilityProfile, build_flexibility_profile, flex_at
from .tariff import AUSTIN_2018_SUMMER, CostQuantiles, TariffSchedule, cost_quantiles, price_at, step_cost

__version__ = "0.1.0"
