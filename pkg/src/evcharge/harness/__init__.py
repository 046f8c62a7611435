"""Training, evaluation, baselines and the exact oracle."""

from .evaluate import DayResult, EvalReport, cost_savings, evaluate, evaluate_day, solar_utilization
from .oracle import OracleResult, dp_oracle, exhaustive_oracle
from .policies import (
    DQNPolicy,
    MeteredReplay,
    OraclePolicy,
    Policy,
    RandomPolicy,
    SolarGreedy,
    TariffGreedy,
    make_policy,
)
from .train import TrainConfig, TrainResult, epsilon_at, train
from .report import day_series, grid_import, tou_grid_energy, write_report
