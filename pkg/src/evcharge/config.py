"""Run configuration files (JSON, or TOML where the interpreter ships tomllib).

Layout::

    {
      "data":  {"test_fraction": 0.25, "column_map": "...", "gap_fill": false},
      "env":   {"battery": {...}, "weights": [1, 1, 1, 1], "budget_factor": 1.05,
                "tariff": [{"start": "00:00", "end": "06:00", "price": 0.01188}, ...],
                "exclude_zero_cost": true, "pv_cap_kw": 10, "load_cap_kw": 10,
                "solar_mode": "ev-only"},
      "train": {"epochs": 1000, "gamma": 0.99, ...}
    }

Every section and key is optional.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .data import Dataset
from .environment import BatterySpec, EnvConfig
from .harness.evaluate import SOLAR_MODES
from .harness.train import TrainConfig
from .tariff import AUSTIN_2018_SUMMER, TariffError, TariffSchedule


class ConfigError(ValueError):
    pass


_ENV_KEYS = {"battery", "weights", "budget_factor", "tariff", "exclude_zero_cost", "pv_cap_kw", "load_cap_kw",
             "solar_mode", "horizon"}
_DATA_KEYS = {"test_fraction", "column_map", "gap_fill"}


@dataclass
class RunConfig:
    data: dict[str, Any] = field(default_factory=dict)
    env: dict[str, Any] = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def test_fraction(self) -> float:
        return float(self.data.get("test_fraction", 0.25))

    @property
    def solar_mode(self) -> str:
        return self.env.get("solar_mode", "ev-only")

    def tariff(self) -> TariffSchedule:
        source = self.env.get("tariff")
        if source is None:
            return AUSTIN_2018_SUMMER
        try:
            if isinstance(source, str):
                return TariffSchedule.load(source)
            return TariffSchedule.from_records(source)
        except (TariffError, OSError) as exc:
            raise ConfigError(f"bad tariff: {exc}") from exc

    def env_config(self, dataset: Dataset) -> EnvConfig:
        try:
            battery = BatterySpec(**self.env.get("battery", {}))
            kwargs = {k: self.env[k] for k in ("budget_factor", "pv_cap_kw", "load_cap_kw", "horizon") if k in self.env}
            if "weights" in self.env:
                kwargs["weights"] = tuple(float(w) for w in self.env["weights"])
            return EnvConfig.from_dataset(
                dataset,
                tariff=self.tariff(),
                exclude_zero_cost=bool(self.env.get("exclude_zero_cost", True)),
                battery=battery,
                **kwargs,
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {"data": self.data, "env": self.env, "train": self.train.to_dict()}

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        unknown = set(raw) - {"data", "env", "train"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        data = dict(raw.get("data", {}))
        env = dict(raw.get("env", {}))
        if set(data) - _DATA_KEYS:
            raise ConfigError(f"unknown data options: {sorted(set(data) - _DATA_KEYS)}")
        if set(env) - _ENV_KEYS:
            raise ConfigError(f"unknown env options: {sorted(set(env) - _ENV_KEYS)}")
        if env.get("solar_mode", "ev-only") not in SOLAR_MODES:
            raise ConfigError(f"solar_mode must be one of {SOLAR_MODES}")
        try:
            train = TrainConfig.from_dict(dict(raw.get("train", {})))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad training options: {exc}") from exc
        return cls(data, env, train)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            raise ConfigError("TOML configs need Python 3.11+; use JSON instead") from None
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return RunConfig.from_dict(raw)
