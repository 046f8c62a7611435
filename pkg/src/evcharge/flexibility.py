"""Per-slot charging-habit index learned from historical EV load."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import SLOTS_PER_DAY, Dataset
from .tariff import quantiles_of

CHARGING_THRESHOLD_KW = 0.1


@dataclass(frozen=True)
class FlexibilityProfile:
    """Share of historical days on which the EV was charging in each slot.

    ``q25``/``q50``/``q75`` are quantiles over the 96 index values and
    serve as the reward bands.
    """

    index: np.ndarray
    q25: float
    q50: float
    q75: float

    def __post_init__(self):
        index = np.array(self.index, dtype=float)
        if index.shape != (SLOTS_PER_DAY,):
            raise ValueError(f"index must have {SLOTS_PER_DAY} entries")
        if np.any(index < 0) or np.any(index > 1):
            raise ValueError("index values must lie in [0, 1]")
        if not self.q25 <= self.q50 <= self.q75:
            raise ValueError("quantiles out of order")
        index.setflags(write=False)
        object.__setattr__(self, "index", index)

    @classmethod
    def from_index(cls, index) -> "FlexibilityProfile":
        return cls(np.asarray(index, dtype=float), *quantiles_of(index))

    def to_json(self) -> dict:
        return {"index": self.index.tolist(), "q25": self.q25, "q50": self.q50, "q75": self.q75}

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "FlexibilityProfile":
        data = json.loads(Path(path).read_text())
        return cls(np.asarray(data["index"], dtype=float), data["q25"], data["q50"], data["q75"])


def build_flexibility_profile(dataset: Dataset, threshold_kw: float = CHARGING_THRESHOLD_KW) -> FlexibilityProfile:
    days = dataset.train_days
    if not days:
        raise ValueError("flexibility profile needs at least one training day")
    charging = np.array([d.ev_metered > threshold_kw for d in days])
    return FlexibilityProfile.from_index(charging.mean(axis=0))


def flex_at(profile: FlexibilityProfile, t: int) -> float:
    if not 0 <= t < SLOTS_PER_DAY:
        raise IndexError(f"slot {t} outside [0, {SLOTS_PER_DAY})")
    return float(profile.index[t])
