"""Time-of-use tariffs, per-slot electricity cost and cost quantiles."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import SLOTS_PER_DAY, SLOTS_PER_HOUR, Dataset, HouseholdDay

MINUTES_PER_DAY = 24 * 60
SLOT_MINUTES = 60 // SLOTS_PER_HOUR


class TariffError(ValueError):
    pass


def _parse_clock(text: str) -> int:
    try:
        hh, mm = text.strip().split(":")
        minutes = int(hh) * 60 + int(mm)
    except ValueError as exc:
        raise TariffError(f"bad clock time {text!r}, expected HH:MM") from exc
    if not 0 <= minutes <= MINUTES_PER_DAY or not 0 <= int(mm) < 60:
        raise TariffError(f"clock time out of range: {text!r}")
    return minutes


def _format_clock(minutes: int) -> str:
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


@dataclass(frozen=True)
class TariffBand:
    start_min: int
    end_min: int
    price: float
    name: str = ""


@dataclass(frozen=True)
class TariffSchedule:
    """Price bands that partition the day ``[00:00, 24:00)`` without gaps or overlap."""

    bands: tuple[TariffBand, ...]

    def __post_init__(self):
        bands = tuple(sorted(self.bands, key=lambda b: b.start_min))
        if not bands:
            raise TariffError("tariff needs at least one band")
        cursor = 0
        for band in bands:
            if band.price < 0 or not np.isfinite(band.price):
                raise TariffError(f"price must be finite and non-negative, got {band.price}")
            if band.end_min <= band.start_min:
                raise TariffError(f"empty or reversed band {_format_clock(band.start_min)}-{_format_clock(band.end_min)}")
            if band.start_min != cursor:
                kind = "overlap" if band.start_min < cursor else "gap"
                raise TariffError(f"tariff bands have a {kind} at {_format_clock(min(cursor, band.start_min))}")
            cursor = band.end_min
        if cursor != MINUTES_PER_DAY:
            raise TariffError(f"tariff bands stop at {_format_clock(cursor)}, must reach 24:00")
        object.__setattr__(self, "bands", bands)
        slot_prices = np.array([self._lookup(t * SLOT_MINUTES).price for t in range(SLOTS_PER_DAY)])
        slot_prices.setflags(write=False)
        object.__setattr__(self, "_slot_prices", slot_prices)

    def _lookup(self, minute: int) -> TariffBand:
        for band in self.bands:
            if band.start_min <= minute < band.end_min:
                return band
        raise AssertionError("unreachable: bands cover the day")

    def band_at(self, t: int) -> TariffBand:
        if not 0 <= t < SLOTS_PER_DAY:
            raise IndexError(f"slot {t} outside [0, {SLOTS_PER_DAY})")
        return self._lookup(t * SLOT_MINUTES)

    def price_at(self, t: int) -> float:
        return float(self._slot_prices[t])

    @property
    def slot_prices(self) -> np.ndarray:
        """96 prices, one per slot."""
        return self._slot_prices

    @property
    def max_price(self) -> float:
        return max(b.price for b in self.bands)

    def period_names(self) -> list[str]:
        """Distinct band labels in first-appearance order; unnamed bands are labelled by price."""
        names: list[str] = []
        for band in self.bands:
            label = self.label(band)
            if label not in names:
                names.append(label)
        return names

    @staticmethod
    def label(band: TariffBand) -> str:
        return band.name or f"{band.price:g}"

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> "TariffSchedule":
        bands = []
        for rec in records:
            try:
                bands.append(
                    TariffBand(
                        _parse_clock(rec["start"]),
                        _parse_clock(rec["end"]),
                        float(rec["price"]),
                        str(rec.get("name", "")),
                    )
                )
            except KeyError as exc:
                raise TariffError(f"tariff record missing field {exc}") from exc
        return cls(tuple(bands))

    def to_records(self) -> list[dict]:
        return [
            {"start": _format_clock(b.start_min), "end": _format_clock(b.end_min), "price": b.price, "name": b.name}
            for b in self.bands
        ]

    @classmethod
    def load(cls, path: str | Path) -> "TariffSchedule":
        data = json.loads(Path(path).read_text())
        if isinstance(data, Mapping):
            data = data.get("bands", data.get("tariff"))
        if not isinstance(data, list):
            raise TariffError(f"{path}: expected a list of tariff records")
        return cls.from_records(data)


# 2018 summer weekday ToU rates for Austin, Texas households ($/kWh)
AUSTIN_2018_SUMMER = TariffSchedule.from_records(
    [
        {"start": "00:00", "end": "06:00", "price": 0.01188, "name": "off-peak"},
        {"start": "06:00", "end": "14:00", "price": 0.06218, "name": "mid-peak"},
        {"start": "14:00", "end": "20:00", "price": 0.11003, "name": "on-peak"},
        {"start": "20:00", "end": "22:00", "price": 0.06218, "name": "mid-peak"},
        {"start": "22:00", "end": "24:00", "price": 0.01188, "name": "off-peak"},
    ]
)


def price_at(schedule: TariffSchedule, t: int) -> float:
    """Price ($/kWh) of the band containing the start of slot ``t``."""
    if not 0 <= t < SLOTS_PER_DAY:
        raise IndexError(f"slot {t} outside [0, {SLOTS_PER_DAY})")
    return schedule.price_at(t)


def step_cost(schedule: TariffSchedule, t: int, ev_action: int, p_ev: float, p_non_ev: float, p_pv: float) -> float:
    """Signed cost ($) of one slot; negative when the house exports."""
    return price_at(schedule, t) * (ev_action * p_ev + p_non_ev - p_pv) / SLOTS_PER_HOUR


def day_costs(schedule: TariffSchedule, day: HouseholdDay, p_ev: np.ndarray | None = None) -> np.ndarray:
    """Per-slot cost of a day, with the metered EV load unless ``p_ev`` is given."""
    ev = day.ev_metered if p_ev is None else np.asarray(p_ev, dtype=float)
    return np.array([step_cost(schedule, t, 1, ev[t], day.non_ev[t], day.pv[t]) for t in range(SLOTS_PER_DAY)])


@dataclass(frozen=True)
class CostQuantiles:
    q25: float
    q50: float
    q75: float

    def __post_init__(self):
        if not self.q25 <= self.q50 <= self.q75:
            raise ValueError(f"quantiles out of order: {self}")


def quantiles_of(values: Sequence[float] | np.ndarray) -> tuple[float, float, float]:
    """25/50/75th percentiles with linear interpolation between closest ranks."""
    q = np.percentile(np.asarray(values, dtype=float), [25, 50, 75], method="linear")
    return float(q[0]), float(q[1]), float(q[2])


def cost_quantiles_from_values(costs: Sequence[float] | np.ndarray, exclude_zero: bool = True) -> CostQuantiles:
    costs = np.asarray(costs, dtype=float)
    keep = costs > 0 if exclude_zero else costs >= 0
    kept = costs[keep]
    if kept.size == 0:
        raise ValueError("no positive slot costs to form quantiles from")
    return CostQuantiles(*quantiles_of(kept))


def cost_quantiles(dataset: Dataset, schedule: TariffSchedule, exclude_zero: bool = True) -> CostQuantiles:
    """Quantiles of metered per-slot costs pooled over every training slot.

    Negative-cost (export) slots are dropped; so are zero-cost slots unless
    ``exclude_zero`` is False.
    """
    days = dataset.train_days
    if not days:
        raise ValueError("cost quantiles need at least one training day")
    return cost_quantiles_from_values(np.concatenate([day_costs(schedule, d) for d in days]), exclude_zero)
