"""Household time series: CSV ingestion, synthetic days, daily episodes.

Every series is stored at 15-minute resolution. Slot ``t`` covers the
minutes ``[15 t, 15 (t + 1))`` after local midnight and holds the average
power over that window in kW, so dividing a sum of slots by 4 gives kWh.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SLOTS_PER_DAY = 96
SLOTS_PER_HOUR = 4

CANONICAL_COLUMNS = ("timestamp", "pv_kw", "non_ev_kw", "total_kw", "ev_kw")


class DataError(ValueError):
    """Raised when input data cannot be turned into complete household days."""


def _frozen_series(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.shape != (SLOTS_PER_DAY,):
        raise DataError(f"{name} must have {SLOTS_PER_DAY} slots, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    if np.any(arr < 0):
        raise DataError(f"{name} contains negative power values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HouseholdDay:
    """One day of PV generation, non-EV load and metered EV load (kW per slot)."""

    date: dt.date
    pv: np.ndarray
    non_ev: np.ndarray
    ev_metered: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pv", _frozen_series(self.pv, "pv"))
        object.__setattr__(self, "non_ev", _frozen_series(self.non_ev, "non_ev"))
        object.__setattr__(self, "ev_metered", _frozen_series(self.ev_metered, "ev_metered"))

    def scaled_ev(self, factor: float) -> "HouseholdDay":
        return HouseholdDay(self.date, self.pv, self.non_ev, self.ev_metered * factor)


@dataclass(frozen=True)
class Dataset:
    """Ordered, date-unique collection of days with a train/test partition.

    Days whose date is in ``test_dates`` form the test partition; every
    other day is a training day.
    """

    days: tuple[HouseholdDay, ...]
    test_dates: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        days = tuple(sorted(self.days, key=lambda d: d.date))
        dates = [d.date for d in days]
        if len(set(dates)) != len(dates):
            raise DataError("duplicate dates in dataset")
        unknown = set(self.test_dates) - set(dates)
        if unknown:
            raise DataError(f"test dates not present in dataset: {sorted(unknown)}")
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "test_dates", frozenset(self.test_dates))

    def __len__(self) -> int:
        return len(self.days)

    def __iter__(self):
        return iter(self.days)

    @property
    def dates(self) -> list[dt.date]:
        return [d.date for d in self.days]

    @property
    def train_days(self) -> list[HouseholdDay]:
        return [d for d in self.days if d.date not in self.test_dates]

    @property
    def test_days(self) -> list[HouseholdDay]:
        return [d for d in self.days if d.date in self.test_dates]

    def day(self, date: dt.date | str) -> HouseholdDay:
        if isinstance(date, str):
            date = dt.date.fromisoformat(date)
        for d in self.days:
            if d.date == date:
                return d
        raise KeyError(date)

    def split(self, test_fraction: float = 0.25) -> "Dataset":
        """Chronological split: the last ``test_fraction`` of days become test days."""
        if not 0 <= test_fraction < 1:
            raise ValueError("test_fraction must be in [0, 1)")
        n_test = int(round(len(self.days) * test_fraction))
        test = [d.date for d in self.days[len(self.days) - n_test:]] if n_test else []
        return Dataset(self.days, frozenset(test))

    def only_train(self) -> "Dataset":
        return Dataset(tuple(self.train_days))


def daily_ev_demand(day: HouseholdDay) -> float:
    """Sum of the metered EV slot powers (kW summed over slots; /4 gives kWh)."""
    return float(np.sum(day.ev_metered))


# --------------------------------------------------------------------------
# CSV ingestion


def parse_column_map(column_map: str | Mapping[str, str] | None) -> dict[str, str]:
    """Parse ``"timestamp=local_15min,pv_kw=solar"`` into a canonical-name map.

    Canonical names not mentioned map to themselves.
    """
    mapping = {name: name for name in ("timestamp", "pv_kw", "non_ev_kw", "ev_kw")}
    if column_map is None:
        return mapping
    if isinstance(column_map, str):
        items = {}
        for part in filter(None, (p.strip() for p in column_map.split(","))):
            if "=" not in part:
                raise DataError(f"bad column mapping entry {part!r}, expected canonical=column")
            key, value = (s.strip() for s in part.split("=", 1))
            items[key] = value
        column_map = items
    for key in column_map:
        if key not in CANONICAL_COLUMNS:
            raise DataError(f"unknown canonical column {key!r}")
    mapping.update(column_map)
    if "total_kw" in column_map and "non_ev_kw" not in column_map:
        del mapping["non_ev_kw"]
    return mapping


def _fill_short_gaps(frame: pd.DataFrame, max_gap: int) -> pd.DataFrame | None:
    """Linearly interpolate interior runs of at most ``max_gap`` missing slots."""
    missing = frame.isna().any(axis=1).to_numpy()
    if not missing.any():
        return frame
    if missing[0] or missing[-1]:
        return None
    run = 0
    for m in missing:
        run = run + 1 if m else 0
        if run > max_gap:
            return None
    return frame.interpolate(method="linear", limit_area="inside")


def ingest_csv(
    path: str | Path,
    column_map: str | Mapping[str, str] | None = None,
    gap_fill: bool = False,
    max_gap_slots: int = 2,
) -> Dataset:
    """Read a household CSV and return its complete 96-slot days.

    Rows are averaged into 15-minute slots keyed by their start timestamp.
    If the map names ``total_kw`` instead of ``non_ev_kw`` the non-EV load
    is ``total - ev``. Rows with a negative power value are rejected.
    """
    cols = parse_column_map(column_map)
    try:
        raw = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc

    missing = [c for c in cols.values() if c not in raw.columns]
    if missing:
        raise DataError(f"columns not found in {path}: {missing}")

    ts = pd.to_datetime(raw[cols["timestamp"]], errors="coerce")
    if getattr(ts.dt, "tz", None) is not None:
        ts = ts.dt.tz_localize(None)
    frame = pd.DataFrame({"timestamp": ts})
    frame["pv"] = pd.to_numeric(raw[cols["pv_kw"]], errors="coerce")
    frame["ev"] = pd.to_numeric(raw[cols["ev_kw"]], errors="coerce")
    if "non_ev_kw" in cols:
        frame["non_ev"] = pd.to_numeric(raw[cols["non_ev_kw"]], errors="coerce")
    else:
        frame["non_ev"] = pd.to_numeric(raw[cols["total_kw"]], errors="coerce") - frame["ev"]

    bad = frame.isna().any(axis=1)
    if bad.all():
        raise DataError(f"no parseable rows in {path}")
    if bad.any():
        logger.warning("dropped %d unparseable rows", int(bad.sum()))
    frame = frame[~bad]
    negative = (frame[["pv", "ev", "non_ev"]] < 0).any(axis=1)
    if negative.any():
        logger.warning("rejected %d rows with negative power values", int(negative.sum()))
        frame = frame[~negative]

    frame = frame.set_index("timestamp").sort_index()
    slots = frame.resample("15min").mean()

    days = []
    for date, group in slots.groupby(slots.index.date):
        full = pd.date_range(pd.Timestamp(date), periods=SLOTS_PER_DAY, freq="15min")
        group = group.reindex(full)
        if group.isna().any(axis=None):
            n_missing = int(group.isna().any(axis=1).sum())
            filled = _fill_short_gaps(group, max_gap_slots) if gap_fill else None
            if filled is None:
                logger.warning("dropping %s: %d of %d slots missing", date, n_missing, SLOTS_PER_DAY)
                continue
            group = filled
        days.append(
            HouseholdDay(
                date=date,
                pv=group["pv"].to_numpy(),
                non_ev=group["non_ev"].to_numpy(),
                ev_metered=group["ev"].to_numpy(),
            )
        )
    if not days:
        raise DataError(f"no complete days in {path}")
    return Dataset(tuple(days))


def to_frame(dataset: Dataset | Iterable[HouseholdDay]) -> pd.DataFrame:
    frames = []
    for day in dataset:
        frames.append(
            pd.DataFrame(
                {
                    "timestamp": pd.date_range(pd.Timestamp(day.date), periods=SLOTS_PER_DAY, freq="15min"),
                    "pv_kw": day.pv,
                    "non_ev_kw": day.non_ev,
                    "ev_kw": day.ev_metered,
                }
            )
        )
    if not frames:
        return pd.DataFrame(columns=["timestamp", "pv_kw", "non_ev_kw", "ev_kw"])
    out = pd.concat(frames, ignore_index=True)
    out["timestamp"] = out["timestamp"].dt.strftime("%Y-%m-%dT%H:%M:%S")
    return out


def write_csv(dataset: Dataset | Iterable[HouseholdDay], path: str | Path) -> Path:
    """Write days in the ingestion schema; ``ingest_csv`` reads it back unchanged."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    to_frame(dataset).to_csv(path, index=False, float_format="%.17g")
    return path


# --------------------------------------------------------------------------
# Synthetic days


@dataclass(frozen=True)
class SessionSpec:
    """A contiguous EV charging session drawn once per day with some probability."""

    start_hour_mean: float = 18.5
    start_hour_std: float = 1.0
    energy_kwh_mean: float = 8.0
    energy_kwh_std: float = 2.0
    probability: float = 1.0
    min_energy_kwh: float = 1.0


@dataclass(frozen=True)
class SynthProfile:
    pv_peak_kw: float = 6.0
    pv_start_hour: float = 6.5
    pv_end_hour: float = 20.0
    pv_center_hour: float = 13.25
    pv_width_hours: float = 3.0
    pv_clearness_min: float = 0.85
    pv_noise: float = 0.03

    base_load_kw: float = 0.5
    morning_load_kw: float = 0.4
    evening_load_kw: float = 1.2
    load_noise: float = 0.1

    sessions: tuple[SessionSpec, ...] = (SessionSpec(),)
    ev_power_kw: float = 3.3
    ev_taper_kw: float | None = 1.5
    # top 10% of a 24 kWh pack at 90.5% charging efficiency
    ev_taper_kwh: float = 0.1 * 24.0 / 0.905


def _bump(hours: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((hours - center) / width) ** 2)


def _synth_pv(rng: np.random.Generator, profile: SynthProfile) -> np.ndarray:
    start = np.arange(SLOTS_PER_DAY) / SLOTS_PER_HOUR
    mid = start + 0.5 / SLOTS_PER_HOUR
    # a slot produces only if it lies entirely inside the daylight window
    inside = (start >= profile.pv_start_hour) & (start + 1 / SLOTS_PER_HOUR <= profile.pv_end_hour)
    clearness = rng.uniform(profile.pv_clearness_min, 1.0)
    noise = 1.0 + profile.pv_noise * rng.standard_normal(SLOTS_PER_DAY)
    pv = profile.pv_peak_kw * clearness * _bump(mid, profile.pv_center_hour, profile.pv_width_hours) * noise
    return np.where(inside, np.clip(pv, 0.0, None), 0.0)


def _synth_load(rng: np.random.Generator, profile: SynthProfile) -> np.ndarray:
    mid = (np.arange(SLOTS_PER_DAY) + 0.5) / SLOTS_PER_HOUR
    shape = (
        profile.base_load_kw
        + profile.morning_load_kw * _bump(mid, 7.5, 1.0)
        + profile.evening_load_kw * _bump(mid, 19.5, 2.0)
    )
    noise = rng.normal(0.0, profile.load_noise, SLOTS_PER_DAY)
    # strictly positive: appliances on standby never draw zero
    return np.clip(shape + noise, 0.05 * profile.base_load_kw, None)


def _synth_ev(rng: np.random.Generator, profile: SynthProfile) -> np.ndarray:
    # draw every variate even for skipped sessions, keeping the stream aligned
    draws = []
    for session in profile.sessions:
        present = rng.random() < session.probability
        start_hour = rng.normal(session.start_hour_mean, session.start_hour_std)
        energy = max(rng.normal(session.energy_kwh_mean, session.energy_kwh_std), session.min_energy_kwh)
        if present:
            slot = int(np.clip(round(start_hour * SLOTS_PER_HOUR), 0, SLOTS_PER_DAY - 1))
            draws.append((slot, energy * SLOTS_PER_HOUR))  # energy in kW-slots

    # the last ev_taper_kwh of the day's charging runs at the reduced level
    total = sum(e for _, e in draws)
    taper_from = total - profile.ev_taper_kwh * SLOTS_PER_HOUR if profile.ev_taper_kw else np.inf
    ev = np.zeros(SLOTS_PER_DAY)
    delivered = 0.0
    for slot, remaining in sorted(draws):
        while remaining > 1e-12 and slot < SLOTS_PER_DAY:
            if ev[slot] > 0:
                slot += 1
                continue
            level = profile.ev_taper_kw if delivered >= taper_from - 1e-9 else profile.ev_power_kw
            power = min(level, remaining)
            ev[slot] = power
            remaining -= power
            delivered += power
            slot += 1
    return ev


def synthesize_day(seed: int, profile: SynthProfile | None = None, date: dt.date | None = None) -> HouseholdDay:
    """Generate a deterministic synthetic household day.

    PV is a clearness-scaled bell curve truncated to the daylight window,
    the non-EV load is a noisy two-bump daily shape and the EV load is made
    of contiguous sessions at ``ev_power_kw``. The final ``ev_taper_kwh`` of
    the day's charging drops to ``ev_taper_kw``, mirroring the charger's
    behaviour near a full battery.
    """
    profile = profile or SynthProfile()
    if profile.pv_peak_kw <= 0 or profile.ev_power_kw <= 0 or profile.base_load_kw <= 0:
        raise ValueError("peak PV, EV power and base load must be positive")
    if profile.ev_taper_kw is not None and profile.ev_taper_kw <= 0:
        raise ValueError("ev_taper_kw must be positive")
    rng = np.random.default_rng(seed)
    pv = _synth_pv(rng, profile)
    non_ev = _synth_load(rng, profile)
    ev = _synth_ev(rng, profile)
    return HouseholdDay(date or dt.date(2018, 1, 1), pv, non_ev, ev)


def synthesize_dataset(
    n_days: int,
    seed: int = 0,
    profile: SynthProfile | None = None,
    start: dt.date = dt.date(2018, 4, 1),
    test_fraction: float = 0.0,
) -> Dataset:
    """``n_days`` consecutive synthetic days; day ``i`` gets its own child seed."""
    if n_days < 0:
        raise ValueError("n_days must be non-negative")
    children = np.random.SeedSequence(seed).spawn(n_days)
    days = tuple(
        synthesize_day(int(child.generate_state(1)[0]), profile, start + dt.timedelta(days=i))
        for i, child in enumerate(children)
    )
    return Dataset(days).split(test_fraction)


def solar_evening_profile() -> SynthProfile:
    """Noon-peaking PV, evening commuter charging and occasional midday top-ups."""
    return SynthProfile(
        pv_peak_kw=5.0,
        base_load_kw=1.0,
        evening_load_kw=2.5,
        sessions=(
            SessionSpec(start_hour_mean=17.5, start_hour_std=0.75, energy_kwh_mean=8.0, energy_kwh_std=1.5),
            SessionSpec(
                start_hour_mean=11.5, start_hour_std=1.0, energy_kwh_mean=3.0, energy_kwh_std=0.5, probability=0.3
            ),
        ),
    )
