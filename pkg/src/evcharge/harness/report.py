"""Evaluation summaries, per-day trajectories and plot-ready series."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from ..data import SLOTS_PER_DAY, SLOTS_PER_HOUR, HouseholdDay
from ..environment import TRAJECTORY_COLUMNS
from ..tariff import TariffSchedule
from .evaluate import EvalReport, Rollout


def grid_import(day: HouseholdDay, p_ev: np.ndarray) -> np.ndarray:
    """Power drawn from the grid per slot (kW); exports count as zero."""
    return np.clip(day.non_ev + np.asarray(p_ev, dtype=float) - day.pv, 0.0, None)


def tou_grid_energy(day: HouseholdDay, p_ev: np.ndarray, tariff: TariffSchedule) -> dict[str, float]:
    """Grid energy (kWh) per tariff period; the values sum to the daily total."""
    energy = grid_import(day, p_ev) / SLOTS_PER_HOUR
    totals = {name: 0.0 for name in tariff.period_names()}
    for t in range(SLOTS_PER_DAY):
        totals[tariff.label(tariff.band_at(t))] += energy[t]
    return totals


def day_series(rollout: Rollout, tariff: TariffSchedule) -> pd.DataFrame:
    day = rollout.day
    minutes = np.arange(SLOTS_PER_DAY) * 60 // SLOTS_PER_HOUR
    return pd.DataFrame(
        {
            "t": np.arange(SLOTS_PER_DAY),
            "time": [f"{m // 60:02d}:{m % 60:02d}" for m in minutes],
            "period": [tariff.label(tariff.band_at(t)) for t in range(SLOTS_PER_DAY)],
            "price": tariff.slot_prices,
            "pv": day.pv,
            "non_ev": day.non_ev,
            "ev_metered": day.ev_metered,
            "ev_optimized": rollout.p_ev,
            "grid_metered": grid_import(day, day.ev_metered),
            "grid_optimized": grid_import(day, rollout.p_ev),
        }
    )


def write_report(report: EvalReport, rollouts: list[Rollout], out_dir: str | Path,
                 tariff: TariffSchedule) -> list[Path]:
    """Write ``summary.json`` plus, per day, a trajectory CSV and a plot-series CSV."""
    out = Path(out_dir)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)
    (out / "series").mkdir(parents=True, exist_ok=True)
    written = []

    tou = {}
    for ro in rollouts:
        date = ro.day.date.isoformat()
        traj = pd.DataFrame(ro.trajectory, columns=list(TRAJECTORY_COLUMNS))
        for col in ("t", "action"):
            traj[col] = traj[col].astype(int)
        path = out / "trajectories" / f"{date}.csv"
        traj.to_csv(path, index=False, float_format="%.17g")
        written.append(path)

        path = out / "series" / f"{date}.csv"
        day_series(ro, tariff).to_csv(path, index=False, float_format="%.17g")
        written.append(path)

        tou[date] = {
            "metered": tou_grid_energy(ro.day, ro.day.ev_metered, tariff),
            "optimized": tou_grid_energy(ro.day, ro.p_ev, tariff),
        }

    summary = report.to_dict()
    summary["grid_energy_by_period_kwh"] = tou
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2))
    written.append(path)
    return written
