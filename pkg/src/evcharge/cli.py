"""Command line entry point: ``evcharge <command> ...``.

Exit codes: 0 success, 1 data/I-O error, 2 configuration error, 3 training
divergence.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from pathlib import Path

from .agent import CheckpointError, DivergenceError, load_checkpoint
from .config import ConfigError, RunConfig, load_config
from .data import DataError, Dataset, SynthProfile, ingest_csv, solar_evening_profile, synthesize_dataset, write_csv
from .flexibility import build_flexibility_profile
from .harness.evaluate import evaluate
from .harness.oracle import dp_oracle
from .harness.policies import DQNPolicy, make_policy
from .harness.report import write_report
from .harness.train import train

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

PROFILES = {"default": SynthProfile, "solar-evening": solar_evening_profile}


def _load_data(path: str, cfg: RunConfig, column_map: str | None = None) -> Dataset:
    ds = ingest_csv(path, column_map or cfg.data.get("column_map"), gap_fill=bool(cfg.data.get("gap_fill", False)))
    return ds.split(cfg.test_fraction)


def cmd_ingest(args) -> int:
    ds = ingest_csv(args.input, args.map, gap_fill=args.gap_fill)
    print(f"{len(ds)} complete days: {ds.dates[0]} .. {ds.dates[-1]}")
    if args.out:
        write_csv(ds, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = synthesize_dataset(args.days, args.seed, PROFILES[args.profile]())
    write_csv(ds, args.out)
    print(f"wrote {len(ds)} synthetic days to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.epochs is not None:
        cfg.train = type(cfg.train).from_dict({**cfg.train.to_dict(), "epochs": args.epochs})
    ds = _load_data(args.data, cfg, args.map)
    env = cfg.env_config(ds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(ds, env, cfg.train, out)
    run = {
        "data": str(Path(args.data).resolve()),
        "column_map": args.map or cfg.data.get("column_map"),
        "test_dates": sorted(d.isoformat() for d in ds.test_dates),
        "config": cfg.to_dict(),
    }
    (out / "run.json").write_text(json.dumps(run, indent=2))
    env.flex.save(out / "flexibility.json")
    print(f"trained {result.updates} updates over {cfg.train.epochs} epochs; best greedy train return "
          f"{result.best_score:.3f}; outputs in {out}")
    return EXIT_OK


def _print_report(report) -> None:
    for row in report.rows:
        print(f"{row.date}  demand {row.daily_ev_demand:7.2f}  savings {row.cost_savings_pct:7.2f}%  "
              f"solar {row.solar_utilization_pct:6.1f}%  reward {row.total_reward:8.2f}  {row.flag}")
    agg = report.aggregate
    print(f"average     demand {agg['daily_ev_demand']:7.2f}  savings {agg['cost_savings_pct']:7.2f}%  "
          f"solar {agg['solar_utilization_pct']:6.1f}%  reward {agg['total_reward']:8.2f}")


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    ds = _load_data(args.data, cfg, args.map)
    env = cfg.env_config(ds)
    if args.policy == "dqn-greedy":
        if not args.checkpoint:
            raise ConfigError("--checkpoint is required for the dqn-greedy policy")
        net, _ = load_checkpoint(args.checkpoint)
        policy = DQNPolicy(net)
    else:
        policy = make_policy(args.policy)
    report, rollouts = evaluate(policy, ds, env, cfg.solar_mode, return_rollouts=True)
    _print_report(report)
    if args.out:
        write_report(report, rollouts, args.out, env.tariff)
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    ds = ingest_csv(args.data, args.map).split(cfg.test_fraction)
    env = cfg.env_config(ds)
    try:
        day = ds.day(args.day)
    except KeyError:
        raise DataError(f"day {args.day} not in {args.data}") from None
    result = dp_oracle(day, env, args.horizon, method=args.method)
    charged = [t for t, a in enumerate(result.actions) if a]
    print(json.dumps({"day": args.day, "horizon": len(result.actions), "total_reward": result.total_reward,
                      "charge_slots": charged, "actions": list(result.actions)}))
    return EXIT_OK


def cmd_report(args) -> int:
    if args.kind == "flex":
        if not args.data or not args.out:
            raise ConfigError("report flex needs --data and --out")
        cfg = load_config(args.config)
        ds = _load_data(args.data, cfg, args.map)
        build_flexibility_profile(ds).save(args.out)
        print(f"wrote {args.out}")
        return EXIT_OK

    if not args.run:
        raise ConfigError("report needs --run <dir> (or the 'flex' kind)")
    run_dir = Path(args.run)
    try:
        run = json.loads((run_dir / "run.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{run_dir} is not a training run directory: {exc}") from exc
    cfg = RunConfig.from_dict(run["config"])
    ds = ingest_csv(run["data"], run.get("column_map"), gap_fill=bool(cfg.data.get("gap_fill", False)))
    ds = Dataset(ds.days, frozenset(dt.date.fromisoformat(d) for d in run["test_dates"]))
    env = cfg.env_config(ds)
    net, _ = load_checkpoint(run_dir / f"checkpoint_{args.which}.json")
    out = Path(args.out) if args.out else run_dir / "report"
    for policy in (DQNPolicy(net), make_policy("metered-replay"), make_policy("dp-oracle")):
        report, rollouts = evaluate(policy, ds, env, cfg.solar_mode, return_rollouts=True)
        write_report(report, rollouts, out / policy.name, env.tariff)
        print(f"[{policy.name}]")
        _print_report(report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evcharge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="read a household CSV into complete 15-minute days")
    p.add_argument("--input", required=True)
    p.add_argument("--map", help="column mapping, e.g. 'timestamp=local_15min,pv_kw=solar,total_kw=grid'")
    p.add_argument("--gap-fill", action="store_true", help="interpolate interior gaps of up to 2 slots")
    p.add_argument("--out", help="write the normalized days to this CSV")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate synthetic household days")
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", choices=sorted(PROFILES), default="solar-evening")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a DQN charging policy")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--map")
    p.add_argument("--epochs", type=int, help="override the configured epoch count")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy on the test days")
    p.add_argument("--checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--map")
    p.add_argument("--policy", default="dqn-greedy",
                   choices=["dqn-greedy", "metered-replay", "random", "tariff-greedy", "solar-greedy", "dp-oracle"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="exact optimal schedule for one day")
    p.add_argument("--day", required=True, help="ISO date")
    p.add_argument("--horizon", type=int, default=96)
    p.add_argument("--method", choices=["dp", "exhaustive"], default="dp")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--map")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("report", help="write report files for a run, or the flexibility profile")
    p.add_argument("kind", nargs="?", choices=["run", "flex"], default="run")
    p.add_argument("--run")
    p.add_argument("--which", choices=["best", "final"], default="best")
    p.add_argument("--data")
    p.add_argument("--config")
    p.add_argument("--map")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
