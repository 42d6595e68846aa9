"""Command-line entry point.

Exit codes: 0 success (or Feasible), 1 input/usage error, 2 Infeasible,
3 Unresolved.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from datetime import date as Date
from importlib import resources
from pathlib import Path

from . import data_io
from .coordinator import Status, solve
from .core import (
    ConfigurationError,
    CoordinationParams,
    EvSpec,
    check_months,
    default_tariff,
    load_tariff,
)
from .hostcap import CampaignSettings, aggregate, flag_upgrades, run_campaign
from .scenario import Scenario, SocDistributions, build_commute_pmf

log = logging.getLogger("evhost")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_UNRESOLVED = 0, 1, 2, 3
MONTH_NAMES = ("", "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct",
               "Nov", "Dec")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would read as "Infeasible"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """Settings of an ``evaluate-feeder`` run; paths are resolved against the config file."""

    ami: str | None = None
    metadata: str | None = None
    trips: str | None = None
    pmf: str | None = None
    tariff: str | None = None
    months: list[int] = field(default_factory=lambda: [7])
    powers_kw: list[float] = field(default_factory=lambda: [7.2, 11.5])
    n_scenarios: int = 100
    master_seed: int = 0
    time_limit: float = 60.0
    output_dir: str = "out"
    threads: int | None = None
    battery_kwh: float = 100.0
    fixed_away: list[int] | None = None
    upgrade_threshold: float | None = None

    def validate(self) -> None:
        if self.n_scenarios < 1:
            raise ConfigurationError("n_scenarios must be >= 1")
        if not self.powers_kw or any(not p > 0 for p in self.powers_kw):
            raise ConfigurationError("powers_kw must be non-empty and positive")
        if not self.months:
            raise ConfigurationError("months must be non-empty")
        check_months(self.months)
        if self.ami is None or self.metadata is None:
            raise ConfigurationError("ami and metadata paths are required")
        if (self.trips is None) == (self.pmf is None) and self.fixed_away is None:
            raise ConfigurationError("give exactly one of trips or pmf")
        if self.threads is not None and self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        if self.fixed_away is not None and len(self.fixed_away) != 2:
            raise ConfigurationError("fixed_away takes two slots: start end")

    @classmethod
    def from_file(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        for key in ("ami", "metadata", "trips", "pmf", "tariff", "output_dir"):
            if data.get(key) is not None and not Path(data[key]).is_absolute():
                data[key] = str(path.parent / data[key])
        return cls(**data)


def demo_config_path() -> Path:
    return Path(str(resources.files("evhost.data").joinpath("demo", "config.json")))


# --- coordinate -------------------------------------------------------------

def cmd_coordinate(args) -> int:
    try:
        with open(args.scenario, encoding="utf-8") as fh:
            scenario = Scenario.from_dict(json.load(fh))
        if args.time_limit_secs is not None:
            scenario = replace(scenario, params=replace(scenario.params,
                                                        time_limit=args.time_limit_secs))
        if args.seed is not None:
            scenario = replace(scenario, seed=args.seed)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: cannot read scenario {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = solve(scenario)
    result.write_json(out / "result.json")
    if result.schedule is not None:
        result.schedule.write_csv(out / "schedule.csv",
                                  [s.ev_index for s in scenario.sessions])
    msg = f"{result.status}: {result.proof_note}"
    if result.feasible:
        msg += f"; cost {result.cost_cents:.4f} cents"
    print(msg)
    return {Status.FEASIBLE: EXIT_OK, Status.INFEASIBLE: EXIT_INFEASIBLE,
            Status.UNRESOLVED: EXIT_UNRESOLVED}[result.status]


# --- evaluate-feeder --------------------------------------------------------

def build_config(args) -> RunConfig:
    if args.demo:
        cfg = RunConfig.from_file(demo_config_path())
    elif args.config:
        cfg = RunConfig.from_file(args.config)
    else:
        cfg = RunConfig()
    overrides = {
        "ami": args.ami, "metadata": args.metadata, "trips": args.trips, "pmf": args.pmf,
        "tariff": args.tariff, "months": args.months, "powers_kw": args.powers,
        "n_scenarios": args.n_scenarios, "master_seed": args.seed,
        "time_limit": args.time_limit_secs, "output_dir": args.out, "threads": args.threads,
        "fixed_away": args.fixed_away, "upgrade_threshold": args.upgrade_threshold,
    }
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    cfg.validate()
    return cfg


def _summary_line(tid: str, stats) -> str:
    parts = [f"{MONTH_NAMES[s.month]} {data_io.power_label(s.charger_power_kw)} "
             f"{s.pct_desired:.2f}% desired" for s in stats]
    return f"{tid} ({stats[0].customer_count} cust, {stats[0].desired_ev} EV): " + ", ".join(parts)


def cmd_evaluate_feeder(args) -> int:
    try:
        cfg = build_config(args)
        feeder = data_io.load_ami_csv(cfg.ami, cfg.metadata)
        tariff = load_tariff(cfg.tariff) if cfg.tariff else default_tariff()
        if cfg.pmf:
            pmf = data_io.load_pmf(cfg.pmf)
        elif cfg.trips:
            pmf = build_commute_pmf(data_io.read_trips_csv(cfg.trips), tag=Path(cfg.trips).stem)
        else:
            pmf = None
        for tr in feeder:
            for m in cfg.months:
                if not tr.profiles_in_month(m):
                    raise ConfigurationError(f"transformer {tr.id} has no profile in month {m}")
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    settings = CampaignSettings(
        pmf=pmf, dists=SocDistributions(), params=CoordinationParams(time_limit=cfg.time_limit),
        tariff=tariff, ev=EvSpec(cfg.battery_kwh),
        fixed_away=tuple(cfg.fixed_away) if cfg.fixed_away else None)
    records = run_campaign(feeder, cfg.months, cfg.powers_kw, cfg.n_scenarios, cfg.master_seed,
                           settings, workers=cfg.threads or os.cpu_count() or 1)
    stats = aggregate(records)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_records_csv(records, out / "records.csv")
    data_io.write_aggregates_csv(stats, out / "aggregates.csv")
    write_month_reports(stats, out, cfg.powers_kw)

    by_tr: dict[str, list] = {}
    for s in stats:
        by_tr.setdefault(s.transformer_id, []).append(s)
    for tid, group in by_tr.items():
        print(_summary_line(tid, group))
    if cfg.upgrade_threshold is not None:
        for s in flag_upgrades(stats, cfg.upgrade_threshold):
            print(f"upgrade candidate: {s.transformer_id} {MONTH_NAMES[s.month]} "
                  f"{data_io.power_label(s.charger_power_kw)} "
                  f"confidence {s.confidence_rate:.2f}% < {cfg.upgrade_threshold:g}%")
    return EXIT_OK


def write_month_reports(stats, out: Path, powers=None) -> list[Path]:
    written = []
    for month in sorted({s.month for s in stats}):
        group = [s for s in stats if s.month == month]
        for fmt, ext in (("csv", "csv"), ("markdown", "md")):
            path = out / f"report_m{month:02d}.{ext}"
            data_io.write_report(group, fmt, path, powers)
            written.append(path)
    return written


# --- small wrappers ---------------------------------------------------------

def cmd_build_pmf(args) -> int:
    try:
        trips = data_io.read_trips_csv(args.trips)
        pmf = build_commute_pmf(trips, tag=args.tag or Path(args.trips).stem)
        data_io.save_pmf(pmf, args.out)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"PMF from {pmf.records_used} trips ({pmf.records_rejected} rejected) -> {args.out}")
    return EXIT_OK


def cmd_synth_profiles(args) -> int:
    from .core import Transformer
    try:
        start = Date.fromisoformat(args.start_date)
        profiles = []
        for i in range(args.days):
            day = Date.fromordinal(start.toordinal() + i)
            spec = data_io.SynthProfileSpec(args.archetype, args.capacity_kw, args.customers,
                                            args.seed, args.transformer_id, day)
            profiles.append(data_io.synth_profile(spec))
        tr = Transformer(args.transformer_id, args.capacity_kw, args.customers, tuple(profiles))
        data_io.write_ami_csv([tr], args.out, args.metadata_out)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{args.days} {args.archetype} profile(s) -> {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        records = data_io.read_records_csv(args.records)
        stats = aggregate(records)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_io.write_aggregates_csv(stats, out / "aggregates.csv")
    for path in write_month_reports(stats, out):
        print(path)
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def _common(p: argparse.ArgumentParser, out_default: str | None = None):
    p.add_argument("--seed", type=int, default=None, help="master RNG seed")
    p.add_argument("--time-limit-secs", type=float, default=None,
                   help="wall-clock limit per coordination solve")
    p.add_argument("--out", default=out_default, help="output directory or file")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evhost", description="Coordinated EV charging and hosting capacity")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coordinate", help="solve one scenario JSON")
    p.add_argument("scenario")
    _common(p, out_default=".")
    p.set_defaults(func=cmd_coordinate)

    p = sub.add_parser("evaluate-feeder", help="run a Monte Carlo hosting-capacity campaign")
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("--demo", action="store_true", help="use the bundled demo feeder")
    p.add_argument("--ami")
    p.add_argument("--metadata")
    p.add_argument("--trips")
    p.add_argument("--pmf")
    p.add_argument("--tariff")
    p.add_argument("--months", type=int, nargs="+")
    p.add_argument("--powers", type=float, nargs="+", help="charger powers in kW")
    p.add_argument("--n-scenarios", type=int)
    p.add_argument("--fixed-away", type=int, nargs=2, metavar=("START", "END"),
                   help="common away window [START, END) in slots instead of the PMF")
    p.add_argument("--upgrade-threshold", type=float,
                   help="flag groups whose confidence rate is below this percentage")
    _common(p)
    p.set_defaults(func=cmd_evaluate_feeder)

    p = sub.add_parser("build-pmf", help="trip CSV -> joint commute PMF JSON")
    p.add_argument("trips")
    p.add_argument("out")
    p.add_argument("--tag", default=None)
    p.set_defaults(func=cmd_build_pmf)

    p = sub.add_parser("synth-profiles", help="write synthetic AMI profiles")
    p.add_argument("--archetype", choices=data_io.ARCHETYPES, required=True)
    p.add_argument("--capacity-kw", type=float, default=50.0)
    p.add_argument("--customers", type=int, default=10)
    p.add_argument("--transformer-id", default="SYN")
    p.add_argument("--start-date", default="2023-07-01")
    p.add_argument("--days", type=int, default=1)
    p.add_argument("--metadata-out", default=None)
    _common(p, out_default="profiles.csv")
    p.set_defaults(func=cmd_synth_profiles)

    p = sub.add_parser("report", help="aggregate a records CSV into report tables")
    p.add_argument("records")
    _common(p, out_default=".")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is None and args.command == "synth-profiles":
        args.seed = 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
