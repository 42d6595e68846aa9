"""File formats: AMI profiles, transformer metadata, trips, PMFs and reports.

All text output is UTF-8 with LF line endings. Floats are written with
``repr`` so that reading a file back gives bit-identical values.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import date as Date
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import LoadProfile, Transformer
from .hostcap import AggregateStats, EvaluationRecord, Outcome
from .scenario import JointCommutePmf, Trip, substream

AMI_ID, AMI_DATE = "transformer_id", "date"
META_HEADER = ["transformer_id", "capacity_kw", "customer_count"]
TRIP_HEADER = ["depart_hour", "return_hour", "weight"]
RECORD_HEADER = ["transformer_id", "date", "month", "charger_power_kw", "scenario_index",
                 "customer_count", "desired_ev", "supported_ev", "status", "scenario_seed",
                 "cost_cents"]
AGGREGATE_HEADER = ["transformer_id", "customer_count", "desired_ev", "charger_power_kw",
                    "month", "n_scenarios", "n_infeasible", "n_less", "n_desired",
                    "n_unresolved", "pct_infeasible", "pct_less", "pct_desired",
                    "pct_unresolved", "confidence_rate"]
REPORT_GROUP = ["Infeasibility (%)", "Less #EV (%)", "Desired #EV (%)", "Unresolved (%)"]


class DataFormatError(ValueError):
    """Malformed input file; the message names the file and line."""


def ami_header(num_slots: int = 96) -> list[str]:
    return [AMI_ID, AMI_DATE] + [f"p{i:02d}" for i in range(num_slots)]


def _fmt(x: float) -> str:
    return repr(float(x))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


# --- AMI and metadata -------------------------------------------------------

def read_metadata_csv(path: str | Path) -> dict[str, tuple[float, int]]:
    out: dict[str, tuple[float, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != META_HEADER:
            raise DataFormatError(f"{path}: line 1: expected header {','.join(META_HEADER)}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                tid, cap, cust = row
                out_key = tid.strip()
                if out_key in out:
                    raise ValueError(f"duplicate transformer id {out_key!r}")
                out[out_key] = (float(cap), int(cust))
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {line}: {exc}") from exc
    return out


def load_ami_csv(path: str | Path, metadata_path: str | Path) -> list[Transformer]:
    """Transformers (sorted by id) with their daily profiles attached."""
    meta = read_metadata_csv(metadata_path)
    profiles: dict[str, list[LoadProfile]] = {}
    seen: set[tuple[str, Date]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != [AMI_ID, AMI_DATE] or header != ami_header(len(header) - 2):
            raise DataFormatError(f"{path}: line 1: header must be "
                                  "transformer_id,date,p00,...,p95")
        n = len(header) - 2
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n + 2:
                raise DataFormatError(
                    f"{path}: line {line}: expected {n} readings, found {len(row) - 2}")
            try:
                tid = row[0].strip()
                day = Date.fromisoformat(row[1].strip())
                kw = np.array([float(v) for v in row[2:]])
                if not np.isfinite(kw).all():
                    raise ValueError("non-finite reading")
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {line}: {exc}") from exc
            if (tid, day) in seen:
                raise DataFormatError(
                    f"{path}: line {line}: duplicate row for {tid} on {day.isoformat()}")
            if tid not in meta:
                raise DataFormatError(f"{path}: line {line}: no metadata for transformer {tid!r}")
            seen.add((tid, day))
            profiles.setdefault(tid, []).append(LoadProfile(tid, day, kw))
    return [Transformer(tid, meta[tid][0], meta[tid][1], tuple(profiles.get(tid, ())))
            for tid in sorted(meta)]


def write_ami_csv(transformers: Sequence[Transformer], path: str | Path,
                  metadata_path: str | Path | None = None) -> None:
    lengths = {len(p) for t in transformers for p in t.profiles}
    if len(lengths) > 1:
        raise ValueError("profiles of different lengths cannot share one AMI file")
    n = lengths.pop() if lengths else 96
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(ami_header(n))
        for t in sorted(transformers, key=lambda t: t.id):
            for p in t.profiles:
                w.writerow([t.id, p.date.isoformat()] + [_fmt(v) for v in p.kw])
    if metadata_path is not None:
        with open(metadata_path, "w", newline="", encoding="utf-8") as fh:
            w = _writer(fh)
            w.writerow(META_HEADER)
            for t in sorted(transformers, key=lambda t: t.id):
                w.writerow([t.id, _fmt(t.capacity_kw), t.customer_count])


# --- trips and PMFs ---------------------------------------------------------

def read_trips_csv(path: str | Path) -> list[Trip]:
    """Trip records as written; overnight trips are kept for the PMF builder to count."""
    trips = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(TRIP_HEADER[:2]) <= set(reader.fieldnames):
            raise DataFormatError(f"{path}: line 1: expected columns {','.join(TRIP_HEADER)}")
        for line, row in enumerate(reader, start=2):
            try:
                d, r = int(row["depart_hour"]), int(row["return_hour"])
                weight = float(row.get("weight") or 1.0)
                if not (0 <= d <= 23 and 0 <= r <= 23):
                    raise ValueError("hours must lie in 0-23")
                if not weight > 0:
                    raise ValueError("weight must be positive")
            except (TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}: line {line}: {exc}") from exc
            trips.append(Trip(d, r, weight))
    return trips


def write_trips_csv(trips: Iterable[Trip], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(TRIP_HEADER)
        for t in trips:
            w.writerow([t.depart_hour, t.return_hour, _fmt(t.weight)])


def save_pmf(pmf: JointCommutePmf, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(pmf.to_dict(), fh)
        fh.write("\n")


def load_pmf(path: str | Path) -> JointCommutePmf:
    with open(path, encoding="utf-8") as fh:
        try:
            return JointCommutePmf.from_dict(json.load(fh))
        except (KeyError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"{path}: {exc}") from exc


def synth_trips(n: int, seed: int) -> list[Trip]:
    """NHTS-like daily tours: commutes, long work days, short errands, a few overnight.

    Departures cluster in the morning and returns in the afternoon and
    evening. About 2% of the records return on the next day and will be
    rejected by the PMF builder. The long tours (13 to 16 hours away) leave
    short home windows in which a single slow charger may not finish.
    """
    rng = substream("trips", seed)
    out = []
    for _ in range(n):
        u = rng.random()
        if u < 0.02:
            d = int(rng.integers(15, 23))
            r = int(rng.integers(0, d))
        elif u < 0.22:
            d = int(rng.integers(8, 20))
            r = int(min(d + rng.integers(1, 5), 23))
        elif u < 0.42:
            d = int(np.clip(np.rint(rng.normal(6.5, 1.0)), 4, 9))
            r = int(min(d + rng.integers(13, 17), 23))
        else:
            d = int(np.clip(np.rint(rng.normal(7.3, 1.1)), 4, 12))
            r = int(np.clip(d + np.rint(rng.normal(9.5, 1.4)), d + 1, 23))
        out.append(Trip(d, r, 1.0))
    return out


# --- synthetic load profiles ------------------------------------------------

# hourly shape anchors, fraction of the daily peak / of capacity
_JULY = [0.62, 0.57, 0.53, 0.50, 0.49, 0.50, 0.52, 0.52, 0.50, 0.50, 0.53, 0.57,
         0.62, 0.67, 0.72, 0.78, 0.85, 0.92, 0.97, 1.00, 0.96, 0.87, 0.77, 0.68]
_MARCH = [0.22, 0.20, 0.19, 0.18, 0.18, 0.20, 0.25, 0.28, 0.26, 0.24, 0.23, 0.23,
          0.23, 0.23, 0.24, 0.26, 0.30, 0.36, 0.42, 0.45, 0.43, 0.38, 0.32, 0.26]
ARCHETYPES = ("july_like", "march_like")


@dataclass(frozen=True)
class SynthProfileSpec:
    archetype: str
    capacity_kw: float
    customer_count: int = 10
    seed: int = 0
    transformer_id: str = "SYN"
    date: Date = Date(2023, 7, 1)
    num_slots: int = 96

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise ValueError(f"archetype must be one of {ARCHETYPES}")
        if not self.capacity_kw > 0:
            raise ValueError("capacity_kw must be positive")
        if self.customer_count < 1:
            raise ValueError("customer_count must be >= 1")
        if self.num_slots < 8 or 96 % self.num_slots:
            raise ValueError("num_slots must divide 96")


def _hourly_curve(anchors, slots: int, shift: float = 0.0) -> np.ndarray:
    per_hour = slots / 24
    x = (np.arange(len(anchors)) + 0.5) * per_hour + shift
    return np.interp(np.arange(slots), x, anchors, period=slots)


def _smooth_noise(rng, slots: int, amplitude: float) -> np.ndarray:
    raw = rng.normal(0.0, 1.0, slots)
    kernel = np.ones(5) / 5
    padded = np.concatenate([raw[-2:], raw, raw[:2]])
    return amplitude * np.convolve(padded, kernel, mode="valid") * math.sqrt(5)


def synth_profile(spec: SynthProfileSpec) -> LoadProfile:
    """Deterministic synthetic day for one transformer.

    ``july_like``: hot-season curve with the evening peak between 5 PM and
    9 PM, peak in [0.7, 0.95] of capacity, never negative.
    ``march_like``: mild-season curve with rooftop PV pulling the midday net
    load down, sometimes below zero; peak at most half of capacity.
    """
    rng = substream("profile", spec.archetype, spec.seed, spec.transformer_id, spec.date)
    T, C = spec.num_slots, spec.capacity_kw
    per_hour = T / 24
    noise_amp = min(0.04, 0.02 * math.sqrt(10 / spec.customer_count))

    if spec.archetype == "july_like":
        shift = rng.uniform(-1.5, 1.0) * per_hour
        shape = _hourly_curve(_JULY, T, shift)
        depth = rng.uniform(0.8, 1.3)
        shape = 1.0 - (1.0 - shape) * depth
        shape = shape * (1.0 + _smooth_noise(rng, T, noise_amp / 2))
        peak = rng.uniform(0.7, 0.95) * C
        kw = shape / shape.max() * peak
        return LoadProfile(spec.transformer_id, spec.date, np.maximum(kw, 0.0))

    level = rng.uniform(0.75, 1.05)
    hours = (np.arange(T) + 0.5) / per_hour
    pv = np.clip(np.sin(np.pi * (hours - 6.5) / 12.0), 0.0, None)
    pv_depth = rng.uniform(0.05, 0.35)
    frac = level * _hourly_curve(_MARCH, T) * (1.0 + _smooth_noise(rng, T, noise_amp))
    frac = frac - pv_depth * pv
    if frac.max() > 0.5:
        frac = frac * (0.5 / frac.max())
    return LoadProfile(spec.transformer_id, spec.date, frac * C)


# --- records, aggregates, reports -------------------------------------------

def write_records_csv(records: Iterable[EvaluationRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(RECORD_HEADER)
        for r in records:
            w.writerow([r.transformer_id, r.date.isoformat(), r.month, _fmt(r.charger_power_kw),
                        r.scenario_index, r.customer_count, r.desired_ev, r.supported_ev,
                        r.status.value, r.scenario_seed,
                        "" if r.cost_cents is None else _fmt(r.cost_cents)])


def read_records_csv(path: str | Path) -> list[EvaluationRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RECORD_HEADER:
            raise DataFormatError(f"{path}: line 1: unexpected header")
        for line, row in enumerate(reader, start=2):
            try:
                out.append(EvaluationRecord(
                    transformer_id=row["transformer_id"],
                    date=Date.fromisoformat(row["date"]),
                    charger_power_kw=float(row["charger_power_kw"]),
                    desired_ev=int(row["desired_ev"]), supported_ev=int(row["supported_ev"]),
                    status=Outcome(row["status"]), scenario_seed=int(row["scenario_seed"]),
                    cost_cents=float(row["cost_cents"]) if row["cost_cents"] else None,
                    scenario_index=int(row["scenario_index"]),
                    customer_count=int(row["customer_count"])))
            except (TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}: line {line}: {exc}") from exc
    return out


def write_aggregates_csv(stats: Iterable[AggregateStats], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(AGGREGATE_HEADER)
        for s in stats:
            w.writerow([s.transformer_id, s.customer_count, s.desired_ev, _fmt(s.charger_power_kw),
                        s.month, s.n_scenarios, *s.counts,
                        f"{s.pct_infeasible:.6f}", f"{s.pct_less:.6f}", f"{s.pct_desired:.6f}",
                        f"{s.pct_unresolved:.6f}", f"{s.confidence_rate:.6f}"])


def power_label(power_kw: float) -> str:
    return f"{power_kw:g} kW"


def report_table(stats: Sequence[AggregateStats],
                 powers: Sequence[float] | None = None) -> tuple[list[str], list[list[str]]]:
    """Header and rows of a hosting-capacity table for a single month."""
    if not stats:
        raise ValueError("no aggregates to report")
    months = {s.month for s in stats}
    if len(months) != 1:
        raise ValueError(f"a report table covers one month; got {sorted(months)}")
    powers = sorted({s.charger_power_kw for s in stats}) if powers is None else list(powers)
    header = ["Trans Code", "# Cust", "# EV"]
    for p in powers:
        header += [f"{power_label(p)} {name}" for name in REPORT_GROUP]
    cells: dict[str, dict[float, AggregateStats]] = {}
    for s in stats:
        cells.setdefault(s.transformer_id, {})[s.charger_power_kw] = s
    rows = []
    for tid in sorted(cells):
        first = next(iter(cells[tid].values()))
        row = [tid, str(first.customer_count), str(first.desired_ev)]
        for p in powers:
            s = cells[tid].get(p)
            if s is None:
                row += [""] * len(REPORT_GROUP)
            else:
                row += [f"{v:.2f}" for v in
                        (s.pct_infeasible, s.pct_less, s.pct_desired, s.pct_unresolved)]
        rows.append(row)
    return header, rows


def write_report(stats: Sequence[AggregateStats], fmt: str, path: str | Path,
                 powers: Sequence[float] | None = None) -> None:
    """Write one month's table as ``csv`` or ``markdown``."""
    header, rows = report_table(stats, powers)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            w = _writer(fh)
            w.writerow(header)
            w.writerows(rows)
        elif fmt == "markdown":
            fh.write("| " + " | ".join(header) + " |\n")
            fh.write("|" + "|".join("---" if i == 0 else "---:" for i in range(len(header))) + "|\n")
            for row in rows:
                fh.write("| " + " | ".join(row) + " |\n")
        else:
            raise ValueError(f"unknown report format {fmt!r}")


def read_report_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def read_report_markdown(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    def cells(line):
        return [c.strip() for c in line.strip("|").split("|")]

    return cells(lines[0]), [cells(ln) for ln in lines[2:]]


# --- bundled demo feeder ----------------------------------------------------

DEMO_TRANSFORMERS = (
    ("T01", 50.0, 6),
    ("T02", 50.0, 8),
    ("T03", 50.0, 10),
    ("T04", 75.0, 9),
    ("T05", 75.0, 12),
    ("T06", 75.0, 15),
)
DEMO_MONTHS = {3: "march_like", 7: "july_like"}


def demo_feeder(year: int = 2023, seed: int = 7) -> list[Transformer]:
    """Six synthetic transformers with a full March (march_like) and July (july_like)."""
    feeder = []
    for tid, cap, cust in DEMO_TRANSFORMERS:
        profiles = []
        for month, archetype in sorted(DEMO_MONTHS.items()):
            day = Date(year, month, 1)
            while day.month == month:
                spec = SynthProfileSpec(archetype, cap, cust, seed, tid, day)
                profiles.append(synth_profile(spec))
                day = Date.fromordinal(day.toordinal() + 1)
        feeder.append(Transformer(tid, cap, cust, tuple(profiles)))
    return feeder
