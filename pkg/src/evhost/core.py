"""Shared domain types: time grid, TOU tariff, load profiles, transformers, EVs.

Everything here is an immutable value object. Arrays held by the value
objects are copied on construction and flagged read-only so instances can be
shared between worker processes without defensive copies.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date as Date
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

BASE_SLOTS = 96  # tariff bands are always expressed on the 15-minute day


class ConfigurationError(ValueError):
    """Raised when a tariff, grid or parameter set is inconsistent."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of one day into ``num_slots`` slots.

    Slot ``t`` covers ``[t * slot_hours, (t + 1) * slot_hours)`` hours after
    midnight.
    """

    num_slots: int = 96
    slot_hours: float = 0.25

    def __post_init__(self):
        if self.num_slots < 8:
            raise ConfigurationError(f"num_slots must be >= 8, got {self.num_slots}")
        if self.slot_hours <= 0:
            raise ConfigurationError("slot_hours must be positive")
        if not math.isclose(self.num_slots * self.slot_hours, 24.0, abs_tol=1e-9):
            raise ConfigurationError(
                f"{self.num_slots} slots x {self.slot_hours} h does not cover 24 h")
        if BASE_SLOTS % self.num_slots:
            raise ConfigurationError(
                f"num_slots must divide {BASE_SLOTS} so tariff bands align")

    def hour_to_slot(self, hour: int) -> int:
        """First slot starting at or after ``hour`` o'clock."""
        return math.ceil(hour / self.slot_hours - 1e-9)

    def base_index(self, slot: int) -> int:
        """Index on the 96-slot day of the 15-minute slot where ``slot`` starts."""
        return slot * (BASE_SLOTS // self.num_slots)


DEFAULT_GRID = TimeGrid()


@dataclass(frozen=True)
class Band:
    """Half-open slot range ``[start_slot, end_slot)`` on the 96-slot day.

    ``end_slot <= start_slot`` means the band wraps past midnight.
    """

    start_slot: int
    end_slot: int
    price: float  # cents per kWh

    def slots(self) -> list[int]:
        if not (0 <= self.start_slot < BASE_SLOTS and 0 <= self.end_slot <= BASE_SLOTS):
            raise ConfigurationError(f"band slots out of range: {self}")
        if self.end_slot > self.start_slot:
            return list(range(self.start_slot, self.end_slot))
        return list(range(self.start_slot, BASE_SLOTS)) + list(range(0, self.end_slot))


@dataclass(frozen=True)
class Season:
    months: frozenset[int]
    bands: tuple[Band, ...]
    name: str = ""


@dataclass(frozen=True)
class TouTariff:
    """Seasonal time-of-use price plan.

    Validation guarantees every month belongs to exactly one season and
    that each season's bands tile the day without gaps or overlaps.
    """

    seasons: tuple[Season, ...]
    _lookup: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        lookup: dict[int, np.ndarray] = {}
        for season in self.seasons:
            prices = np.full(BASE_SLOTS, np.nan)
            for band in season.bands:
                if not band.price > 0:
                    raise ConfigurationError(f"non-positive price in {band}")
                for s in band.slots():
                    if not np.isnan(prices[s]):
                        raise ConfigurationError(
                            f"season {season.name or sorted(season.months)}: slot {s} covered twice")
                    prices[s] = band.price
            if np.isnan(prices).any():
                gap = int(np.flatnonzero(np.isnan(prices))[0])
                raise ConfigurationError(
                    f"season {season.name or sorted(season.months)}: slot {gap} not covered")
            prices.setflags(write=False)
            for m in season.months:
                if not 1 <= m <= 12:
                    raise ConfigurationError(f"invalid month {m}")
                if m in lookup:
                    raise ConfigurationError(f"month {m} appears in two seasons")
                lookup[m] = prices
        missing = sorted(set(range(1, 13)) - set(lookup))
        if missing:
            raise ConfigurationError(f"months not covered by any season: {missing}")
        object.__setattr__(self, "_lookup", lookup)

    def day_prices(self, month: int) -> np.ndarray:
        """Prices for the 96 fifteen-minute slots of a day in ``month``."""
        try:
            return self._lookup[month]
        except KeyError:
            raise ConfigurationError(f"month {month} not covered by any season") from None

    def scaled(self, factor: float) -> TouTariff:
        return TouTariff(tuple(
            Season(s.months, tuple(Band(b.start_slot, b.end_slot, b.price * factor) for b in s.bands), s.name)
            for s in self.seasons))

    def to_dict(self) -> dict:
        return {"seasons": [
            {"name": s.name, "months": sorted(s.months),
             "bands": [{"start_slot": b.start_slot, "end_slot": b.end_slot, "price": b.price}
                       for b in s.bands]}
            for s in self.seasons]}

    @classmethod
    def from_dict(cls, data: dict) -> TouTariff:
        try:
            seasons = tuple(
                Season(frozenset(int(m) for m in s["months"]),
                       tuple(Band(int(b["start_slot"]), int(b["end_slot"]), float(b["price"]))
                             for b in s["bands"]),
                       s.get("name", ""))
                for s in data["seasons"])
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed tariff document: {exc!r}") from exc
        return cls(seasons)


def load_tariff(path: str | Path) -> TouTariff:
    with open(path, encoding="utf-8") as fh:
        return TouTariff.from_dict(json.load(fh))


def save_tariff(tariff: TouTariff, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(tariff.to_dict(), fh, indent=2)
        fh.write("\n")


def default_tariff() -> TouTariff:
    """The bundled Salt River Project residential TOU plan."""
    text = resources.files("evhost.data").joinpath("srp_tou.json").read_text(encoding="utf-8")
    return TouTariff.from_dict(json.loads(text))


def price_at(tariff: TouTariff, month: int, slot: int) -> float:
    """Price in cents/kWh for a 15-minute ``slot`` (0-95) of ``month`` (1-12)."""
    if not 1 <= month <= 12:
        raise ConfigurationError(f"month must be 1-12, got {month}")
    if not 0 <= slot < BASE_SLOTS:
        raise ValueError(f"slot must be 0-{BASE_SLOTS - 1}, got {slot}")
    return float(tariff.day_prices(month)[slot])


def price_vector(tariff: TouTariff, month: int, grid: TimeGrid = DEFAULT_GRID) -> np.ndarray:
    """Per-slot prices on ``grid``; a coarse slot takes the price at its start."""
    day = tariff.day_prices(month)
    return day[[grid.base_index(t) for t in range(grid.num_slots)]].copy()


@dataclass(frozen=True, eq=False)
class LoadProfile:
    """Average base-load power (kW) per slot for one transformer-day.

    Negative readings are allowed and represent rooftop-PV backfeed.
    """

    transformer_id: str
    date: Date
    kw: np.ndarray

    def __post_init__(self):
        kw = _frozen_array(self.kw)
        if kw.ndim != 1:
            raise ValueError("load profile must be one-dimensional")
        if not np.isfinite(kw).all():
            raise ValueError(f"non-finite reading in profile {self.transformer_id} {self.date}")
        object.__setattr__(self, "kw", kw)

    def __eq__(self, other):
        if not isinstance(other, LoadProfile):
            return NotImplemented
        return (self.transformer_id == other.transformer_id and self.date == other.date
                and np.array_equal(self.kw, other.kw))

    def __len__(self):
        return len(self.kw)

    def check_grid(self, grid: TimeGrid) -> None:
        if len(self.kw) != grid.num_slots:
            raise ValueError(
                f"profile has {len(self.kw)} readings, grid expects {grid.num_slots}")


@dataclass(frozen=True)
class Transformer:
    id: str
    capacity_kw: float
    customer_count: int
    profiles: tuple[LoadProfile, ...] = ()

    def __post_init__(self):
        if not self.capacity_kw > 0:
            raise ValueError(f"transformer {self.id}: capacity must be positive")
        if self.customer_count < 1:
            raise ValueError(f"transformer {self.id}: needs at least one customer")
        profiles = tuple(sorted(self.profiles, key=lambda p: p.date))
        for p in profiles:
            if p.transformer_id != self.id:
                raise ValueError(f"profile for {p.transformer_id} attached to transformer {self.id}")
        object.__setattr__(self, "profiles", profiles)

    def profile_for(self, day: Date) -> LoadProfile:
        for p in self.profiles:
            if p.date == day:
                return p
        raise KeyError(f"transformer {self.id} has no profile for {day.isoformat()}")

    def profiles_in_month(self, month: int) -> list[LoadProfile]:
        return [p for p in self.profiles if p.date.month == month]


@dataclass(frozen=True)
class ChargerSpec:
    power_kw: float = 7.2

    def __post_init__(self):
        if not self.power_kw > 0:
            raise ValueError("charger power must be positive")


@dataclass(frozen=True)
class EvSpec:
    battery_kwh: float = 100.0
    efficiency_mi_per_kwh: float | None = 3.6

    def __post_init__(self):
        if not self.battery_kwh > 0:
            raise ValueError("battery capacity must be positive")


@dataclass(frozen=True)
class CoordinationParams:
    """Tunables of the coordination model.

    Attributes:
        tau_min: minimum length, in slots, of every charging run.
        max_switches: budget of turn-on events per EV per day.
        alpha, beta: constants of the switch-indicator linking rows. With
            ``alpha >= 1 + beta`` and ``0 < beta <= 1`` the rows force the
            indicator to 1 exactly on an off-to-on transition.
        mip_gap: relative optimality tolerance.
        time_limit: wall-clock budget per solve, seconds.
    """

    tau_min: int = 4
    max_switches: int = 4
    alpha: float = 2.0
    beta: float = 1.0
    mip_gap: float = 1e-6
    time_limit: float = 60.0

    def __post_init__(self):
        if self.tau_min < 1:
            raise ConfigurationError("tau_min must be >= 1")
        if self.max_switches < 1:
            raise ConfigurationError("max_switches must be >= 1")
        if not 0 < self.beta <= 1:
            raise ConfigurationError("beta must lie in (0, 1]")
        if self.alpha < 1 + self.beta:
            raise ConfigurationError("alpha must be >= 1 + beta")
        if not self.mip_gap >= 0:
            raise ConfigurationError("mip_gap must be non-negative")
        if not self.time_limit > 0:
            raise ConfigurationError("time_limit must be positive")

    def check_grid(self, grid: TimeGrid) -> None:
        if self.tau_min >= grid.num_slots:
            raise ConfigurationError("tau_min must be smaller than the number of slots")


def desired_ev_count(customer_count: int) -> int:
    """One EV per two households, rounded up."""
    if customer_count < 1:
        raise ValueError("customer_count must be >= 1")
    return (customer_count + 1) // 2


def headroom(profile: LoadProfile, capacity_kw: float) -> np.ndarray:
    """Spare capacity per slot; negative where the base load alone overloads."""
    return capacity_kw - np.asarray(profile.kw, dtype=float)


def check_months(months: Sequence[int]) -> None:
    bad = [m for m in months if not 1 <= int(m) <= 12]
    if bad:
        raise ConfigurationError(f"invalid months: {bad}")
