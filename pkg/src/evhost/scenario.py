"""Commute PMF construction and Monte Carlo sampling of charging scenarios."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from datetime import date as Date
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    DEFAULT_GRID,
    ChargerSpec,
    CoordinationParams,
    EvSpec,
    LoadProfile,
    TimeGrid,
    TouTariff,
    Transformer,
    headroom,
    price_vector,
)

log = logging.getLogger(__name__)

HOURS = 24
PMF_TOL = 1e-9


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from an arbitrary tuple of ints/strings/dates.

    Python's ``hash`` is salted per process, so a cryptographic digest of the
    canonical text form is used instead.
    """
    text = "\x1f".join(p.isoformat() if isinstance(p, Date) else repr(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def substream(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))


@dataclass(frozen=True)
class Trip:
    depart_hour: int
    return_hour: int
    weight: float = 1.0


@dataclass(frozen=True, eq=False)
class JointCommutePmf:
    """Joint probability of (departure hour, return hour) for one daily trip.

    ``matrix[d, r]`` is the probability of leaving at hour ``d`` and coming
    back at hour ``r``; only ``r > d`` may carry mass.
    """

    matrix: np.ndarray
    tag: str = ""
    records_used: int = 0
    records_rejected: int = 0
    _cdf: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (HOURS, HOURS):
            raise ValueError(f"PMF must be {HOURS}x{HOURS}, got {m.shape}")
        if not np.isfinite(m).all() or (m < 0).any():
            raise ValueError("PMF entries must be finite and non-negative")
        if np.tril(m).any():
            raise ValueError("PMF mass found at return_hour <= depart_hour")
        if abs(m.sum() - 1.0) > PMF_TOL:
            raise ValueError(f"PMF sums to {m.sum():.12f}, expected 1")
        m.setflags(write=False)
        cdf = np.cumsum(m.ravel())
        cdf.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_cdf", cdf)

    def __eq__(self, other):
        if not isinstance(other, JointCommutePmf):
            return NotImplemented
        return self.tag == other.tag and np.array_equal(self.matrix, other.matrix)

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf

    def cells(self) -> dict[tuple[int, int], float]:
        d, r = np.nonzero(self.matrix)
        return {(int(a), int(b)): float(self.matrix[a, b]) for a, b in zip(d, r)}

    def to_dict(self) -> dict:
        return {"tag": self.tag, "pmf": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> JointCommutePmf:
        return cls(np.asarray(data["pmf"], dtype=float), tag=str(data.get("tag", "")))

    @classmethod
    def from_cells(cls, cells: Mapping[tuple[int, int], float], tag: str = "") -> JointCommutePmf:
        m = np.zeros((HOURS, HOURS))
        for (d, r), p in cells.items():
            m[d, r] = p
        return cls(m, tag=tag)


def _as_trip(rec) -> Trip:
    if isinstance(rec, Trip):
        return rec
    if isinstance(rec, Mapping):
        return Trip(int(rec["depart_hour"]), int(rec["return_hour"]), float(rec.get("weight", 1.0)))
    d, r, *w = rec
    return Trip(int(d), int(r), float(w[0]) if w else 1.0)


def build_commute_pmf(trips: Iterable, tag: str = "") -> JointCommutePmf:
    """Normalised weight histogram of (departure, return) hour pairs.

    Trips that return at or before their departure hour (overnight tours)
    cannot be represented on a single day; they are dropped and counted in
    ``records_rejected``.
    """
    counts = np.zeros((HOURS, HOURS))
    used = rejected = 0
    for rec in trips:
        trip = _as_trip(rec)
        if not (0 <= trip.depart_hour < HOURS and 0 <= trip.return_hour < HOURS):
            raise ValueError(f"trip hours out of range: {trip}")
        if not trip.weight > 0:
            raise ValueError(f"trip weight must be positive: {trip}")
        if trip.return_hour <= trip.depart_hour:
            rejected += 1
            continue
        counts[trip.depart_hour, trip.return_hour] += trip.weight
        used += 1
    if used == 0:
        raise ValueError("no usable trip records"
                         + (f" ({rejected} rejected as overnight)" if rejected else ""))
    if rejected:
        log.warning("dropped %d trip(s) with return_hour <= depart_hour", rejected)
    return JointCommutePmf(counts / counts.sum(), tag=tag,
                           records_used=used, records_rejected=rejected)


def sample_away_interval(pmf: JointCommutePmf, rng: np.random.Generator,
                         grid: TimeGrid = DEFAULT_GRID) -> tuple[int, int]:
    """Draw one (depart_slot, return_slot) pair by inverting the flattened CDF."""
    u = rng.random()
    idx = int(np.searchsorted(pmf.cdf, u, side="right"))
    # the float cdf may end a few ulps below 1
    idx = min(idx, int(np.flatnonzero(pmf.matrix.ravel())[-1]))
    depart, ret = divmod(idx, HOURS)
    return grid.hour_to_slot(depart), grid.hour_to_slot(ret)


@dataclass(frozen=True)
class SocDistributions:
    """Sampling laws for the arrival and target state of charge.

    Initial SOC is uniform on ``[initial_low, initial_high]``. Target SOC is
    ``min(final_floor + chi_scale * X, final_cap)`` with ``X`` chi-squared
    with ``chi_df`` degrees of freedom: most mass just above the floor and a
    thin tail toward full charge.
    """

    initial_low: float = 0.20
    initial_high: float = 0.30
    final_floor: float = 0.80
    final_cap: float = 1.00
    chi_df: float = 2.0
    chi_scale: float = 0.2 / 6

    def __post_init__(self):
        if not (0 <= self.initial_low <= self.initial_high < self.final_floor
                <= self.final_cap <= 1):
            raise ValueError(f"inconsistent SOC bounds: {self}")
        if self.chi_df < 1:
            raise ValueError("chi_df must be >= 1")
        if self.chi_scale < 0:
            raise ValueError("chi_scale must be non-negative")


def sample_initial_soc(dist: SocDistributions, rng: np.random.Generator) -> float:
    return dist.initial_low + (dist.initial_high - dist.initial_low) * rng.random()


def sample_final_soc(dist: SocDistributions, rng: np.random.Generator) -> float:
    x = rng.chisquare(dist.chi_df)
    return min(dist.final_floor + dist.chi_scale * x, dist.final_cap)


@dataclass(frozen=True)
class EvSession:
    """One EV's charging need for the day.

    ``unavailable`` holds the slots during which the car is away (no
    charging possible).
    """

    ev_index: int
    initial_soc: float
    final_soc: float
    battery_kwh: float
    unavailable: frozenset[int] = frozenset()

    def __post_init__(self):
        if not 0 <= self.initial_soc <= self.final_soc <= 1:
            raise ValueError(f"EV {self.ev_index}: need 0 <= initial <= final <= 1")
        if not self.battery_kwh > 0:
            raise ValueError("battery capacity must be positive")
        object.__setattr__(self, "unavailable", frozenset(int(s) for s in self.unavailable))
        if any(s < 0 for s in self.unavailable):
            raise ValueError("negative slot index in unavailable set")

    @property
    def energy_demand_kwh(self) -> float:
        return (self.final_soc - self.initial_soc) * self.battery_kwh

    def to_dict(self) -> dict:
        return {"ev_index": self.ev_index, "initial_soc": self.initial_soc,
                "final_soc": self.final_soc, "battery_kwh": self.battery_kwh,
                "unavailable": sorted(self.unavailable)}

    @classmethod
    def from_dict(cls, d: Mapping) -> EvSession:
        return cls(int(d["ev_index"]), float(d["initial_soc"]), float(d["final_soc"]),
                   float(d["battery_kwh"]), frozenset(int(s) for s in d.get("unavailable", ())))


@dataclass(frozen=True)
class Scenario:
    """A complete, solvable coordination instance for one transformer-day."""

    profile: LoadProfile
    capacity_kw: float
    charger: ChargerSpec
    sessions: tuple[EvSession, ...]
    params: CoordinationParams
    tariff: TouTariff
    month: int
    seed: int = 0
    grid: TimeGrid = DEFAULT_GRID

    def __post_init__(self):
        object.__setattr__(self, "sessions", tuple(self.sessions))
        self.profile.check_grid(self.grid)
        self.params.check_grid(self.grid)
        for s in self.sessions:
            if s.unavailable and max(s.unavailable) >= self.grid.num_slots:
                raise ValueError(f"EV {s.ev_index}: unavailable slot beyond the grid")

    @property
    def n_evs(self) -> int:
        return len(self.sessions)

    def prices(self) -> np.ndarray:
        return price_vector(self.tariff, self.month, self.grid)

    def headroom(self) -> np.ndarray:
        return headroom(self.profile, self.capacity_kw)

    def with_sessions(self, sessions: Sequence[EvSession]) -> Scenario:
        return replace(self, sessions=tuple(sessions))

    def to_dict(self) -> dict:
        return {
            "grid": {"num_slots": self.grid.num_slots, "slot_hours": self.grid.slot_hours},
            "transformer_id": self.profile.transformer_id,
            "date": self.profile.date.isoformat(),
            "base_load_kw": self.profile.kw.tolist(),
            "capacity_kw": self.capacity_kw,
            "charger_kw": self.charger.power_kw,
            "month": self.month,
            "seed": self.seed,
            "params": {
                "tau_min": self.params.tau_min, "max_switches": self.params.max_switches,
                "alpha": self.params.alpha, "beta": self.params.beta,
                "mip_gap": self.params.mip_gap, "time_limit": self.params.time_limit,
            },
            "tariff": self.tariff.to_dict(),
            "sessions": [s.to_dict() for s in self.sessions],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> Scenario:
        grid = TimeGrid(**d.get("grid", {}))
        profile = LoadProfile(str(d["transformer_id"]), Date.fromisoformat(d["date"]),
                              np.asarray(d["base_load_kw"], dtype=float))
        return cls(
            profile=profile,
            capacity_kw=float(d["capacity_kw"]),
            charger=ChargerSpec(float(d["charger_kw"])),
            sessions=tuple(EvSession.from_dict(s) for s in d["sessions"]),
            params=CoordinationParams(**d.get("params", {})),
            tariff=TouTariff.from_dict(d["tariff"]),
            month=int(d.get("month", profile.date.month)),
            seed=int(d.get("seed", 0)),
            grid=grid,
        )


def sample_session(ev_index: int, pmf: JointCommutePmf, dists: SocDistributions,
                   ev: EvSpec, rng: np.random.Generator, grid: TimeGrid = DEFAULT_GRID,
                   fixed_away: tuple[int, int] | None = None) -> EvSession:
    if fixed_away is None:
        depart, ret = sample_away_interval(pmf, rng, grid)
    else:
        depart, ret = fixed_away
    init = sample_initial_soc(dists, rng)
    final = sample_final_soc(dists, rng)
    return EvSession(ev_index, init, final, ev.battery_kwh, frozenset(range(depart, ret)))


def make_scenario(transformer: Transformer, profile_date: Date, charger: ChargerSpec,
                  n_evs: int, pmf: JointCommutePmf | None, dists: SocDistributions,
                  params: CoordinationParams, tariff: TouTariff, seed: int, *,
                  ev: EvSpec = EvSpec(), grid: TimeGrid = DEFAULT_GRID,
                  fixed_away: tuple[int, int] | None = None) -> Scenario:
    """Sample ``n_evs`` independent sessions for one transformer-day.

    EV ``i`` draws from its own substream keyed on (seed, transformer, date,
    i), so session ``i`` is the same whatever ``n_evs`` is and whichever
    worker builds it. ``fixed_away`` replaces the PMF draw with a common
    away window, as in a fixed working-hours study.
    """
    if n_evs < 1:
        raise ValueError("n_evs must be >= 1")
    if pmf is None and fixed_away is None:
        raise ValueError("either a commute PMF or a fixed away window is required")
    profile = transformer.profile_for(profile_date)
    sessions = tuple(
        sample_session(i, pmf, dists, ev, substream(seed, transformer.id, profile_date, i),
                       grid, fixed_away)
        for i in range(n_evs))
    return Scenario(profile=profile, capacity_kw=transformer.capacity_kw, charger=charger,
                    sessions=sessions, params=params, tariff=tariff,
                    month=profile_date.month, seed=seed, grid=grid)
