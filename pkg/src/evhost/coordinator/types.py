"""Result types shared by the solver, the verifier and the oracle."""
from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..scenario import Scenario


class Status(str, enum.Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    UNRESOLVED = "Unresolved"

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class ChargingSchedule:
    """Binary on/off plan ``kappa[n, t]`` with its derived quantities."""

    kappa: np.ndarray
    aggregate_kw: np.ndarray
    delivered_kwh: np.ndarray
    total_cost_cents: float

    @classmethod
    def from_kappa(cls, kappa, scenario: Scenario) -> ChargingSchedule:
        k = np.asarray(kappa).astype(np.int8)
        if k.shape != (scenario.n_evs, scenario.grid.num_slots):
            raise ValueError(f"kappa shape {k.shape} does not match the scenario")
        nu = scenario.charger.power_kw
        dt = scenario.grid.slot_hours
        k.setflags(write=False)
        agg = nu * k.sum(axis=0)
        delivered = nu * dt * k.sum(axis=1)
        cost = float(nu * dt * (k * scenario.prices()).sum())
        return cls(k, agg, delivered, cost)

    def __eq__(self, other):
        if not isinstance(other, ChargingSchedule):
            return NotImplemented
        return np.array_equal(self.kappa, other.kappa)

    def restrict(self, keep: list[int], scenario: Scenario) -> ChargingSchedule:
        """The same plan for a subset of EVs (rows ``keep``), re-derived on ``scenario``."""
        return ChargingSchedule.from_kappa(self.kappa[keep], scenario)

    def write_csv(self, path: str | Path, ev_indices=None) -> None:
        ids = list(ev_indices) if ev_indices is not None else list(range(self.kappa.shape[0]))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ev_index", "slot", "kappa"])
            for row, ev in enumerate(ids):
                for t, v in enumerate(self.kappa[row]):
                    w.writerow([ev, t, int(v)])


@dataclass(frozen=True, eq=False)
class SwitchIndicators:
    omega: np.ndarray

    @classmethod
    def from_kappa(cls, kappa) -> SwitchIndicators:
        k = np.asarray(kappa, dtype=np.int8)
        omega = np.zeros_like(k)
        omega[:, 0] = k[:, 0]
        omega[:, 1:] = (k[:, 1:] == 1) & (k[:, :-1] == 0)
        return cls(omega)

    def turn_ons(self) -> np.ndarray:
        return self.omega.sum(axis=1)


@dataclass(frozen=True)
class SolveStats:
    nodes_explored: int = 0
    wall_time: float = 0.0


@dataclass(frozen=True)
class CoordinationResult:
    status: Status
    schedule: ChargingSchedule | None = None
    proof_note: str = ""
    solve_stats: SolveStats = field(default_factory=SolveStats)
    objective_cents: float | None = None

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE

    @property
    def cost_cents(self) -> float | None:
        return None if self.schedule is None else self.schedule.total_cost_cents

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "cost_cents": self.cost_cents,
            "objective_cents": self.objective_cents,
            "proof_note": self.proof_note,
            "stats": {"nodes_explored": self.solve_stats.nodes_explored,
                      "wall_time": round(self.solve_stats.wall_time, 6)},
        }

    def write_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
