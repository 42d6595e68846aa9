"""Independent constraint checker for charging schedules.

Deliberately written against the raw scenario fields with plain loops; it
shares no helpers with the ILP builder or the solver so that it can catch
their mistakes.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..scenario import Scenario

TOL = 1e-6


@dataclass(frozen=True)
class Violation:
    constraint: str  # capacity | demand | availability | run_length | switch_budget
    ev: int | None
    slot: int | None
    detail: str

    def __str__(self):
        where = []
        if self.ev is not None:
            where.append(f"EV {self.ev}")
        if self.slot is not None:
            where.append(f"slot {self.slot}")
        return f"{self.constraint} ({', '.join(where) or 'global'}): {self.detail}"


def verify_schedule(scenario: Scenario, schedule) -> list[Violation]:
    """Every broken constraint of ``schedule`` on ``scenario``; empty if valid.

    Checks transformer capacity per slot, energy delivered per EV,
    availability, minimum run length and the turn-on budget (the first slot
    of the day counts as a turn-on when charging).
    """
    kappa = [[int(v) for v in row] for row in schedule.kappa]
    n_evs = len(scenario.sessions)
    n_slots = scenario.grid.num_slots
    if len(kappa) != n_evs or any(len(row) != n_slots for row in kappa):
        raise ValueError("schedule dimensions do not match the scenario")

    power = scenario.charger.power_kw
    hours = scenario.grid.slot_hours
    tau = scenario.params.tau_min
    budget = scenario.params.max_switches
    out: list[Violation] = []

    for t in range(n_slots):
        for n in range(n_evs):
            if kappa[n][t] not in (0, 1):
                out.append(Violation("binary", n, t, f"kappa={kappa[n][t]}"))

    for t in range(n_slots):
        load = float(scenario.profile.kw[t]) + power * sum(kappa[n][t] for n in range(n_evs))
        if load > scenario.capacity_kw + TOL:
            out.append(Violation("capacity", None, t,
                                 f"{load:.3f} kW > {scenario.capacity_kw:.3f} kW"))

    for n, session in enumerate(scenario.sessions):
        row = kappa[n]
        delivered = power * hours * sum(row)
        if delivered < session.energy_demand_kwh - TOL:
            out.append(Violation("demand", n, None,
                                 f"{delivered:.3f} kWh < {session.energy_demand_kwh:.3f} kWh"))
        for t in sorted(session.unavailable):
            if row[t]:
                out.append(Violation("availability", n, t, "charging while away"))
        turn_ons = 0
        t = 0
        while t < n_slots:
            if row[t] != 1:
                t += 1
                continue
            start = t
            while t < n_slots and row[t] == 1:
                t += 1
            turn_ons += 1
            if t - start < tau:
                out.append(Violation("run_length", n, start,
                                     f"run of {t - start} slot(s) < {tau}"))
        if turn_ons > budget:
            out.append(Violation("switch_budget", n, None, f"{turn_ons} turn-ons > {budget}"))
    return out
