"""Exhaustive reference solver for small instances.

Each EV's plans are enumerated run by run: up to ``S`` runs of length at
least ``tau_min``, on slots where the car is home and at least one charger
fits, with no run starting in the last ``tau_min`` slots of the day. Plans
are bit masks with slot 0 as the most significant bit, so integer order is
lexicographic order of the 0/1 row. Combinations are searched EV by EV;
the last EV is scanned with vectorised mask tests when ``T <= 64``.

Among optimal combinations the lexicographically smallest flattened
``kappa`` (EV-major) is returned.
"""
from __future__ import annotations

import math
import time

import numpy as np

from ..scenario import Scenario
from .types import ChargingSchedule, CoordinationResult, SolveStats, Status

TOL = 1e-6
COST_RTOL = 1e-9
MAX_COMBINATIONS = 2_000_000


class OracleSizeError(ValueError):
    """Instance too large for exhaustive enumeration."""


def _slot_limits(scenario: Scenario) -> list[int]:
    power = scenario.charger.power_kw
    out = []
    for t in range(scenario.grid.num_slots):
        room = scenario.capacity_kw - float(scenario.profile.kw[t])
        out.append(math.floor((room + TOL) / power) if room >= -TOL else -1)
    return out


def _slots_required(demand: float, slot_kwh: float) -> int:
    k = 0
    while k * slot_kwh < demand - TOL:
        k += 1
    return k


def enumerate_plans(allowed: list[bool], tau: int, max_runs: int, min_count: int,
                    prices: list[float], slot_kwh: float):
    """Yield ``(mask, cost)`` for every valid single-EV plan."""
    T = len(allowed)
    last_start = T - tau - 1
    reach = [0] * (T + 1)  # consecutive allowed slots starting at t
    for t in range(T - 1, -1, -1):
        reach[t] = reach[t + 1] + 1 if allowed[t] else 0
    prefix = [0.0]
    for p in prices:
        prefix.append(prefix[-1] + p)

    def extend(first, runs_left, mask, count, cost):
        if count >= min_count:
            yield mask, cost
        if runs_left == 0:
            return
        for a in range(first, last_start + 1):
            longest = reach[a]
            if longest < tau:
                continue
            for length in range(tau, longest + 1):
                bits = ((1 << length) - 1) << (T - a - length)
                run_cost = slot_kwh * (prefix[a + length] - prefix[a])
                yield from extend(a + length + 1, runs_left - 1, mask | bits,
                                  count + length, cost + run_cost)

    yield from extend(0, max_runs, 0, 0, 0.0)


def _decode(mask: int, T: int) -> np.ndarray:
    return np.array([(mask >> (T - 1 - t)) & 1 for t in range(T)], dtype=np.int8)


def _check_size(scenario: Scenario, plan_counts: list[int] | None = None,
                max_combinations: int = MAX_COMBINATIONS) -> None:
    N = scenario.n_evs
    T = scenario.grid.num_slots
    S = scenario.params.max_switches
    if N == 1 and (T <= 24 or (T <= 96 and S <= 2)):
        return
    if N == 2 and T <= 24:
        return
    if N >= 3 and T <= 24 and plan_counts is not None:
        if math.prod(plan_counts[:-1]) <= max_combinations:
            return
    raise OracleSizeError(
        f"instance with {N} EV(s) on {T} slots (S={S}) exceeds the enumeration bound")


def brute_force_oracle(scenario: Scenario, *,
                       max_combinations: int = MAX_COMBINATIONS) -> CoordinationResult:
    """Exact optimum by exhaustive enumeration.

    Size bound: one EV on up to 24 slots, or up to 96 slots with
    ``max_switches <= 2``; two EVs on up to 24 slots; more EVs on up to 24
    slots when the product of the first ``N - 1`` plan-list lengths stays
    under ``max_combinations``. The walk prunes on slot capacity, so a
    tightly constrained instance can afford a much larger bound.
    """
    started = time.perf_counter()
    N = scenario.n_evs
    T = scenario.grid.num_slots
    if N < 1:
        raise ValueError("scenario has no EV sessions")
    if not (N == 1 or T <= 24):
        _check_size(scenario)

    limits = _slot_limits(scenario)
    if min(limits) < 0:
        return CoordinationResult(Status.INFEASIBLE, proof_note="base load exceeds capacity",
                                  solve_stats=SolveStats(0, time.perf_counter() - started))
    prices = [float(p) for p in scenario.prices()]
    slot_kwh = scenario.charger.power_kw * scenario.grid.slot_hours
    tau, S = scenario.params.tau_min, scenario.params.max_switches

    def plans_for(session, stream=False):
        allowed = [t not in session.unavailable and limits[t] >= 1 for t in range(T)]
        need = _slots_required(session.energy_demand_kwh, slot_kwh)
        gen = enumerate_plans(allowed, tau, S, need, prices, slot_kwh)
        return gen if stream else sorted(gen)

    if N == 1:
        _check_size(scenario)
        best = None
        seen = 0
        for mask, cost in plans_for(scenario.sessions[0], stream=True):
            seen += 1
            if best is None or cost < best[1] - COST_RTOL * max(1.0, best[1]) or (
                    abs(cost - best[1]) <= COST_RTOL * max(1.0, best[1]) and mask < best[0]):
                best = (mask, cost)
        return _result(scenario, [best[0]] if best else None, seen, started)

    plan_lists = [plans_for(s) for s in scenario.sessions]
    _check_size(scenario, [len(p) for p in plan_lists], max_combinations)
    if any(not p for p in plan_lists):
        return _result(scenario, None, sum(map(len, plan_lists)), started)

    search = _CombinationSearch(plan_lists, limits, T)
    best_cost = search.optimum()
    if best_cost is None:
        return _result(scenario, None, search.visited, started)
    masks = search.lexicographic_first(best_cost)
    return _result(scenario, masks, search.visited, started)


class _CombinationSearch:
    def __init__(self, plan_lists, limits, T):
        self.T = T
        self.limits = limits
        self.visited = 0
        self.masks = [[m for m, _ in plans] for plans in plan_lists]
        self.costs = [[c for _, c in plans] for plans in plan_lists]
        self.slots = [[[t for t in range(T) if (m >> (T - 1 - t)) & 1] for m in ms]
                      for ms in self.masks]
        self.min_cost = [min(cs) for cs in self.costs]
        self.by_cost = [sorted(range(len(cs)), key=lambda i, cs=cs: cs[i]) for cs in self.costs]
        self.vector = T <= 64
        if self.vector:
            self.last_masks = np.array(self.masks[-1], dtype=np.uint64)
            self.last_costs = np.array(self.costs[-1])

    def _full_mask(self, counts) -> int:
        full = 0
        for t in range(self.T):
            if counts[t] >= self.limits[t]:
                full |= 1 << (self.T - 1 - t)
        return full

    def _last_level(self, counts, budget: float, lexicographic: bool):
        """Index of the best compatible plan of the last EV within ``budget``."""
        full = self._full_mask(counts)
        if self.vector:
            ok = (self.last_masks & np.uint64(full)) == 0
            ok &= self.last_costs <= budget
            self.visited += len(self.last_masks)
            idx = np.flatnonzero(ok)
            if idx.size == 0:
                return None
            if lexicographic:
                return int(idx[0])
            costs = self.last_costs[idx]
            return int(idx[np.argmin(costs)])
        best = None
        for i, (m, c) in enumerate(zip(self.masks[-1], self.costs[-1])):
            self.visited += 1
            if m & full or c > budget:
                continue
            if lexicographic:
                return i
            if best is None or c < self.costs[-1][best]:
                best = i
        return best

    def _walk(self, level, counts, partial, bound_fn, lexicographic, found):
        N = len(self.masks)
        rest = sum(self.min_cost[level + 1:])
        if level == N - 1:
            budget = bound_fn() - partial
            i = self._last_level(counts, budget, lexicographic)
            if i is not None:
                found(partial + self.costs[-1][i], level, i)
                return True
            return False
        full = self._full_mask(counts)
        order = range(len(self.masks[level])) if lexicographic else self.by_cost[level]
        for i in order:
            m, c = self.masks[level][i], self.costs[level][i]
            self.visited += 1
            if m & full:
                continue
            if partial + c + rest > bound_fn():
                if lexicographic:
                    continue
                break
            for t in self.slots[level][i]:
                counts[t] += 1
            self.path[level] = i
            hit = self._walk(level + 1, counts, partial + c, bound_fn, lexicographic, found)
            for t in self.slots[level][i]:
                counts[t] -= 1
            if hit and lexicographic:
                return True
        return False

    def optimum(self) -> float | None:
        self.path = [0] * len(self.masks)
        state = {"best": math.inf}

        def bound():
            b = state["best"]
            return b - COST_RTOL * max(1.0, b) if b < math.inf else math.inf

        def found(cost, level, i):
            if cost < state["best"]:
                state["best"] = cost

        self._walk(0, [0] * self.T, 0.0, bound, False, found)
        return None if state["best"] == math.inf else state["best"]

    def lexicographic_first(self, optimum: float) -> list[int]:
        self.path = [0] * len(self.masks)
        limit = optimum + COST_RTOL * max(1.0, optimum)
        chosen: list[int] = []

        def found(cost, level, i):
            chosen.extend(self.masks[lv][self.path[lv]] for lv in range(level))
            chosen.append(self.masks[-1][i])

        self._walk(0, [0] * self.T, 0.0, lambda: limit, True, found)
        return chosen


def _result(scenario, masks, visited, started) -> CoordinationResult:
    stats = SolveStats(visited, time.perf_counter() - started)
    if masks is None:
        return CoordinationResult(Status.INFEASIBLE, proof_note="exhaustive enumeration",
                                  solve_stats=stats)
    T = scenario.grid.num_slots
    kappa = np.vstack([_decode(m, T) for m in masks])
    schedule = ChargingSchedule.from_kappa(kappa, scenario)
    return CoordinationResult(Status.FEASIBLE, schedule, proof_note="exhaustive enumeration",
                              solve_stats=stats, objective_cents=schedule.total_cost_cents)
