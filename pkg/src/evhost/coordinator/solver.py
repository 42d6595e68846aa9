"""Exact solution of the coordination problem.

``solve`` settles most instances without branch and bound:

1. base load above capacity, or an EV that cannot meet its demand even
   alone, is a direct infeasibility certificate;
2. a greedy pass schedules EVs one at a time with the exact single-EV
   dynamic program, each on the capacity the earlier ones left over;
3. the greedy plan is accepted as optimal only when its cost matches a
   valid lower bound: the sum of independent single-EV optima, or the
   transportation relaxation that keeps per-slot capacity but drops the run
   structure (whose infeasibility is itself a certificate).

Whatever remains goes to HiGHS on the full ILP from ``build_ilp``. Every
``Feasible`` answer is re-checked by the independent verifier.
"""
from __future__ import annotations

import logging
import time

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from ..scenario import Scenario
from .ilp import build_ilp
from .runs import best_plan, slots_needed, usable_slots
from .types import ChargingSchedule, CoordinationResult, SolveStats, Status
from .verify import verify_schedule

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
PRICE_RESOLUTION = 10**9  # integer cost units per maximum price
PRESSURE_WEIGHT = 10**6   # must exceed any total congestion tie-break score


class SolverError(RuntimeError):
    """The solver produced a schedule that fails independent verification."""


def slot_capacity(scenario: Scenario) -> np.ndarray:
    """How many chargers fit on top of the base load in each slot."""
    room = scenario.headroom()
    return np.floor((room + FEAS_TOL) / scenario.charger.power_kw).clip(min=0).astype(np.int64)


def integer_costs(prices: np.ndarray) -> np.ndarray:
    # scale-free: multiplying all prices by a constant gives the same integers
    return np.rint(prices / prices.max() * PRICE_RESOLUTION).astype(np.int64)


class _Instance:
    """Per-scenario data shared by the fast-path stages."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        T = scenario.grid.num_slots
        self.N = scenario.n_evs
        self.T = T
        self.tau = scenario.params.tau_min
        self.S = scenario.params.max_switches
        self.cap = slot_capacity(scenario)
        self.q = integer_costs(scenario.prices())
        slot_kwh = scenario.charger.power_kw * scenario.grid.slot_hours
        self.need = np.array([slots_needed(s.energy_demand_kwh, slot_kwh)
                              for s in scenario.sessions], dtype=np.int64)
        self.home = np.ones((self.N, T), dtype=bool)
        for n, s in enumerate(scenario.sessions):
            self.home[n, sorted(s.unavailable)] = False

    def allowed(self, n: int, residual: np.ndarray) -> np.ndarray:
        return self.home[n] & (residual >= 1)

    def cost_of(self, kappa: np.ndarray) -> int:
        return int((kappa.astype(np.int64) * self.q).sum())


def _solo_plans(inst: _Instance):
    plans = []
    for n in range(inst.N):
        plan = best_plan(inst.q, inst.allowed(n, inst.cap), int(inst.need[n]), inst.tau, inst.S)
        if plan is None:
            return n, None
        plans.append(plan)
    return None, plans


def _greedy(inst: _Instance, order: list[int], costs: np.ndarray) -> np.ndarray | None:
    residual = inst.cap.copy()
    kappa = np.zeros((inst.N, inst.T), dtype=np.int8)
    usable = [max(1, int(usable_slots(inst.allowed(n, inst.cap), inst.tau).sum()))
              for n in range(inst.N)]
    pending = list(order)
    while pending:
        n = pending.pop(0)
        # congestion score: how much the still-unscheduled EVs lean on each slot
        pressure = np.zeros(inst.T)
        for m in pending:
            pressure += inst.home[m] * (inst.need[m] / usable[m])
        pressure = np.rint(1000 * pressure / np.maximum(residual, 1)).astype(np.int64)
        w = costs * PRESSURE_WEIGHT + pressure
        plan = best_plan(w, inst.allowed(n, residual), int(inst.need[n]), inst.tau, inst.S)
        if plan is None:
            return None
        kappa[n] = plan.kappa
        residual -= plan.kappa
    return kappa


def _improve(inst: _Instance, kappa: np.ndarray, max_passes: int = 10) -> np.ndarray:
    """Re-plan one EV at a time against the others until no EV gets cheaper."""
    kappa = kappa.copy()
    load = kappa.sum(axis=0).astype(np.int64)
    for _ in range(max_passes):
        changed = False
        for n in range(inst.N):
            residual = inst.cap - load + kappa[n]
            plan = best_plan(inst.q, inst.allowed(n, residual), int(inst.need[n]), inst.tau, inst.S)
            if plan is not None and plan.cost < inst.cost_of(kappa[n]):
                load += plan.kappa - kappa[n]
                kappa[n] = plan.kappa
                changed = True
        if not changed:
            break
    return kappa


def _orderings(inst: _Instance) -> list[list[int]]:
    slack = [int(usable_slots(inst.allowed(n, inst.cap), inst.tau).sum()) - int(inst.need[n])
             for n in range(inst.N)]
    orders = [sorted(range(inst.N), key=lambda n: (slack[n], n)),
              sorted(range(inst.N), key=lambda n: (-inst.need[n], n)),
              list(range(inst.N))]
    unique = []
    for o in orders:
        if o not in unique:
            unique.append(o)
    return unique


def _transport_bound(inst: _Instance):
    """Relaxation without run structure: (optimal value, slot prices) or None if infeasible.

    The slot prices are the capacity-row duals in integer cost units.
    """
    zero = np.zeros(inst.T, dtype=np.int64)
    cols = []
    for n in range(inst.N):
        if inst.need[n] == 0:
            continue
        for t in np.flatnonzero(usable_slots(inst.allowed(n, inst.cap), inst.tau)):
            cols.append((n, int(t)))
    demand_evs = [n for n in range(inst.N) if inst.need[n] > 0]
    if not demand_evs:
        return 0.0, zero
    if not cols:
        return None
    n_idx = np.array([n for n, _ in cols])
    t_idx = np.array([t for _, t in cols])
    j = np.arange(len(cols))
    ev_row = {n: i for i, n in enumerate(demand_evs)}
    # -sum_t x[n,t] <= -max(need, tau) ; sum_n x[n,t] <= cap[t]
    A_ev = sparse.csr_matrix((-np.ones(len(cols)), ([ev_row[n] for n in n_idx], j)),
                             shape=(len(demand_evs), len(cols)))
    A_slot = sparse.csr_matrix((np.ones(len(cols)), (t_idx, j)), shape=(inst.T, len(cols)))
    b_ev = -np.array([max(int(inst.need[n]), inst.tau) for n in demand_evs], dtype=float)
    res = linprog(inst.q[t_idx] / PRICE_RESOLUTION,
                  A_ub=sparse.vstack([A_ev, A_slot]).tocsr(),
                  b_ub=np.concatenate([b_ev, inst.cap.astype(float)]),
                  bounds=(0, 1), method="highs")
    if res.status == 2:
        return None
    if res.status != 0:
        return -np.inf, zero
    duals = -res.ineqlin.marginals[len(demand_evs):] * PRICE_RESOLUTION
    return float(res.fun) * PRICE_RESOLUTION, np.rint(np.clip(duals, 0, None)).astype(np.int64)


def _fast_path(inst: _Instance):
    """Returns (status, kappa or None, note) or None when undecided."""
    bad, plans = _solo_plans(inst)
    if bad is not None:
        return Status.INFEASIBLE, None, (
            f"EV {inst.scenario.sessions[bad].ev_index} cannot collect {inst.need[bad]} slots "
            "within its availability and the spare capacity, even alone")
    solo_bound = sum(p.cost for p in plans)
    solo = np.vstack([p.kappa for p in plans])
    if np.all(solo.sum(axis=0) <= inst.cap):
        # each row is its EV's lexicographically smallest optimum, so the
        # stack is the smallest optimal kappa overall
        return Status.FEASIBLE, solo, "optimal: independent single-EV optima fit together"

    best = None

    def attempt(costs):
        nonlocal best
        for order in _orderings(inst):
            kappa = _greedy(inst, order, costs)
            if kappa is None:
                continue
            kappa = _improve(inst, kappa)
            cost = inst.cost_of(kappa)
            if best is None or cost < best[0]:
                best = (cost, kappa)

    attempt(inst.q)
    if best is not None and best[0] <= solo_bound:
        return Status.FEASIBLE, best[1], "optimal: matches the independent single-EV bound"

    relaxed = _transport_bound(inst)
    if relaxed is None:
        return Status.INFEASIBLE, None, (
            "spare capacity cannot cover the combined demand even without run constraints")
    bound, duals = relaxed
    tol = inst.scenario.params.mip_gap * max(abs(bound), 1.0)
    if best is None or best[0] > bound + tol:
        # steer the greedy away from the slots the relaxation finds congested
        attempt(inst.q + duals)
    if best is not None and best[0] <= bound + tol:
        return Status.FEASIBLE, best[1], "optimal: matches the transportation bound"
    return None


def _milp(scenario: Scenario, started: float) -> CoordinationResult:
    model = build_ilp(scenario)
    scale = float(model.c.max()) if model.c.size and model.c.max() > 0 else 1.0
    c = np.round(model.c / scale, 12)
    params = scenario.params
    remaining = max(params.time_limit - (time.perf_counter() - started), 1e-3)
    res = milp(
        c,
        constraints=LinearConstraint(model.A, model.row_lb, model.row_ub),
        integrality=np.ones(model.n_vars),
        bounds=Bounds(model.var_lb, model.var_ub),
        options={"time_limit": remaining, "mip_rel_gap": params.mip_gap,
                 "presolve": True, "disp": False},
    )
    stats = SolveStats(int(getattr(res, "mip_node_count", 0) or 0),
                       time.perf_counter() - started)
    if res.status == 0:
        N, T = model.n_evs, model.num_slots
        kappa = np.rint(res.x[:N * T]).reshape(N, T).astype(np.int8)
        return CoordinationResult(Status.FEASIBLE, ChargingSchedule.from_kappa(kappa, scenario),
                                  proof_note=f"HiGHS: {res.message}", solve_stats=stats,
                                  objective_cents=float(res.fun) * scale)
    if res.status == 2:
        return CoordinationResult(Status.INFEASIBLE, proof_note=f"HiGHS: {res.message}",
                                  solve_stats=stats)
    return CoordinationResult(Status.UNRESOLVED, proof_note=f"HiGHS: {res.message}",
                              solve_stats=stats)


def solve(scenario: Scenario, *, fast_path: bool = True) -> CoordinationResult:
    """Minimum-cost schedule for every EV of ``scenario``, or a verdict.

    ``Infeasible`` is returned only with a proof; ``Unresolved`` means the
    time limit expired first. ``fast_path=False`` sends the instance straight
    to the ILP solver.
    """
    started = time.perf_counter()
    room = scenario.headroom()
    worst = int(np.argmin(room))
    if room[worst] < -FEAS_TOL:
        return CoordinationResult(
            Status.INFEASIBLE,
            proof_note=f"base load {scenario.profile.kw[worst]:.3f} kW exceeds capacity "
                       f"{scenario.capacity_kw:.3f} kW at slot {worst}",
            solve_stats=SolveStats(0, time.perf_counter() - started))

    result = None
    if fast_path:
        decided = _fast_path(_Instance(scenario))
        if decided is not None:
            status, kappa, note = decided
            stats = SolveStats(0, time.perf_counter() - started)
            if status is Status.FEASIBLE:
                schedule = ChargingSchedule.from_kappa(kappa, scenario)
                result = CoordinationResult(status, schedule, note, stats,
                                            objective_cents=schedule.total_cost_cents)
            else:
                result = CoordinationResult(status, None, note, stats)
    if result is None:
        result = _milp(scenario, started)

    if result.schedule is not None:
        problems = verify_schedule(scenario, result.schedule)
        if problems:
            raise SolverError(f"solver output violates {len(problems)} constraint(s): "
                              f"{problems[:3]}")
    return result
