"""Integer linear program for cost-optimal coordinated charging.

Decision variables, flattened EV-major:

* ``kappa[n, t]`` (columns ``n*T + t``): EV ``n`` charges during slot ``t``.
* ``omega[n, t]`` (columns ``N*T + n*T + t``): EV ``n`` turns on at slot ``t``.

Rows, by group name:

* ``capacity``       sum_n nu*kappa[n,t] <= C_max - base[t]
* ``switch_upper``   kappa[t-1] - kappa[t] + alpha*omega[t] <= alpha - beta
* ``switch_lower``   kappa[t-1] - kappa[t] + alpha*omega[t] >= 0
* ``switch_initial`` omega[0] = kappa[0]
* ``run_start``      kappa[0] <= kappa[t]                     t < tau_min
* ``run_length``     kappa[t] - kappa[t-1] <= kappa[t+i]      0 < i < tau_min
* ``run_end``        kappa[t] >= kappa[t+1]                   T-tau_min-1 <= t <= T-2
* ``switch_budget``  sum_t omega[n,t] <= S
* ``demand``         nu*dt*sum_t kappa[n,t] >= D_n

Away slots are fixed through variable upper bounds rather than rows.
Objective coefficients are ``nu*dt*price[t]`` in cents.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ..scenario import Scenario


@dataclass(frozen=True, eq=False)
class IlpModel:
    c: np.ndarray
    A: sparse.csr_matrix
    row_lb: np.ndarray
    row_ub: np.ndarray
    var_lb: np.ndarray
    var_ub: np.ndarray
    n_evs: int
    num_slots: int
    row_groups: dict[str, tuple[int, int]]

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def rows(self, group: str) -> int:
        start, stop = self.row_groups.get(group, (0, 0))
        return stop - start

    def kappa_index(self, n: int, t: int) -> int:
        return n * self.num_slots + t

    def omega_index(self, n: int, t: int) -> int:
        return (self.n_evs + n) * self.num_slots + t

    def fixed_to_zero(self) -> int:
        return int(np.count_nonzero(self.var_ub == 0))


class _RowBuilder:
    def __init__(self):
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.groups: dict[str, tuple[int, int]] = {}
        self._open: tuple[str, int] | None = None

    def begin(self, name: str):
        self._open = (name, len(self.lb))

    def end(self):
        name, start = self._open
        self.groups[name] = (start, len(self.lb))

    def add(self, terms, lo, hi):
        r = len(self.lb)
        for col, val in terms:
            self.rows.append(r)
            self.cols.append(col)
            self.vals.append(val)
        self.lb.append(lo)
        self.ub.append(hi)

    def matrix(self, n_cols: int) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.lb), n_cols))


def build_ilp(scenario: Scenario) -> IlpModel:
    N = scenario.n_evs
    if N < 1:
        raise ValueError("scenario has no EV sessions")
    T = scenario.grid.num_slots
    dt = scenario.grid.slot_hours
    nu = scenario.charger.power_kw
    p = scenario.params
    tau = p.tau_min
    alpha, beta = p.alpha, p.beta
    inf = np.inf

    def k(n, t):
        return n * T + t

    def w(n, t):
        return (N + n) * T + t

    c = np.zeros(2 * N * T)
    for n in range(N):
        c[n * T:(n + 1) * T] = nu * dt * scenario.prices()

    b = _RowBuilder()
    room = scenario.headroom()

    b.begin("capacity")
    for t in range(T):
        b.add([(k(n, t), nu) for n in range(N)], -inf, room[t])
    b.end()

    b.begin("switch_upper")
    for n in range(N):
        for t in range(1, T):
            b.add([(k(n, t - 1), 1.0), (k(n, t), -1.0), (w(n, t), alpha)], -inf, alpha - beta)
    b.end()

    b.begin("switch_lower")
    for n in range(N):
        for t in range(1, T):
            b.add([(k(n, t - 1), 1.0), (k(n, t), -1.0), (w(n, t), alpha)], 0.0, inf)
    b.end()

    b.begin("switch_initial")
    for n in range(N):
        b.add([(w(n, 0), 1.0), (k(n, 0), -1.0)], 0.0, 0.0)
    b.end()

    b.begin("run_start")
    for n in range(N):
        for t in range(1, tau):
            b.add([(k(n, 0), 1.0), (k(n, t), -1.0)], -inf, 0.0)
    b.end()

    b.begin("run_length")
    for n in range(N):
        for t in range(1, T - tau + 1):
            for i in range(1, tau):
                b.add([(k(n, t), 1.0), (k(n, t - 1), -1.0), (k(n, t + i), -1.0)], -inf, 0.0)
    b.end()

    b.begin("run_end")
    for n in range(N):
        for t in range(max(0, T - tau - 1), T - 1):
            b.add([(k(n, t + 1), 1.0), (k(n, t), -1.0)], -inf, 0.0)
    b.end()

    b.begin("switch_budget")
    for n in range(N):
        b.add([(w(n, t), 1.0) for t in range(T)], -inf, float(p.max_switches))
    b.end()

    b.begin("demand")
    for n, s in enumerate(scenario.sessions):
        b.add([(k(n, t), nu * dt) for t in range(T)], s.energy_demand_kwh, inf)
    b.end()

    var_ub = np.ones(2 * N * T)
    for n, s in enumerate(scenario.sessions):
        for t in s.unavailable:
            var_ub[k(n, t)] = 0.0

    return IlpModel(
        c=c, A=b.matrix(2 * N * T), row_lb=np.array(b.lb), row_ub=np.array(b.ub),
        var_lb=np.zeros(2 * N * T), var_ub=var_ub, n_evs=N, num_slots=T,
        row_groups=b.groups)
