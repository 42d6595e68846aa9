"""Exact single-EV scheduling by dynamic programming over run placements.

For one EV the feasible plans are exactly the 0/1 strings in which

* every maximal run of ones has length >= ``tau``,
* a run may only start at a slot ``t <= T - tau - 1``,
* there are at most ``S`` runs,
* ones appear only on allowed slots, and
* at least ``K`` slots are on.

The cost-to-go table is built backward over slots, so the forward
reconstruction can prefer "off" on ties and return the lexicographically
smallest optimal plan.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INF = np.int64(1) << np.int64(60)


@dataclass(frozen=True)
class RunPlan:
    kappa: np.ndarray  # int8, length T
    cost: int


def slots_needed(demand_kwh: float, slot_energy_kwh: float, tol: float = 1e-6) -> int:
    """Smallest slot count whose energy covers ``demand_kwh`` (within ``tol``)."""
    if demand_kwh <= tol:
        return 0
    return int(np.ceil((demand_kwh - tol) / slot_energy_kwh))


def best_plan(costs: np.ndarray, allowed: np.ndarray, need: int, tau: int,
              max_runs: int) -> RunPlan | None:
    """Cheapest feasible plan, or ``None`` if none exists.

    ``costs`` are non-negative integers; ties are broken toward the
    lexicographically smallest 0/1 string.
    """
    T = len(costs)
    if need == 0:
        return RunPlan(np.zeros(T, dtype=np.int8), 0)
    if need > T:
        return None
    K, S = need, max_runs
    last_start = T - tau - 1
    costs = np.asarray(costs, dtype=np.int64)

    # G[t][r, j, c]: min cost of slots t.. given run length r (capped at tau,
    # 0 = off) ending at t-1, j runs started, c slots on (capped at K).
    G = np.full((T + 1, tau + 1, S + 1, K + 1), INF, dtype=np.int64)
    G[T, 0, :, K] = 0
    G[T, tau, :, K] = 0
    for t in range(T - 1, -1, -1):
        nxt = G[t + 1]
        cur = G[t]
        # off: only from off or from a completed run
        cur[0] = nxt[0]
        cur[tau] = nxt[0]
        if allowed[t]:
            w = costs[t]
            # on-value indexed by the count *before* taking slot t
            on = np.empty((tau + 1, S + 1, K + 1), dtype=np.int64)
            on[:, :, :K] = nxt[:, :, 1:]
            on[:, :, K] = nxt[:, :, K]
            on = np.minimum(on + w, INF)
            # continue a run
            for r in range(1, tau + 1):
                cont = on[min(r + 1, tau)]
                cur[r] = np.minimum(cur[r], cont) if r == tau else cont
            # start a run
            if t <= last_start:
                start = np.full((S + 1, K + 1), INF, dtype=np.int64)
                start[:S] = on[1, 1:]
                cur[0] = np.minimum(cur[0], start)
        else:
            cur[1:tau] = INF
    best = int(G[0, 0, 0, 0])
    if best >= INF:
        return None

    kappa = np.zeros(T, dtype=np.int8)
    r = j = c = 0
    for t in range(T):
        target = int(G[t, r, j, c])
        if r in (0, tau) and int(G[t + 1, 0, j, c]) == target:
            r = 0
            continue
        kappa[t] = 1
        c = min(c + 1, K)
        if r == 0:
            j += 1
            r = 1
        else:
            r = min(r + 1, tau)
    return RunPlan(kappa, best)


def usable_slots(allowed: np.ndarray, tau: int) -> np.ndarray:
    """Allowed slots that belong to at least one valid run of length ``tau``."""
    T = len(allowed)
    last_start = T - tau - 1
    out = np.zeros(T, dtype=bool)
    t = 0
    while t < T:
        if not allowed[t]:
            t += 1
            continue
        s = t
        while t < T and allowed[t]:
            t += 1
        if s <= min(t - tau, last_start):
            out[s:t] = True
    return out
