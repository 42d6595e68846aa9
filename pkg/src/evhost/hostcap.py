"""Hosting-capacity search and Monte Carlo campaigns over a feeder.

For every (transformer, month, charger power, scenario index) the engine
samples the desired number of EVs once and drops the last one until the
coordination problem becomes feasible. The resulting records are grouped
into the Infeasible / Less / Desired / Unresolved percentages of a
hosting-capacity table.
"""
from __future__ import annotations

import enum
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date as Date
from typing import Iterable, Sequence

from .coordinator import CoordinationResult, Status, solve
from .core import (
    DEFAULT_GRID,
    ChargerSpec,
    CoordinationParams,
    EvSpec,
    TimeGrid,
    TouTariff,
    Transformer,
    check_months,
    desired_ev_count,
)
from .scenario import JointCommutePmf, SocDistributions, derive_seed, make_scenario

log = logging.getLogger(__name__)


class Outcome(str, enum.Enum):
    INFEASIBLE = "Infeasible"
    LESS = "LessThanDesired"
    DESIRED = "Desired"
    UNRESOLVED = "Unresolved"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class EvaluationRecord:
    """Outcome of the hosting-capacity search for one scenario.

    For ``Unresolved`` records ``supported_ev`` is the largest count that was
    proven feasible (a lower bound), or 0.
    """

    transformer_id: str
    date: Date
    charger_power_kw: float
    desired_ev: int
    supported_ev: int
    status: Outcome
    scenario_seed: int
    cost_cents: float | None = None
    scenario_index: int = 0
    customer_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "status", Outcome(self.status))
        if not 0 <= self.supported_ev <= self.desired_ev:
            raise ValueError("supported_ev must lie in [0, desired_ev]")
        if self.status is Outcome.UNRESOLVED:
            return
        expected = (Outcome.INFEASIBLE if self.supported_ev == 0 else
                    Outcome.DESIRED if self.supported_ev == self.desired_ev else Outcome.LESS)
        if self.status is not expected:
            raise ValueError(f"status {self.status} inconsistent with "
                             f"{self.supported_ev}/{self.desired_ev} EVs")

    @property
    def month(self) -> int:
        return self.date.month

    def sort_key(self):
        return (self.transformer_id, self.month, self.charger_power_kw, self.scenario_index)


@dataclass(frozen=True)
class AggregateStats:
    """One table row: outcome shares of a (transformer, month, power) group.

    The four percentages are taken over all scenarios of the group, so they
    add up to 100. ``renormalized`` gives the three outcome shares over the
    resolved scenarios only.
    """

    transformer_id: str
    customer_count: int
    desired_ev: int
    charger_power_kw: float
    month: int
    n_scenarios: int
    pct_infeasible: float
    pct_less: float
    pct_desired: float
    pct_unresolved: float
    counts: tuple[int, int, int, int] = field(default=(0, 0, 0, 0), compare=False)

    @property
    def confidence_rate(self) -> float:
        return self.pct_desired

    def renormalized(self) -> tuple[float, float, float]:
        infeasible, less, desired, _ = self.counts
        resolved = infeasible + less + desired
        if resolved == 0:
            return (0.0, 0.0, 0.0)
        return tuple(100.0 * c / resolved for c in (infeasible, less, desired))


def max_supported_evs(transformer: Transformer, day: Date, charger: ChargerSpec,
                      pmf: JointCommutePmf | None, dists: SocDistributions,
                      params: CoordinationParams, tariff: TouTariff, seed: int, *,
                      ev: EvSpec = EvSpec(), grid: TimeGrid = DEFAULT_GRID,
                      fixed_away: tuple[int, int] | None = None,
                      scenario_index: int = 0) -> EvaluationRecord:
    """Largest number of the sampled EVs the transformer can serve on ``day``.

    Sessions for the desired count are drawn once; each smaller trial keeps
    the first ``n`` of them. A timeout on a count above the answer makes the
    record ``Unresolved``.
    """
    desired = desired_ev_count(transformer.customer_count)
    full = make_scenario(transformer, day, charger, desired, pmf, dists, params, tariff, seed,
                         ev=ev, grid=grid, fixed_away=fixed_away)
    supported = 0
    unresolved = False
    best: CoordinationResult | None = None
    for n in range(desired, 0, -1):
        result = solve(full.with_sessions(full.sessions[:n]))
        if result.status is Status.FEASIBLE:
            supported, best = n, result
            break
        if result.status is Status.UNRESOLVED:
            log.warning("transformer %s %s: %d EVs unresolved (%s)", transformer.id,
                        day.isoformat(), n, result.proof_note)
            unresolved = True

    if unresolved:
        status = Outcome.UNRESOLVED
    elif supported == 0:
        status = Outcome.INFEASIBLE
    elif supported == desired:
        status = Outcome.DESIRED
    else:
        status = Outcome.LESS
    return EvaluationRecord(
        transformer_id=transformer.id, date=day, charger_power_kw=charger.power_kw,
        desired_ev=desired, supported_ev=supported, status=status, scenario_seed=seed,
        cost_cents=None if best is None else round(best.cost_cents, 6),
        scenario_index=scenario_index, customer_count=transformer.customer_count)


@dataclass(frozen=True)
class CampaignSettings:
    """Everything a worker needs besides the work item itself."""

    pmf: JointCommutePmf | None
    dists: SocDistributions
    params: CoordinationParams
    tariff: TouTariff
    ev: EvSpec = EvSpec()
    grid: TimeGrid = DEFAULT_GRID
    fixed_away: tuple[int, int] | None = None


def campaign_seed(master_seed: int, transformer_id: str, month: int, power_kw: float,
                  index: int) -> int:
    return derive_seed(master_seed, transformer_id, month, float(power_kw), index)


def _work_items(feeder, months, powers, n_scenarios, master_seed):
    for tr in feeder:
        for month in months:
            days = [p.date for p in tr.profiles_in_month(month)]
            if not days and n_scenarios > 0:
                raise ValueError(f"transformer {tr.id} has no profile in month {month}")
            for power in powers:
                for i in range(n_scenarios):
                    seed = campaign_seed(master_seed, tr.id, month, power, i)
                    yield tr.id, days[i % len(days)], float(power), seed, i


_worker_state: dict = {}


def _init_worker(feeder: dict, settings: CampaignSettings):
    _worker_state["feeder"] = feeder
    _worker_state["settings"] = settings


def _evaluate(item) -> EvaluationRecord:
    tid, day, power, seed, index = item
    st: CampaignSettings = _worker_state["settings"]
    return max_supported_evs(_worker_state["feeder"][tid], day, ChargerSpec(power), st.pmf,
                             st.dists, st.params, st.tariff, seed, ev=st.ev, grid=st.grid,
                             fixed_away=st.fixed_away, scenario_index=index)


def run_campaign(feeder: Sequence[Transformer], months: Sequence[int],
                 powers: Sequence[float], n_scenarios: int, master_seed: int,
                 settings: CampaignSettings, *, workers: int | None = None,
                 progress=None) -> list[EvaluationRecord]:
    """Evaluate every (transformer, month, power, index) combination.

    Profile dates cycle through the month's available days. Each item's seed
    depends only on its own coordinates, so the records (returned in
    canonical order) do not depend on ``workers``.
    """
    check_months(months)
    if n_scenarios < 0:
        raise ValueError("n_scenarios must be >= 0")
    ids = [t.id for t in feeder]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate transformer ids in feeder")
    items = list(_work_items(feeder, months, powers, n_scenarios, master_seed))
    if not items:
        return []
    by_id = {t.id: t for t in feeder}
    workers = workers or os.cpu_count() or 1

    records: list[EvaluationRecord] = []
    if workers == 1:
        _init_worker(by_id, settings)
        for item in items:
            records.append(_evaluate(item))
            if progress:
                progress(len(records), len(items))
    else:
        chunk = max(1, len(items) // (workers * 8))
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(by_id, settings)) as pool:
            for rec in pool.map(_evaluate, items, chunksize=chunk):
                records.append(rec)
                if progress:
                    progress(len(records), len(items))
    records.sort(key=EvaluationRecord.sort_key)
    return records


def aggregate(records: Iterable[EvaluationRecord]) -> list[AggregateStats]:
    """Outcome percentages per (transformer, month, power), sorted by transformer."""
    groups: dict[tuple, list[EvaluationRecord]] = {}
    for r in records:
        groups.setdefault((r.transformer_id, r.month, r.charger_power_kw), []).append(r)
    if not groups:
        raise ValueError("no records to aggregate")
    order = (Outcome.INFEASIBLE, Outcome.LESS, Outcome.DESIRED, Outcome.UNRESOLVED)
    out = []
    for (tid, month, power), recs in sorted(groups.items()):
        counts = tuple(sum(r.status is o for r in recs) for o in order)
        pct = [100.0 * c / len(recs) for c in counts]
        out.append(AggregateStats(
            transformer_id=tid, customer_count=recs[0].customer_count,
            desired_ev=recs[0].desired_ev, charger_power_kw=power, month=month,
            n_scenarios=len(recs), pct_infeasible=pct[0], pct_less=pct[1],
            pct_desired=pct[2], pct_unresolved=pct[3], counts=counts))
    return out


def flag_upgrades(stats: Iterable[AggregateStats], threshold_pct: float) -> list[AggregateStats]:
    """Groups whose confidence rate falls below ``threshold_pct``."""
    return [s for s in stats if s.confidence_rate < threshold_pct]
