from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evhost.core import ChargerSpec, CoordinationParams, EvSpec, LoadProfile, Transformer, default_tariff
from evhost.data_io import synth_trips
from evhost.scenario import (
    EvSession,
    JointCommutePmf,
    Scenario,
    SocDistributions,
    Trip,
    build_commute_pmf,
    derive_seed,
    make_scenario,
    sample_away_interval,
    sample_final_soc,
    sample_initial_soc,
    substream,
)

DAY = date(2023, 7, 3)


def transformer():
    return Transformer("T1", 50.0, 10, (LoadProfile("T1", DAY, np.full(96, 20.0)),))


def test_single_trip_pmf():
    pmf = build_commute_pmf([Trip(8, 16, 1.0)])
    assert pmf.cells() == {(8, 16): 1.0}


def test_weighted_pmf():
    pmf = build_commute_pmf([{"depart_hour": 8, "return_hour": 16, "weight": 1.0},
                             (8, 16, 1.0), Trip(9, 17, 2.0)])
    assert pmf.cells() == pytest.approx({(8, 16): 0.5, (9, 17): 0.5})


def test_overnight_trips_are_rejected_and_counted():
    pmf = build_commute_pmf([Trip(8, 16), Trip(22, 6), Trip(10, 10)])
    assert pmf.records_used == 1
    assert pmf.records_rejected == 2


def test_empty_trip_list_is_an_error():
    with pytest.raises(ValueError):
        build_commute_pmf([])
    with pytest.raises(ValueError):
        build_commute_pmf([Trip(20, 3)])


def test_bundled_style_trips_marginals_match_tally():
    trips = synth_trips(3000, seed=5)
    pmf = build_commute_pmf(trips)
    dep = np.zeros(24)
    ret = np.zeros(24)
    total = 0.0
    for t in trips:
        if t.return_hour > t.depart_hour:
            dep[t.depart_hour] += t.weight
            ret[t.return_hour] += t.weight
            total += t.weight
    assert np.allclose(pmf.matrix.sum(axis=1), dep / total, atol=1e-12)
    assert np.allclose(pmf.matrix.sum(axis=0), ret / total, atol=1e-12)


def test_pmf_invariants_enforced():
    m = np.zeros((24, 24))
    m[10, 8] = 1.0
    with pytest.raises(ValueError):
        JointCommutePmf(m)
    m = np.zeros((24, 24))
    m[8, 16] = 0.9
    with pytest.raises(ValueError):
        JointCommutePmf(m)


@given(st.lists(st.tuples(st.integers(0, 22), st.integers(1, 23), st.floats(0.01, 10)),
                min_size=1, max_size=50))
def test_pmf_properties(raw):
    trips = [Trip(d, r, w) for d, r, w in raw]
    if not any(t.return_hour > t.depart_hour for t in trips):
        with pytest.raises(ValueError):
            build_commute_pmf(trips)
        return
    pmf = build_commute_pmf(trips)
    assert (pmf.matrix >= 0).all()
    assert not np.tril(pmf.matrix).any()
    assert abs(pmf.matrix.sum() - 1) <= 1e-9


def test_pmf_dict_round_trip():
    pmf = build_commute_pmf([Trip(8, 16), Trip(9, 18)], tag="age 25-34")
    again = JointCommutePmf.from_dict(pmf.to_dict())
    assert again == pmf and again.tag == "age 25-34"


def test_single_cell_pmf_is_deterministic():
    pmf = JointCommutePmf.from_cells({(8, 16): 1.0})
    rng = np.random.default_rng(0)
    assert {sample_away_interval(pmf, rng) for _ in range(100)} == {(32, 64)}


def test_two_cell_frequencies():
    pmf = JointCommutePmf.from_cells({(8, 16): 0.5, (9, 17): 0.5})
    rng = substream("freq")
    draws = [sample_away_interval(pmf, rng) for _ in range(10_000)]
    share = draws.count((32, 64)) / len(draws)
    assert abs(share - 0.5) <= 0.02
    assert set(draws) == {(32, 64), (36, 68)}


def test_sampler_is_reproducible():
    pmf = build_commute_pmf(synth_trips(500, 1))
    a = [sample_away_interval(pmf, substream(1, "x")) for _ in range(5)]
    b = [sample_away_interval(pmf, substream(1, "x")) for _ in range(5)]
    assert a == b


def test_initial_soc_range_and_mean():
    d = SocDistributions()
    rng = substream("init")
    x = np.array([sample_initial_soc(d, rng) for _ in range(100_000)])
    assert x.min() >= 0.20 and x.max() <= 0.30
    assert abs(x.mean() - 0.25) <= 0.001


def test_final_soc_support_and_mode():
    d = SocDistributions()
    rng = substream("final")
    x = np.array([sample_final_soc(d, rng) for _ in range(100_000)])
    assert x.min() >= 0.80 and x.max() <= 1.00
    hist, _ = np.histogram(x, bins=np.arange(0.80, 1.0001, 0.02))
    assert hist.argmax() == 0


def test_degenerate_distributions():
    d = SocDistributions(initial_low=0.25, initial_high=0.25, chi_scale=0.0)
    rng = substream("deg")
    assert {sample_initial_soc(d, rng) for _ in range(20)} == {0.25}
    assert {sample_final_soc(d, rng) for _ in range(20)} == {0.80}


def test_session_demand():
    s = EvSession(0, 0.25, 0.85, 100.0, frozenset(range(32, 64)))
    assert s.energy_demand_kwh == pytest.approx(60.0)
    with pytest.raises(ValueError):
        EvSession(0, 0.9, 0.8, 100.0)


def make(seed, n=3):
    pmf = build_commute_pmf(synth_trips(1000, 3))
    return make_scenario(transformer(), DAY, ChargerSpec(7.2), n, pmf, SocDistributions(),
                         CoordinationParams(), default_tariff(), seed)


def test_make_scenario_invariants():
    sc = make(1)
    assert sc.n_evs == 3
    for s in sc.sessions:
        assert 0.20 <= s.initial_soc <= 0.30
        assert 0.80 <= s.final_soc <= 1.00
        slots = sorted(s.unavailable)
        assert slots == list(range(slots[0], slots[-1] + 1))
        assert 0 <= slots[0] and slots[-1] < 96
        assert s.energy_demand_kwh == pytest.approx((s.final_soc - s.initial_soc) * 100)


def test_make_scenario_deterministic():
    assert make(11).to_dict() == make(11).to_dict()


def test_make_scenario_prefix_stable():
    big, small = make(4, n=5), make(4, n=2)
    assert big.sessions[:2] == small.sessions


def test_adjacent_seeds_differ():
    for s in range(100):
        assert make(s).sessions != make(s + 1).sessions


def test_missing_profile_date():
    with pytest.raises(KeyError):
        make_scenario(transformer(), date(2023, 7, 4), ChargerSpec(7.2), 1,
                      JointCommutePmf.from_cells({(8, 16): 1.0}), SocDistributions(),
                      CoordinationParams(), default_tariff(), 0)


def test_fixed_away_window():
    sc = make_scenario(transformer(), DAY, ChargerSpec(7.2), 2, None, SocDistributions(),
                       CoordinationParams(), default_tariff(), 0, fixed_away=(32, 64),
                       ev=EvSpec(75.0))
    assert all(s.unavailable == frozenset(range(32, 64)) for s in sc.sessions)
    assert all(s.battery_kwh == 75.0 for s in sc.sessions)


def test_scenario_json_round_trip():
    sc = make(3)
    again = Scenario.from_dict(sc.to_dict())
    assert again.to_dict() == sc.to_dict()


@settings(max_examples=50)
@given(st.lists(st.one_of(st.integers(), st.text(max_size=5)), min_size=1, max_size=4))
def test_derive_seed_is_stable_63_bit(parts):
    s = derive_seed(*parts)
    assert s == derive_seed(*parts)
    assert 0 <= s < 2**63
