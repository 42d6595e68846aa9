import json
from datetime import date

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evhost.core import (
    Band,
    ChargerSpec,
    ConfigurationError,
    CoordinationParams,
    LoadProfile,
    Season,
    TimeGrid,
    TouTariff,
    Transformer,
    default_tariff,
    desired_ev_count,
    headroom,
    load_tariff,
    price_at,
    price_vector,
    save_tariff,
)

TARIFF = default_tariff()


def clock(h, m=0):
    return (h * 60 + m) // 15


@pytest.mark.parametrize("month,slot,price", [
    (7, 60, 25.85),
    (3, 40, 8.85),
    (12, 24, 11.45),
])
def test_price_examples(month, slot, price):
    assert price_at(TARIFF, month, slot) == price


def test_band_boundaries_half_open():
    assert price_at(TARIFF, 7, clock(14)) == 25.85
    assert price_at(TARIFF, 7, clock(13, 45)) == 9.06
    assert price_at(TARIFF, 7, clock(19, 45)) == 25.85
    assert price_at(TARIFF, 7, clock(20)) == 9.06
    assert price_at(TARIFF, 1, clock(4, 45)) == 8.85
    assert price_at(TARIFF, 1, clock(5)) == 11.45


def test_price_rejects_bad_month_and_slot():
    with pytest.raises(ConfigurationError):
        price_at(TARIFF, 13, 0)
    with pytest.raises(ValueError):
        price_at(TARIFF, 1, 96)


def test_tariff_totality():
    for m in range(1, 13):
        day = TARIFF.day_prices(m)
        assert day.shape == (96,)
        assert (day > 0).all()
    for season in TARIFF.seasons:
        assert sum(len(b.slots()) for b in season.bands) == 96


def test_tariff_rejects_gap_overlap_and_missing_month():
    full = (Band(0, 96, 5.0),)
    with pytest.raises(ConfigurationError, match="not covered"):
        TouTariff((Season(frozenset(range(1, 13)), (Band(0, 50, 5.0),)),))
    with pytest.raises(ConfigurationError, match="twice"):
        TouTariff((Season(frozenset(range(1, 13)), (Band(0, 96, 5.0), Band(10, 20, 6.0))),))
    with pytest.raises(ConfigurationError, match="months not covered"):
        TouTariff((Season(frozenset(range(1, 12)), full),))
    with pytest.raises(ConfigurationError, match="two seasons"):
        TouTariff((Season(frozenset(range(1, 13)), full), Season(frozenset({3}), full)))
    with pytest.raises(ConfigurationError, match="non-positive"):
        TouTariff((Season(frozenset(range(1, 13)), (Band(0, 96, 0.0),)),))


def test_tariff_json_round_trip(tmp_path):
    path = tmp_path / "t.json"
    save_tariff(TARIFF, path)
    again = load_tariff(path)
    for m in range(1, 13):
        assert np.array_equal(again.day_prices(m), TARIFF.day_prices(m))
    doc = json.loads(path.read_text())
    assert {"months", "bands"} <= set(doc["seasons"][0])


def test_price_vector_on_coarse_grid():
    grid = TimeGrid(24, 1.0)
    v = price_vector(TARIFF, 7, grid)
    assert v[14] == 25.85 and v[13] == 9.06 and v[20] == 9.06


def test_scaled_tariff():
    doubled = TARIFF.scaled(2.0)
    assert price_at(doubled, 7, 60) == pytest.approx(51.7)


@pytest.mark.parametrize("n,expected", [(6, 3), (7, 4), (1, 1), (15, 8), (10, 5)])
def test_desired_ev_count(n, expected):
    assert desired_ev_count(n) == expected


@given(st.integers(1, 10_000))
def test_desired_ev_count_is_half_rounded_up(n):
    assert desired_ev_count(n) in (n / 2, (n + 1) / 2)


def test_headroom_examples():
    base = np.full(96, 30.0)
    prof = LoadProfile("T", date(2023, 7, 1), base)
    assert np.all(headroom(prof, 50) == 20)
    base[40] = 55
    base[30] = -3
    h = headroom(LoadProfile("T", date(2023, 7, 1), base), 50)
    assert h[40] == -5 and h[30] == 53


@given(st.lists(st.floats(-50, 200, allow_nan=False), min_size=96, max_size=96),
       st.floats(1, 500))
def test_headroom_is_linear(values, cap):
    prof = LoadProfile("T", date(2023, 7, 1), values)
    assert np.allclose(headroom(prof, cap) + prof.kw, cap)


def test_time_grid_invariants():
    TimeGrid(96, 0.25)
    TimeGrid(24, 1.0)
    with pytest.raises(ConfigurationError):
        TimeGrid(96, 0.5)
    with pytest.raises(ConfigurationError):
        TimeGrid(4, 6.0)
    assert TimeGrid().hour_to_slot(8) == 32
    assert TimeGrid(24, 1.0).hour_to_slot(8) == 8


def test_params_invariants():
    CoordinationParams()
    with pytest.raises(ConfigurationError):
        CoordinationParams(alpha=1.5, beta=1.0)
    with pytest.raises(ConfigurationError):
        CoordinationParams(tau_min=0)
    with pytest.raises(ConfigurationError):
        CoordinationParams(max_switches=0)
    with pytest.raises(ConfigurationError):
        CoordinationParams(tau_min=24).check_grid(TimeGrid(24, 1.0))


def test_profile_and_transformer_invariants():
    with pytest.raises(ValueError):
        LoadProfile("T", date(2023, 7, 1), [np.nan] * 96)
    p = LoadProfile("T", date(2023, 7, 2), np.zeros(96))
    q = LoadProfile("T", date(2023, 7, 1), np.zeros(96))
    tr = Transformer("T", 50, 5, (p, q))
    assert [x.date.day for x in tr.profiles] == [1, 2]
    assert tr.profile_for(date(2023, 7, 2)) is p
    with pytest.raises(KeyError):
        tr.profile_for(date(2023, 7, 3))
    with pytest.raises(ValueError):
        Transformer("U", 50, 5, (p,))
    with pytest.raises(ValueError):
        Transformer("T", 0, 5)
    with pytest.raises(ValueError):
        Transformer("T", 50, 0)
    with pytest.raises(ValueError):
        ChargerSpec(0)


def test_profile_array_is_read_only():
    p = LoadProfile("T", date(2023, 7, 1), np.zeros(96))
    with pytest.raises(ValueError):
        p.kw[0] = 1.0
