import tempfile
from dataclasses import replace
from datetime import date
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evhost import data_io
from evhost.core import CoordinationParams, LoadProfile, Transformer, default_tariff
from evhost.data_io import DataFormatError, SynthProfileSpec, synth_profile
from evhost.hostcap import AggregateStats, CampaignSettings, aggregate, run_campaign
from evhost.scenario import JointCommutePmf, SocDistributions, Trip, build_commute_pmf

GOLDEN = Path(__file__).parent / "golden"


def feeder(n_days=31, customers=(8, 12)):
    out = []
    for tid, cap, cust in zip(("TA", "TB"), (50.0, 75.0), customers):
        profiles = tuple(synth_profile(SynthProfileSpec("july_like", cap, cust, 3, tid,
                                                        date(2023, 7, d)))
                         for d in range(1, n_days + 1))
        out.append(Transformer(tid, cap, cust, profiles))
    return out


def test_ami_round_trip(tmp_path):
    orig = feeder()
    data_io.write_ami_csv(orig, tmp_path / "ami.csv", tmp_path / "meta.csv")
    back = data_io.load_ami_csv(tmp_path / "ami.csv", tmp_path / "meta.csv")
    assert len(back) == 2 and all(len(t.profiles) == 31 for t in back)
    for a, b in zip(orig, back):
        assert (a.id, a.capacity_kw, a.customer_count) == (b.id, b.capacity_kw, b.customer_count)
        for p, q in zip(a.profiles, b.profiles):
            assert p.date == q.date and np.array_equal(p.kw, q.kw)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=True),
                min_size=96, max_size=96))
def test_ami_round_trip_is_bit_exact(values):
    tr = Transformer("X", 10.0, 3, (LoadProfile("X", date(2023, 1, 5), values),))
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        data_io.write_ami_csv([tr], d / "a.csv", d / "m.csv")
        (back,) = data_io.load_ami_csv(d / "a.csv", d / "m.csv")
    assert back.profiles[0].kw.tobytes() == tr.profiles[0].kw.tobytes()


def _write_small(tmp_path, rows):
    (tmp_path / "m.csv").write_text("transformer_id,capacity_kw,customer_count\nA,50,10\n")
    text = ",".join(data_io.ami_header()) + "\n" + "".join(r + "\n" for r in rows)
    (tmp_path / "a.csv").write_text(text)
    return tmp_path / "a.csv", tmp_path / "m.csv"


def test_short_row_reports_line(tmp_path):
    good = "A,2023-07-01," + ",".join(["1.0"] * 96)
    short = "A,2023-07-02," + ",".join(["1.0"] * 95)
    a, m = _write_small(tmp_path, [good, short])
    with pytest.raises(DataFormatError, match="line 3: expected 96 readings, found 95"):
        data_io.load_ami_csv(a, m)


def test_duplicate_rows_and_missing_metadata(tmp_path):
    row = "A,2023-07-01," + ",".join(["1.0"] * 96)
    a, m = _write_small(tmp_path, [row, row])
    with pytest.raises(DataFormatError, match="line 3: duplicate"):
        data_io.load_ami_csv(a, m)
    a, m = _write_small(tmp_path, ["B,2023-07-01," + ",".join(["1.0"] * 96)])
    with pytest.raises(DataFormatError, match="no metadata"):
        data_io.load_ami_csv(a, m)
    a, m = _write_small(tmp_path, ["A,2023-07-01," + ",".join(["nan"] * 96)])
    with pytest.raises(DataFormatError, match="line 2"):
        data_io.load_ami_csv(a, m)


def test_bad_headers(tmp_path):
    (tmp_path / "m.csv").write_text("id,cap,n\nA,50,10\n")
    (tmp_path / "a.csv").write_text("x\n")
    with pytest.raises(DataFormatError, match="line 1"):
        data_io.read_metadata_csv(tmp_path / "m.csv")
    a, m = _write_small(tmp_path, [])
    (tmp_path / "a.csv").write_text("transformer_id,date,p00\n")
    assert data_io.load_ami_csv(a, m)[0].profiles == ()


def test_trips_and_pmf_round_trip(tmp_path):
    trips = data_io.synth_trips(200, 4) + [Trip(9, 17, 2.5)]
    data_io.write_trips_csv(trips, tmp_path / "t.csv")
    assert data_io.read_trips_csv(tmp_path / "t.csv") == trips
    pmf = build_commute_pmf(trips, tag="synthetic")
    data_io.save_pmf(pmf, tmp_path / "p.json")
    assert data_io.load_pmf(tmp_path / "p.json") == pmf


def test_synth_trips_shape():
    trips = data_io.synth_trips(5000, 1)
    assert trips == data_io.synth_trips(5000, 1)
    same_day = [t for t in trips if t.return_hour > t.depart_hour]
    assert 0.95 < len(same_day) / len(trips) < 0.99
    departs = np.array([t.depart_hour for t in same_day])
    returns = np.array([t.return_hour for t in same_day])
    assert np.mean((departs >= 5) & (departs <= 10)) > 0.6
    assert np.mean(returns >= 13) > 0.7


# --- synthetic profiles -----------------------------------------------------

def test_july_like_over_1000_seeds():
    for seed in range(1000):
        kw = synth_profile(SynthProfileSpec("july_like", 50.0, seed=seed)).kw
        assert 35.0 <= kw.max() <= 47.5
        assert 68 <= int(kw.argmax()) <= 84
        assert kw.min() >= 0.0


def test_march_like_over_1000_seeds():
    negative = 0
    for seed in range(1000):
        kw = synth_profile(SynthProfileSpec("march_like", 50.0, seed=seed)).kw
        assert kw.max() <= 25.0
        negative += kw.min() < 0
    assert negative > 0


def test_synth_profile_is_deterministic():
    spec = SynthProfileSpec("july_like", 75.0, 12, 9, "T9", date(2023, 7, 9))
    assert np.array_equal(synth_profile(spec).kw, synth_profile(spec).kw)
    assert not np.array_equal(synth_profile(spec).kw,
                              synth_profile(replace(spec, seed=10)).kw)
    with pytest.raises(ValueError):
        SynthProfileSpec("april_like", 50.0)
    with pytest.raises(ValueError):
        SynthProfileSpec("july_like", 0.0)


# --- reports ----------------------------------------------------------------

def agg(tid="T1", power=7.2, month=7, pct=(10.0, 20.0, 65.0, 5.0)):
    return AggregateStats(tid, 10, 5, power, month, 20, *pct)


def test_report_columns_for_two_powers(tmp_path):
    header, rows = data_io.report_table([agg(), agg(power=11.5, pct=(0, 0, 100, 0))])
    assert len(header) == 11 and len(rows) == 1 and len(rows[0]) == 11
    assert header[:3] == ["Trans Code", "# Cust", "# EV"]
    assert header[3:7] == ["7.2 kW Infeasibility (%)", "7.2 kW Less #EV (%)",
                           "7.2 kW Desired #EV (%)", "7.2 kW Unresolved (%)"]
    assert rows[0] == ["T1", "10", "5", "10.00", "20.00", "65.00", "5.00",
                       "0.00", "0.00", "100.00", "0.00"]


def test_report_requires_one_month_and_data():
    with pytest.raises(ValueError):
        data_io.report_table([])
    with pytest.raises(ValueError):
        data_io.report_table([agg(month=3), agg(month=7)])


def test_markdown_matches_csv(tmp_path):
    stats = [agg("T1"), agg("T2", pct=(1.0 / 3, 0.0, 99.0 + 2.0 / 3, 0.0)),
             agg("T1", 11.5), agg("T2", 11.5)]
    data_io.write_report(stats, "csv", tmp_path / "r.csv")
    data_io.write_report(stats, "markdown", tmp_path / "r.md")
    assert data_io.read_report_csv(tmp_path / "r.csv") == \
        data_io.read_report_markdown(tmp_path / "r.md")
    raw = (tmp_path / "r.md").read_bytes()
    assert b"\r\n" not in raw and b"0.33" in raw
    with pytest.raises(ValueError):
        data_io.write_report(stats, "html", tmp_path / "r.html")
    with pytest.raises(OSError):
        data_io.write_report(stats, "csv", tmp_path / "missing" / "r.csv")


def golden_campaign():
    pmf = JointCommutePmf.from_cells({(6, 20): 0.5, (7, 17): 0.5})
    st_ = CampaignSettings(pmf, SocDistributions(), CoordinationParams(time_limit=60),
                           default_tariff())
    return run_campaign(feeder(3, (10, 8)), [7], [7.2, 11.5], 4, 2023, st_, workers=1)


def test_records_round_trip_and_golden_report(tmp_path):
    records = golden_campaign()
    data_io.write_records_csv(records, tmp_path / "rec.csv")
    assert data_io.read_records_csv(tmp_path / "rec.csv") == records
    data_io.write_report(aggregate(records), "csv", tmp_path / "report.csv")
    assert (tmp_path / "report.csv").read_text() == (GOLDEN / "small_report.csv").read_text()


def test_aggregates_csv(tmp_path):
    data_io.write_aggregates_csv([agg()], tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0].split(",") == data_io.AGGREGATE_HEADER
    assert len(lines) == 2


def test_demo_feeder_shape():
    demo = data_io.demo_feeder()
    assert len(demo) == 6
    for t in demo:
        assert len(t.profiles_in_month(3)) == 31 and len(t.profiles_in_month(7)) == 31
        july_peak = max(p.kw.max() for p in t.profiles_in_month(7))
        assert july_peak < t.capacity_kw
