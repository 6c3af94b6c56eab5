import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shem.traces import COLUMNS, SynthProfile, TraceError, TraceSet, concat, load_csv, split, synth_traces, write_csv


def _rows(n=24):
    tr = synth_traces(3, 1)
    return tr.slice(0, n)


def test_round_trip_24_rows(tmp_path):
    tr = _rows()
    f = tmp_path / "t.csv"
    write_csv(tr, f)
    back = load_csv(f)
    assert len(back) == 24
    for name in ("buy_price", "sell_price", "pv", "load", "t_out"):
        assert np.array_equal(getattr(back, name), getattr(tr, name))
    g = tmp_path / "t2.csv"
    write_csv(back, g)
    assert f.read_bytes() == g.read_bytes()


def test_negative_pv_names_row(tmp_path):
    f = tmp_path / "t.csv"
    write_csv(_rows(), f)
    lines = f.read_text().splitlines()
    cells = lines[4].split(",")  # file row 5 (header is row 1)
    cells[COLUMNS.index("pv_kw")] = "-1"
    lines[4] = ",".join(cells)
    f.write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceError, match="row 5"):
        load_csv(f)


def test_parse_errors(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("slot,buy_price,sell_price,pv_kw,load_kw\n0,0.1,0.05,0,1\n")
    with pytest.raises(TraceError, match="t_out_c"):
        load_csv(f)
    f.write_text("slot,buy_price,sell_price,pv_kw,load_kw,t_out_c\n0,abc,0.05,0,1,25\n")
    with pytest.raises(TraceError, match="row 2"):
        load_csv(f)
    f.write_text("slot,buy_price,sell_price,pv_kw,load_kw,t_out_c\n0,0.1,0.2,0,1,25\n")
    with pytest.raises(TraceError, match="sell_price"):
        load_csv(f)
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_csv(tmp_path / "nope.csv")


def test_synth_deterministic():
    a, b = synth_traces(5, 3), synth_traces(5, 3)
    for name in ("buy_price", "sell_price", "pv", "load", "t_out"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.t_out, synth_traces(6, 3).t_out)


def test_synth_night_pv_zero_and_sell_below_buy():
    tr = synth_traces(0, 20)
    assert np.all(tr.pv[::24] == 0.0)
    assert np.all(tr.sell_price <= tr.buy_price)
    assert len(tr) == 480 and tr.days == 20


def test_synth_mean_temperature():
    p = SynthProfile()
    tr = synth_traces(1, 40, p)
    assert abs(tr.t_out.mean() - p.t_out_mean) <= 0.5


def test_synth_bad_days():
    with pytest.raises(TraceError):
        synth_traces(0, 0)


def test_split_examples():
    tr = synth_traces(0, 90)
    a, b = split(tr, 60, 30)
    assert (len(a), len(b)) == (1440, 720)
    whole = concat([a, b])
    assert np.array_equal(whole.t_out, tr.t_out) and np.array_equal(whole.buy_price, tr.buy_price)
    with pytest.warns(UserWarning):
        e, f = split(tr, 0, 90)
    assert len(e) == 0 and len(f) == 2160
    with pytest.raises(IndexError):
        split(tr, 80, 20)


def test_traceset_read_only():
    tr = synth_traces(0, 1)
    with pytest.raises(ValueError):
        tr.pv[0] = 5.0


finite = st.floats(min_value=0.0, max_value=10.0, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, finite, finite, finite, st.floats(-10, 45)), min_size=1, max_size=30))
def test_traceset_invariants(rows):
    buy = [r[0] for r in rows]
    sell = [min(r[0], r[1]) for r in rows]
    tr = TraceSet(buy, sell, [r[2] for r in rows], [r[3] for r in rows], [r[4] for r in rows])
    assert len(tr) == len(rows)
    assert np.all(tr.sell_price <= tr.buy_price)
    if any(r[1] > r[0] for r in rows):
        with pytest.raises(TraceError):
            TraceSet(buy, [r[1] for r in rows], [r[2] for r in rows], [r[3] for r in rows], [r[4] for r in rows])


def test_traceset_rejects_mismatch_and_negative():
    with pytest.raises(TraceError):
        TraceSet([0.1, 0.1], [0.05], [0, 0], [1, 1], [20, 20])
    with pytest.raises(TraceError, match="negative pv"):
        TraceSet([0.1], [0.05], [-0.1], [1], [20])
