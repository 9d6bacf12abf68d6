import io
import json

import numpy as np
import pytest

from ccdist import CCError, NaturalParams, fit_mle, Dataset
from ccdist.inference import BiasRow, GlmModel
from ccdist.io import (
    fmt,
    load_model,
    model_record,
    parse_number,
    parse_vector,
    read_compositions,
    read_matrix,
    smooth,
    write_jsonl,
    write_points,
    write_records,
    write_report,
)
from ccdist.samplers import BenchmarkRow


def test_fmt_round_trips():
    for v in (0.1, 1 / 3, 2.0**-1074, 1e300, -0.0, 12345678901234567.0):
        assert float(fmt(v)) == v
    assert fmt(-0.0) == "0"
    assert fmt(3) == "3"
    assert fmt(True) == "1"


def test_parse_number_and_vector():
    assert parse_number(" 1/3 ") == 1 / 3
    assert parse_number("2.5e-3") == 0.0025
    assert parse_vector("1/3,1/3,1/3").tolist() == [1 / 3] * 3
    for bad in ("1,,2", "a,b", "1/0,1", "nan,1", "inf"):
        with pytest.raises(CCError):
            parse_vector(bad)


def test_header_detected_and_crlf_accepted():
    text = "a,b,c\r\n0.2,0.3,0.5\r\n1/3,1/3,1/3\r\n"
    t = read_compositions(io.StringIO(text))
    assert t.header == ["a", "b", "c"]
    assert t.n == 2 and t.K == 3 and not t.rejected


def test_no_header():
    t = read_compositions(io.StringIO("0.5,0.5\n1,0\n\n0,1\n"))
    assert t.header is None
    assert t.n == 3
    assert t.index.tolist() == [0, 1, 2]


def test_rejected_rows_are_recorded():
    text = "x1,x2,x3\n0.2,0.3,0.5\n0.2,0.3\n0.5,0.5,0.5\nfoo,0.5,0.5\n-0.1,0.6,0.5\n0.1,0.1,0.8\n"
    t = read_compositions(io.StringIO(text))
    assert t.n == 2
    assert [line for line, _ in t.rejected] == [3, 4, 5, 6]
    assert "expected 3 fields" in t.rejected[0][1]
    assert "sum to 1" in t.rejected[1][1]
    assert t.index.tolist() == [0, 5]
    assert "2 rows accepted, 4 rejected" == t.summary()


def test_zeros_are_valid_and_smoothing_is_opt_in():
    text = "0,0.5,0.5\n0,0,1\n"
    t = read_compositions(io.StringIO(text))
    assert t.rows.min() == 0.0
    s = read_compositions(io.StringIO(text), smooth_zeros=True)
    assert s.rows.min() > 0
    assert s.rows.sum(axis=1) == pytest.approx([1, 1])
    assert smooth(np.array([[1.0, 0.0]]))[0] == pytest.approx([1 - 5e-4, 5e-4])


def test_renormalization_tolerance():
    t = read_compositions(io.StringIO("0.3333333333,0.3333333333,0.3333333333\n"))
    assert t.n == 1 and t.rows.sum() == pytest.approx(1.0, abs=1e-15)


def test_single_column_rejected():
    with pytest.raises(CCError):
        read_compositions(io.StringIO("1\n1\n"))


def test_read_matrix():
    header, z = read_matrix(io.StringIO("z1,z2\n1,2\n3,4\n"))
    assert header == ["z1", "z2"]
    assert z.tolist() == [[1, 2], [3, 4]]
    with pytest.raises(CCError):
        read_matrix(io.StringIO("1,2\n3\n"))
    with pytest.raises(CCError):
        read_matrix(io.StringIO("1,x\n"))
    with pytest.raises(CCError):
        read_matrix(io.StringIO("z\n"))


def test_points_round_trip(tmp_path):
    pts = np.random.default_rng(0).dirichlet(np.ones(4), size=50)
    path = tmp_path / "p.csv"
    write_points(path, pts)
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.startswith(b"x1,x2,x3,x4\n")
    t = read_compositions(path)
    assert not t.rejected
    assert np.array_equal(t.rows, pts / pts.sum(axis=1, keepdims=True))


def test_records_csv_and_jsonl():
    rows = [BiasRow(2, 1, 0.001, 0.01, 100, 0), BiasRow(2, 2, -0.001, 0.01, 100, 0)]
    buf = io.StringIO()
    write_records(buf, rows)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "n,component,bias,se,trials_used,excluded"
    assert lines[1] == "2,1,0.001,0.01,100,0"
    buf = io.StringIO()
    write_records(buf, [BenchmarkRow(3, "naive", 0, 0.3, 0)], "jsonl")
    assert json.loads(buf.getvalue()) == {
        "K": 3, "sampler": "naive", "trial": 0, "log10_proposals": 0.3, "censored": 0
    }
    with pytest.raises(CCError):
        write_records(io.StringIO(), rows, "xml")


def test_report_formats():
    report = fit_mle(Dataset([[0.2, 0.3, 0.5]]))
    buf = io.StringIO()
    write_report(buf, report)
    lines = dict(line.split(",", 1) for line in buf.getvalue().splitlines())
    assert lines["kind"] == "mle" and lines["converged"] == "1"
    assert [float(v) for v in lines["fitted_mean"].split(",")] == pytest.approx([0.2, 0.3, 0.5])
    buf = io.StringIO()
    write_report(buf, report, "jsonl")
    rec = json.loads(buf.getvalue())
    assert list(rec)[:5] == ["kind", "converged", "iterations", "log_likelihood", "grad_norm"]
    assert rec["trace"][-1][1] <= 1e-8


def test_model_round_trip(tmp_path):
    model = GlmModel(np.arange(6.0).reshape(3, 2), np.array([0.5, -1.0]), 0.1, np.zeros(3), np.ones(3))
    path = tmp_path / "m.jsonl"
    write_jsonl(path, [model_record(model)])
    back = load_model(path)
    z = np.random.default_rng(1).normal(size=(4, 3))
    assert np.array_equal(back.eta(z), model.eta(z))
    assert back.l2_coefficient == 0.1


def test_nonfinite_serialized_as_null():
    buf = io.StringIO()
    write_jsonl(buf, [{"a": float("nan"), "b": np.array([1.0, np.inf]), "eta": NaturalParams([1.0]).eta}])
    assert json.loads(buf.getvalue()) == {"a": None, "b": [1.0, None], "eta": [1.0]}
