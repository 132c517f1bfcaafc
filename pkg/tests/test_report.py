import csv
import io
import json

from gmpy2 import mpfr

from nestlab.report import (
    CSV_COLUMNS,
    decimal,
    digits_for,
    dumps,
    levels_csv,
    nest_report,
    scan_csv,
    scan_payload,
    without_timestamp,
)
from nestlab.search import scan
from nestlab.verification import check_bookkeeping


def test_digits_for():
    assert digits_for(53) == 17
    assert digits_for(256) == 79
    assert digits_for(512) == 156


def test_decimal():
    assert decimal(None, 10) is None
    assert decimal(True, 10) == "true"
    assert decimal(7, 10) == "7"
    assert decimal(mpfr("inf"), 10) == "inf"
    assert decimal(-mpfr("inf"), 10) == "-inf"
    assert decimal(mpfr("nan"), 10) == "nan"
    assert decimal(mpfr(1, 256) / 8, 30) == "0.125"
    # round trip at the advertised digit count
    x = mpfr(1, 256) / 3
    assert mpfr(decimal(x, digits_for(256)), 256) == x


def test_report_schema(fib_nest, fib_geometry):
    rep = nest_report(fib_nest, fib_geometry, [check_bookkeeping(fib_nest)], timestamp="T")
    assert set(rep) == {"meta", "parameter", "config", "termination", "levels", "intervals",
                        "cascades", "kappa", "L_set", "graph", "suites"}
    assert rep["meta"] == {"timestamp": "T", "version": "0.1.0", "bits": 512, "digits": 156}
    assert rep["termination"]["reason"] == "MaxDepth"
    assert rep["termination"]["depth_reached"] == 12
    assert len(rep["levels"]) == 12
    assert set(CSV_COLUMNS) <= set(rep["levels"][0])
    assert rep["levels"][0]["lambda"] == "inf" and rep["levels"][0]["K"] is None
    assert rep["kappa"]["12"] == 12
    assert rep["suites"]["bookkeeping"]["pass"] is True
    orders = {(o["n"], o["l"]): o["value"] for o in rep["graph"]["orders"]}
    assert orders[(3, 0)] == 2
    text = dumps(rep)
    assert json.loads(text) == json.loads(dumps(json.loads(text)))


def test_reports_are_byte_identical(fib_nest, fib_geometry):
    a = dumps(nest_report(fib_nest, fib_geometry, timestamp="2026-01-01T00:00:00+00:00"))
    b = dumps(nest_report(fib_nest, fib_geometry, timestamp="2026-01-01T00:00:00+00:00"))
    assert a == b
    c = nest_report(fib_nest, fib_geometry)
    assert without_timestamp(c) == without_timestamp(json.loads(a))


def test_levels_csv(fib_geometry):
    text = levels_csv(fib_geometry, 512)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 13
    first = dict(zip(rows[0], rows[1]))
    assert first["n"] == "1" and first["K"] == "" and first["lambda"] == "inf"
    assert mpfr(dict(zip(rows[0], rows[5]))["mu"], 512) > 0


def test_scan_outputs():
    rows = scan(("-1.9", "-1.8"), steps=3, depth=3)
    payload = scan_payload(rows, {"steps": 3})
    assert len(payload["rows"]) == 3 and payload["meta"]["steps"] == 3
    text = scan_csv(rows)
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0][:3] == ["c", "termination", "depth_reached"]
    assert len(parsed) == 4
    assert scan_csv([]) == ""
