"""End-to-end acceptance criteria 1-9.

Each test records one PASS/FAIL line in ``RESULTS``; conftest prints them
in the terminal summary, and they also go to stdout (visible with -s).
"""

import json
import time

import pytest
from gmpy2 import mpfr

from conftest import FIB_C
from nestlab.cli import main
from nestlab.dynamics import QuadraticMap
from nestlab.geometry import compute_geometry
from nestlab.nest import NestConfig, ReturnClass, Termination, build_nest
from nestlab.precision import PrecisionContext
from nestlab.search import ReturnItinerary, locate_itinerary, scan
from nestlab.verification import (
    check_composition_lemma,
    check_cross_ratio,
    check_graph_consistency,
    check_leading_order,
    check_schwarz_on_nest,
    check_sqrt_lemma,
    check_theorem_b,
)

RESULTS = {}

pytestmark = pytest.mark.slow


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def timed(fn, *args, **kw):
    t = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t


def test_criterion_1_composition_lemma():
    suite, secs = timed(check_composition_lemma, trials=100_000, seed=1, bits=256)
    ok = suite.violations == 0 and suite.gates["slack"] == "2^-240" and secs < 30
    assert record(1, ok, f"{suite.trials} triples, {suite.violations} violations, slack {suite.gates['slack']}, {secs:.1f}s")


def test_criterion_2_sqrt_lemma():
    suite, secs = timed(check_sqrt_lemma, trials=100_000, seed=1, bits=256)
    ok = suite.trials == 100_000 and suite.violations == 0 and secs < 30
    assert record(2, ok, f"{suite.trials} configurations, {suite.violations} violations, {secs:.1f}s")


def test_criterion_3_cross_ratio():
    suite, secs = timed(check_cross_ratio, trials=100_000, seed=1, bits=256, tolerance_bits=248)
    ok = suite.trials == 100_000 and suite.violations == 0
    worst = suite.diagnostics.get("max_relative_error_log2")
    assert record(3, ok, f"{suite.trials} configurations, worst log2 rel error {worst}, tolerance 2^-248, {secs:.1f}s")


def test_criterion_4_leading_order():
    suite = check_leading_order(("1e-2", "1e-3", "1e-4"), bits=256)
    assert record(4, suite.passed and suite.trials == 3, "; ".join(f"{k}: {v}" for k, v in suite.diagnostics.items()))


def test_criterion_5_fibonacci_pipeline():
    bracket, locate_secs = timed(locate_itinerary, ReturnItinerary.fibonacci_itinerary(), 40, 10)
    width_ok = bracket.width <= mpfr(10, bracket.bits) ** -40
    validated = bracket.validated_bits == 4 * bracket.bits and bracket.depth >= 10
    c_text = bracket.midpoint_text(45)
    # the bracket is far narrower than 10^-40, so compare the rounded digits
    with_frozen = bracket.midpoint_text(40) == FIB_C

    fmap = QuadraticMap.from_value(c_text, PrecisionContext(bits=512))
    nest, build_secs = timed(build_nest, fmap, 12, NestConfig(depth=12))
    levels = nest.levels[1:]
    a = (nest.depth >= 12 and all(lv.return_class is ReturnClass.NONCENTRAL for lv in levels)
         and all(nest.kappa[n] == n for n in range(nest.depth + 1)))
    rs = {lv.n: lv.r_n for lv in levels}
    b = all(rs[n + 1] == rs[n] + rs[n - 1] for n in range(2, nest.depth))
    schwarz = check_schwarz_on_nest(nest)
    c = schwarz.violations == 0 and schwarz.trials > 0
    fits = check_theorem_b(compute_geometry(nest), n0=4)
    slopes = {f.quantity: f.slope for f in fits.fits}
    d = fits.passed and slopes["K"] > 0 and slopes["log mu_next"] < 0 and slopes["log rho"] < 0
    ok = width_ok and validated and with_frozen and build_secs < 300 and a and b and c and d
    detail = (f"c = {bracket.midpoint_text(40)} (width {float(bracket.width):.1e}, matches frozen digits: {with_frozen}; "
              f"locate {locate_secs:.0f}s, depth {bracket.depth}, "
              f"validated at {bracket.validated_bits} bits); build {build_secs:.1f}s; "
              f"(a) {a} (b) {b} (c) {schwarz.trials} Schwarz trials, {schwarz.violations} violations "
              f"(d) slopes K {slopes.get('K', 0):+.3f}, log mu {slopes.get('log mu_next', 0):+.3f}, "
              f"log rho {slopes.get('log rho', 0):+.3f}")
    assert record(5, ok, detail)


def test_criterion_6_degenerate_handling(capsys):
    out = {}
    for c in ("-2", "-1"):
        code = main(["nest", "--c", c, "--depth", "10"])
        text, err = capsys.readouterr()
        out[c] = (code, json.loads(text)["termination"], err.strip())
    two, one = out["-2"], out["-1"]
    ok = (two[0] == 0 and two[1]["reason"] == "Degenerate" and two[1]["level"] == 0 and two[1]["message"]
          and one[0] == 0 and one[1]["reason"] == "Renormalizable" and one[1]["level"] <= 2 and one[1]["message"])
    assert record(6, ok, f"c=-2: exit {two[0]}, {two[2]}; c=-1: exit {one[0]}, {one[2]}")


def test_criterion_7_scan():
    rows, secs = timed(scan, ("-2", "-1.4"), 100, 6, 256)
    reasons = {}
    for r in rows:
        reasons[r.termination] = reasons.get(r.termination, 0) + 1
    cascade_rows = [r for r in rows if r.cascades]
    named = {t.value for t in Termination}
    ok = (len(rows) == 100 and secs < 600 and all(r.termination in named for r in rows)
          and all(r.bookkeeping_ok for r in rows))
    for r in cascade_rows:
        steps = [b - a for a, b in zip(r.kappa, r.kappa[1:])]
        ok = ok and all(s == (1 if n in r.L_set else 0) for n, s in enumerate(steps, start=1))
    assert record(7, ok, f"{len(rows)} rows in {secs:.1f}s, {len(cascade_rows)} with cascades, reasons {reasons}")


def test_criterion_8_graph_consistency(fib_nest, cascade_nest):
    nests = [fib_nest, cascade_nest]
    for q in range(100):
        c = f"{-2 + 0.6 * (2 * q + 1) / 200:.4f}"
        nests.append(build_nest(QuadraticMap.from_value(c), 6, NestConfig(depth=6)))
    built = [n for n in nests if n.depth >= 2]
    mismatches = trials = 0
    for nest in built:
        suite = check_graph_consistency(nest)
        mismatches += suite.violations
        trials += suite.trials
    assert record(8, mismatches == 0, f"{len(built)} nests, {trials} comparisons, {mismatches} mismatches")


def test_criterion_9_determinism(capsys, tmp_path):
    files = []
    for i in range(2):
        path = tmp_path / f"run{i}.json"
        main(["nest", "--c", FIB_C, "--depth", "12", "--bits", "512", "--suites", "schwarz,theorem_b,graph",
              "-o", str(path)])
        files.append(json.loads(path.read_text()))
    capsys.readouterr()
    for f in files:
        f["meta"].pop("timestamp")
    same_nest = json.dumps(files[0], sort_keys=True) == json.dumps(files[1], sort_keys=True)
    scans = []
    for i in range(2):
        main(["scan", "--steps", "10", "--depth", "4"])
        scans.append(capsys.readouterr().out)
    same_scan = scans[0] == scans[1]
    assert record(9, same_nest and same_scan, f"nest reports identical: {same_nest}; scan output identical: {same_scan}")
