from fractions import Fraction

import pytest
from gmpy2 import mpfr

from conftest import FIB_C
from nestlab.errors import InvalidInput, NotRealized
from nestlab.nest import ReturnClass
from nestlab.search import (
    ReturnItinerary,
    classify_parameter,
    fibonacci_return_time,
    locate_itinerary,
    scan,
)


def test_parse():
    it = ReturnItinerary.parse("C, N+, N-!, N")
    assert it.symbols == (ReturnClass.CENTRAL,) + (ReturnClass.NONCENTRAL,) * 3
    assert it.signs == (None, 1, -1, None)
    assert it.single_landing == (None, None, True, None)
    assert len(it) == 4 and not it.extendable
    fib = ReturnItinerary.parse("Fibonacci")
    assert fib.extendable and fib.target(1) == (ReturnClass.NONCENTRAL, 1, True)
    for bad in ("", "X", "N*", "C,,N"):
        with pytest.raises(InvalidInput):
            ReturnItinerary.parse(bad)
    with pytest.raises(InvalidInput):
        it.target(5)


def test_fibonacci_return_times():
    assert [fibonacci_return_time(n) for n in range(1, 8)] == [3, 5, 8, 13, 21, 34, 55]


def test_classify_examples():
    assert classify_parameter("-1", 6).termination == "Renormalizable"
    assert classify_parameter("-2", 6).termination == "Degenerate"
    row = classify_parameter(FIB_C, 8, bits=512)
    assert row.termination == "MaxDepth" and row.depth_reached == 8
    assert all(code.startswith("N") for code in row.return_classes)
    assert row.kappa == tuple(range(9)) and row.bookkeeping_ok
    bad = classify_parameter("abc", 4)
    assert bad.termination == "InvalidInput" and bad.error


def test_scan_single_step_is_classify():
    rows = scan(("-1.2", "-0.8"), steps=1, depth=4)
    assert len(rows) == 1
    assert rows[0].c == "-1"
    assert rows[0] == classify_parameter("-1", 4)
    assert rows[0].termination == "Renormalizable"


def test_scan_grid_and_determinism():
    a = scan(("-2", "-1.4"), steps=6, depth=4)
    b = scan(("-2", "-1.4"), steps=6, depth=4, jobs=2)
    assert a == b
    assert [Fraction(r.c) for r in a] == [Fraction(-2) + Fraction(3, 5) * Fraction(2 * i + 1, 12) for i in range(6)]
    assert all(r.termination for r in a)
    with pytest.raises(InvalidInput):
        scan(steps=0)
    with pytest.raises(InvalidInput):
        scan(("-1", "-2"), steps=2)


def test_locate_rejects_unrealizable():
    # every parameter in this window is renormalizable at level 1
    with pytest.raises(NotRealized):
        locate_itinerary(ReturnItinerary.parse("N"), precision_digits=10, window=("-1.3", "-1.1"))
    with pytest.raises(InvalidInput):
        locate_itinerary(ReturnItinerary.parse("N"), precision_digits=0)


def test_locate_central_then_noncentral():
    target = ReturnItinerary.parse("C,N")
    bracket = locate_itinerary(target, precision_digits=12, max_depth=4)
    assert bracket.depth == 2
    assert bracket.width <= mpfr("1e-12")
    assert bracket.validated_bits == 4 * bracket.bits
    for end in bracket.endpoint_texts(40):
        row = classify_parameter(end, 3, bits=512)
        assert row.return_classes[0] == "C" and row.return_classes[1][0] in "NM"
    again = locate_itinerary(target, precision_digits=12, max_depth=4)
    assert (again.lo, again.hi) == (bracket.lo, bracket.hi)


def test_locate_fibonacci_shallow():
    bracket = locate_itinerary(ReturnItinerary.fibonacci_itinerary(), precision_digits=12, max_depth=5)
    assert bracket.depth >= 5
    assert bracket.width <= mpfr("1e-12")
    # nested pieces shrink by far more than the factor 1.9 per level
    assert all(b * 1.9 <= a for a, b in zip(bracket.widths, bracket.widths[1:]))
    assert bracket.midpoint_text(12) == FIB_C[:14]
