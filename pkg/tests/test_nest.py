import gmpy2
import pytest
from gmpy2 import mpfr
from hypothesis import given, settings, strategies as st

from conftest import build
from nestlab.dynamics import QuadraticMap, iterate
from nestlab.errors import Degenerate, Escape, InvalidInput, MissingLevel, NonRecurrent
from nestlab.nest import (
    NestConfig,
    ReturnClass,
    Termination,
    bookkeeping_violations,
    detect_renormalizable,
    initial_interval,
)
from nestlab.precision import PrecisionContext
from nestlab.search import fibonacci_return_time


def qmap(c, bits=256):
    return QuadraticMap.from_value(c, PrecisionContext(bits=bits))


def test_initial_interval_closed_forms():
    f = qmap("-1")
    with f.ctx.scope():
        I = initial_interval(f)
        half = (gmpy2.sqrt(mpfr(5)) - 1) / 2
        assert abs(I.hi - half) < mpfr(2) ** -250 and I.lo + I.hi == 0
        f = qmap("-1.5")
        I = initial_interval(f)
        assert abs(I.hi - (gmpy2.sqrt(mpfr(7)) - 1) / 2) < mpfr(2) ** -250
        assert I.contains(f.c) is False
        assert -f.beta < f.c < f.beta


def test_initial_interval_errors():
    with pytest.raises(Degenerate):
        initial_interval(qmap("-2"))
    with pytest.raises(Escape):
        initial_interval(qmap("-2.1"))
    with pytest.raises(Escape):
        initial_interval(qmap("0.3"))
    with pytest.raises(NonRecurrent):
        initial_interval(qmap("-0.5"))


def test_config_validation():
    with pytest.raises(InvalidInput):
        NestConfig(depth=-1)
    with pytest.raises(InvalidInput):
        NestConfig(horizon_factor=-1)
    with pytest.raises(InvalidInput):
        NestConfig(cascade_cap=0)


def test_basilica_is_renormalizable():
    nest = build("-1", depth=10)
    assert nest.termination is Termination.RENORMALIZABLE
    assert nest.termination_level <= 2


def test_chebyshev_is_degenerate():
    nest = build("-2", depth=10)
    assert nest.termination is Termination.DEGENERATE
    assert nest.termination_level == 0
    assert nest.levels == []


def test_escape_and_nonrecurrent_recorded():
    assert build("-2.5").termination is Termination.ESCAPE
    assert build("-0.5").termination is Termination.NON_RECURRENT


def test_missing_level(cascade_nest):
    with pytest.raises(MissingLevel):
        cascade_nest.level(99)


def test_fibonacci_structure(fib_nest):
    assert fib_nest.termination is Termination.MAX_DEPTH
    assert fib_nest.depth == 12
    for lv in fib_nest.levels[1:]:
        assert lv.return_class is ReturnClass.NONCENTRAL
        assert len(lv.noncentral) == 1
        assert lv.r_n == fibonacci_return_time(lv.n)
    assert fib_nest.kappa == {n: n for n in range(13)}
    assert fib_nest.L_set == list(range(1, 13))
    assert fib_nest.cascades == []
    rs = [lv.r_n for lv in fib_nest.levels[1:]]
    assert rs[:3] == [3, 5, 8] and rs[-1] == 610
    assert all(rs[k + 1] == rs[k] + rs[k - 1] for k in range(1, len(rs) - 1))


def test_fibonacci_not_renormalizable(fib_nest):
    for lv in fib_nest.levels[1:]:
        assert not detect_renormalizable(lv, fib_nest.map)


def test_cascade_bookkeeping(cascade_nest):
    classes = [lv.return_class for lv in cascade_nest.levels[1:]]
    assert classes[:2] == [ReturnClass.NONCENTRAL] * 2
    assert set(classes[2:]) == {ReturnClass.CENTRAL}
    assert [(c.start_level, c.length) for c in cascade_nest.cascades] == [(3, 6)]
    assert cascade_nest.L_set == [1, 2]
    assert [cascade_nest.kappa[n] for n in range(9)] == [0, 1, 2, 2, 2, 2, 2, 2, 2]
    # inside a cascade the return time stays put
    assert {lv.r_n for lv in cascade_nest.levels[3:]} == {8}
    assert bookkeeping_violations(cascade_nest) == []


def test_completed_cascade_exit():
    # the cascade starting at level 3 ends before level 8 at this depth
    nest = build("-1.87", depth=12)
    assert bookkeeping_violations(nest) == []
    done = [c for c in nest.cascades if c.start_level + c.length < len(nest.levels)]
    for cs in done:
        end = cs.start_level + cs.length
        y = nest.levels[end].first_return_value
        assert nest.levels[end - 1].central.interval.contains(y)
        assert not nest.levels[end].central.interval.contains(y)


def test_bookkeeping_detects_tampering(cascade_nest):
    import copy

    bad = copy.copy(cascade_nest)
    bad.kappa = dict(cascade_nest.kappa)
    bad.kappa[4] = 3
    assert bookkeeping_violations(bad)
    bad = copy.copy(cascade_nest)
    bad.cascades = []
    assert any("partition" in p for p in bookkeeping_violations(bad))


def test_cascade_cap():
    nest = build("-1.75", depth=10, cascade_cap=3)
    assert nest.termination is Termination.CASCADE_CAP_EXCEEDED
    assert len(nest.levels) == 4


def test_deterministic():
    a = build("-1.87", depth=6)
    b = build("-1.87", depth=6)
    assert [lv.central.interval for lv in a.levels] == [lv.central.interval for lv in b.levels]
    assert [lv.noncentral for lv in a.levels] == [lv.noncentral for lv in b.levels]


def _check_invariants(nest):
    ctx = nest.map.ctx
    with ctx.scope():
        tol = ctx.tolerance * nest.levels[0].central.interval.length if nest.levels else 0
        for prev, lv in zip(nest.levels, nest.levels[1:]):
            J, I = prev.central.interval, lv.central.interval
            assert J.lo + tol < I.lo and I.hi < J.hi - tol
            assert abs(I.lo + I.hi) <= tol
            ivs = sorted((li.interval for li in lv.intervals), key=lambda k: k.lo)
            # neighbouring domains may share an endpoint; interiors are disjoint
            for a, b in zip(ivs, ivs[1:]):
                assert a.hi <= b.lo + tol
            for li in lv.intervals:
                assert J.contains_interval(li.interval)
                t = li.first_visit_time
                x = nest.orbit[t]
                assert li.interval.contains(x)
                y = iterate(nest.map, x, li.return_time)[0]
                assert J.contains(y)


def test_invariants_fibonacci(fib_nest):
    _check_invariants(fib_nest)


def test_branch_endpoints_match_forward_iteration(fib_nest):
    f = fib_nest.map
    hi = f.at_precision(f.ctx.with_bits(2 * f.ctx.bits))
    for prev, lv in zip(fib_nest.levels, fib_nest.levels[1:6]):
        J = prev.central.interval
        for li in lv.noncentral:
            with hi.ctx.scope():
                ends = sorted(iterate(hi, mpfr(x, hi.ctx.bits), li.return_time)[0] for x in (li.interval.lo, li.interval.hi))
                scale = J.length * mpfr(2) ** -100
                assert abs(ends[0] - J.lo) < scale and abs(ends[1] - J.hi) < scale


@settings(max_examples=15)
@given(st.integers(min_value=-19999, max_value=-14000))
def test_invariants_random_parameters(k):
    nest = build(f"{k}e-4", depth=5)
    if nest.levels:
        _check_invariants(nest)
    assert bookkeeping_violations(nest) == []
    if nest.termination is Termination.MAX_DEPTH:
        assert nest.depth == 5
