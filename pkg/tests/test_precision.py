import gmpy2
import pytest
from fractions import Fraction
from gmpy2 import mpfr
from hypothesis import given, strategies as st

from nestlab.errors import InvalidInput, NegativeRadicand, NoSignChange
from nestlab.precision import PrecisionContext, bracketed_root, default_bits, eval_sqrt_branch

CTX = PrecisionContext()


def newton_sqrt(y, bits):
    """Independent square root by Newton's method at the given precision."""
    with gmpy2.context(precision=bits):
        y = mpfr(y)
        x = mpfr(1) if y < 1 else y
        for _ in range(200):
            nxt = (x + y / x) / 2
            if nxt == x:
                break
            x = nxt
        return x


def test_sqrt_perfect_square():
    with CTX.scope():
        assert eval_sqrt_branch(mpfr(4), 1) == 2
        assert eval_sqrt_branch(mpfr(0), -1) == 0


def test_sqrt_two_against_newton_at_double_precision():
    with CTX.scope():
        got = eval_sqrt_branch(mpfr(2), 1)
    ref = newton_sqrt(2, 2 * CTX.bits)
    with gmpy2.context(precision=2 * CTX.bits):
        assert abs(got - ref) <= ref * mpfr(2) ** -(CTX.bits - 1)
    assert format(got, ".30g").startswith("1.41421356237309504880168872")


def test_sqrt_negative_sign_and_error():
    with CTX.scope():
        assert eval_sqrt_branch(mpfr(9), -1) == -3
        with pytest.raises(NegativeRadicand):
            eval_sqrt_branch(mpfr(-1), 1)


def test_root_sqrt2():
    with CTX.scope():
        x = bracketed_root(lambda x: x * x - 2, mpfr(1), mpfr(2), mpfr("1e-30"))
        assert abs(x - gmpy2.sqrt(mpfr(2))) < mpfr("1e-29")


def test_root_odd_function():
    with CTX.scope():
        assert abs(bracketed_root(lambda x: x, mpfr(-1), mpfr(1), mpfr("1e-40"))) <= mpfr("1e-40")


def test_root_plastic_number_plugged_back_at_double_precision():
    with CTX.scope():
        x = bracketed_root(lambda x: x ** 3 - x - 1, mpfr(1), mpfr(2), mpfr("1e-20"))
    with gmpy2.context(precision=2 * CTX.bits):
        residual = x ** 3 - x - 1
        assert abs(residual) < mpfr("1e-19")
    assert format(x, ".9g") == "1.32471796"


def test_root_requires_sign_change():
    with CTX.scope(), pytest.raises(NoSignChange):
        bracketed_root(lambda x: x * x + 1, mpfr(-1), mpfr(1), mpfr("1e-10"))


def test_root_is_deterministic():
    with CTX.scope():
        f = lambda x: gmpy2.exp(x) - 3
        a = bracketed_root(f, mpfr(0), mpfr(2), mpfr("1e-60"))
        b = bracketed_root(f, mpfr(0), mpfr(2), mpfr("1e-60"))
    assert a == b and a.precision == b.precision


def test_context_validation():
    with pytest.raises(InvalidInput):
        PrecisionContext(bits=32)
    with pytest.raises(InvalidInput):
        PrecisionContext(bits=128, guard_bits=128)
    with pytest.raises(InvalidInput):
        PrecisionContext(rng_seed=-1)


def test_real_parses_exactly():
    ctx = PrecisionContext(bits=512)
    with ctx.scope():
        x = ctx.real("0.1")
        assert x == mpfr("0.1", 512)
        assert x != mpfr(0.1)
        assert ctx.real(Fraction(1, 3)) == mpfr(1, 512) / 3
    with pytest.raises(InvalidInput):
        ctx.real(True)
    with pytest.raises(InvalidInput):
        ctx.real("nan")


def test_tolerance_and_slack():
    ctx = PrecisionContext(bits=256, guard_bits=32)
    assert ctx.tolerance == mpfr(2) ** -224
    assert ctx.slack() == mpfr(2) ** -240


def test_default_bits_env(monkeypatch):
    monkeypatch.delenv("NESTLAB_BITS", raising=False)
    assert default_bits() == 256
    monkeypatch.setenv("NESTLAB_BITS", "512")
    assert default_bits() == 512
    monkeypatch.setenv("NESTLAB_BITS", "12")
    with pytest.raises(InvalidInput):
        default_bits()
    monkeypatch.setenv("NESTLAB_BITS", "lots")
    with pytest.raises(InvalidInput):
        default_bits()


def test_rng_streams_are_reproducible():
    a = PrecisionContext(rng_seed=7).rng(3)
    b = PrecisionContext(rng_seed=7).rng(3)
    c = PrecisionContext(rng_seed=7).rng(4)
    xs = [a.random() for _ in range(5)]
    assert xs == [b.random() for _ in range(5)]
    assert xs != [c.random() for _ in range(5)]


@given(st.fractions(min_value=0, max_value=10**12), st.sampled_from([1, -1]))
def test_sqrt_squares_back(y, sign):
    with CTX.scope():
        v = CTX.real(y)
        r = eval_sqrt_branch(v, sign)
        assert (r >= 0) == (sign > 0) or r == 0
        if v > 0:
            assert abs(r * r - v) <= v * mpfr(2) ** -(CTX.bits - 4)
        else:
            assert r == 0
