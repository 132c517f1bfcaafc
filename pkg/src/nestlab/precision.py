"""Arbitrary-precision context and the two root primitives everything else uses.

Values are ``gmpy2.mpfr`` numbers. An mpfr carries its own mantissa size but
arithmetic rounds to the precision of the active gmpy2 context, so every
computation in the package runs inside ``PrecisionContext.scope()``.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Union

import gmpy2
from gmpy2 import mpfr

from .errors import InvalidInput, NegativeRadicand, NoSignChange

BigReal = type(mpfr(0))
RealLike = Union[str, int, float, Fraction, "gmpy2.mpz", "gmpy2.mpq", BigReal]

DEFAULT_BITS = 256
DEFAULT_GUARD_BITS = 32
BITS_ENV = "NESTLAB_BITS"


def default_bits() -> int:
    """Working precision from ``NESTLAB_BITS`` if set, else 256."""
    raw = os.environ.get(BITS_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_BITS
    try:
        bits = int(raw)
    except ValueError:
        raise InvalidInput(f"{BITS_ENV}={raw!r} is not an integer") from None
    if bits < 64:
        raise InvalidInput(f"{BITS_ENV} must be at least 64, got {bits}")
    return bits


@dataclass(frozen=True)
class PrecisionContext:
    bits: int = DEFAULT_BITS
    guard_bits: int = DEFAULT_GUARD_BITS
    rng_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.bits, int) or self.bits < 64:
            raise InvalidInput(f"bits must be an integer >= 64, got {self.bits!r}")
        if not isinstance(self.guard_bits, int) or not 0 < self.guard_bits < self.bits:
            raise InvalidInput(f"guard_bits must lie in (0, bits), got {self.guard_bits!r}")
        if not isinstance(self.rng_seed, int) or not 0 <= self.rng_seed < 2**64:
            raise InvalidInput(f"rng_seed must be a 64-bit unsigned integer, got {self.rng_seed!r}")

    def scope(self):
        """Context manager making this precision active for gmpy2 arithmetic."""
        return gmpy2.context(precision=self.bits)

    def real(self, value: RealLike) -> BigReal:
        """Convert ``value`` exactly (up to one rounding) at working precision.

        Decimal strings are parsed directly by MPFR, never via a float.
        """
        if isinstance(value, bool):
            raise InvalidInput("booleans are not reals")
        if isinstance(value, Fraction):
            value = gmpy2.mpq(value.numerator, value.denominator)
        try:
            x = mpfr(value.strip() if isinstance(value, str) else value, self.bits)
        except (ValueError, TypeError) as exc:
            raise InvalidInput(f"cannot parse {value!r} as a real number") from exc
        if not gmpy2.is_finite(x):
            raise InvalidInput(f"{value!r} is not finite")
        return x

    def with_bits(self, bits: int) -> "PrecisionContext":
        return replace(self, bits=bits)

    @property
    def tolerance(self) -> BigReal:
        """Relative tolerance 2^-(bits - guard_bits)."""
        return mpfr(2, self.bits) ** (self.guard_bits - self.bits)

    def slack(self, reserve: int = 16) -> BigReal:
        """Additive slack 2^-(bits - reserve) used by inequality checks."""
        return mpfr(2, self.bits) ** (reserve - self.bits)

    def rng(self, stream: int = 0) -> random.Random:
        """Independent reproducible generator for ``(rng_seed, stream)``."""
        return random.Random((self.rng_seed << 16) ^ stream)


def eval_sqrt_branch(y: BigReal, sign: int) -> BigReal:
    """Return ``sign * sqrt(y)``, correctly rounded at the active precision."""
    if sign not in (1, -1):
        raise InvalidInput(f"sign must be +1 or -1, got {sign!r}")
    if gmpy2.is_nan(y) or y < 0:
        raise NegativeRadicand(f"square root of negative value {y}")
    root = gmpy2.sqrt(y)
    return root if sign > 0 else -root


def bracketed_root(
    f: Callable[[BigReal], BigReal],
    lo: BigReal,
    hi: BigReal,
    tol: BigReal,
    max_steps: int = 100_000,
) -> BigReal:
    """Bisection for a sign change of ``f`` on ``[lo, hi]``.

    Stops when ``|f(x)| <= tol`` or the bracket is narrower than ``tol``.
    Bisection only, so the result depends on nothing but the inputs and the
    active precision.

    Raises:
        NoSignChange: if ``f(lo)`` and ``f(hi)`` share a strict sign.
    """
    if lo > hi:
        lo, hi = hi, lo
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NoSignChange(f"f({lo}) and f({hi}) have the same sign")
    lo_negative = flo < 0
    for _ in range(max_steps):
        mid = (lo + hi) / 2
        if hi - lo <= tol or mid == lo or mid == hi:
            return mid
        fm = f(mid)
        if abs(fm) <= tol:
            return mid
        if (fm < 0) == lo_negative:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2
