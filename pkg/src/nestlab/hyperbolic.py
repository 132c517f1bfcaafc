"""Poincaré metric on a real interval and the lengths built from it.

An interval L = [a, b] carries the metric 2 dx / ((x - a)(b - x)). For a gap
G = [u, v] inside L with flanks U = [a, u] and V = [v, b], the distance
between u and v is

    P(G|L) = log(1 + |G|/|U|) + log(1 + |G|/|V|),

which is also the log of a cross-ratio of the four endpoints. All functions
evaluate at the active gmpy2 precision; wrap calls in
``PrecisionContext.scope()``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Tuple

import gmpy2
from gmpy2 import mpfr

from .errors import (
    DegenerateFlank,
    GapContainsCritical,
    InvalidInput,
    NegativeCoordinate,
    NotNested,
    OutsideLine,
)
from .precision import BigReal, eval_sqrt_branch


@dataclass(frozen=True)
class Interval:
    lo: BigReal
    hi: BigReal

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidInput(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def length(self) -> BigReal:
        return self.hi - self.lo

    @property
    def midpoint(self) -> BigReal:
        return (self.lo + self.hi) / 2

    def contains(self, x) -> bool:
        """Open containment ``lo < x < hi``."""
        return self.lo < x < self.hi

    def contains_interval(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def distance_to(self, x) -> BigReal:
        if x < self.lo:
            return self.lo - x
        if x > self.hi:
            return x - self.hi
        return mpfr(0)

    def reflected(self) -> "Interval":
        return Interval(-self.hi, -self.lo)


@dataclass(frozen=True)
class GapConfiguration:
    """Four ordered endpoints a < u < v < b of a line L with gap G = [u, v]."""

    a: BigReal
    u: BigReal
    v: BigReal
    b: BigReal

    def __post_init__(self):
        if not (self.a <= self.u and self.u < self.v and self.v <= self.b):
            raise InvalidInput(
                f"endpoints out of order: {self.a}, {self.u}, {self.v}, {self.b}"
            )
        if self.a == self.u or self.v == self.b:
            raise DegenerateFlank("a flank of the gap has zero length")

    @classmethod
    def from_nested(cls, line: Interval, gap: Interval) -> "GapConfiguration":
        """Configuration of ``gap`` inside ``line``; both flanks must be nonempty."""
        if not (line.lo < gap.lo and gap.hi < line.hi):
            raise NotNested(f"[{gap.lo}, {gap.hi}] is not strictly inside [{line.lo}, {line.hi}]")
        return cls(line.lo, gap.lo, gap.hi, line.hi)

    @property
    def U(self) -> Interval:
        return Interval(self.a, self.u)

    @property
    def G(self) -> Interval:
        return Interval(self.u, self.v)

    @property
    def V(self) -> Interval:
        return Interval(self.v, self.b)

    @property
    def L(self) -> Interval:
        return Interval(self.a, self.b)

    def mapped(self, p, q) -> "GapConfiguration":
        """Image under x -> p x + q, reordered when p < 0."""
        pts = [p * x + q for x in (self.a, self.u, self.v, self.b)]
        if p < 0:
            pts.reverse()
        return GapConfiguration(*pts)


def poincare_density(line: Interval, x) -> BigReal:
    if not line.contains(x):
        raise OutsideLine(f"{x} is not interior to [{line.lo}, {line.hi}]")
    return 2 / ((x - line.lo) * (line.hi - x))


def _flank_ratios(cfg: GapConfiguration) -> Tuple[BigReal, BigReal]:
    g = cfg.v - cfg.u
    return g / (cfg.u - cfg.a), g / (cfg.b - cfg.v)


def poincare_length(cfg: GapConfiguration) -> BigReal:
    """P(G|L), evaluated with log1p so tiny lengths keep full relative accuracy."""
    ru, rv = _flank_ratios(cfg)
    return gmpy2.log1p(ru) + gmpy2.log1p(rv)


def cross_ratio_length(cfg: GapConfiguration) -> BigReal:
    """log(((v-a)(b-u)) / ((u-a)(b-v))), the same quantity written as a cross-ratio."""
    a, u, v, b = cfg.a, cfg.u, cfg.v, cfg.b
    return gmpy2.log(((v - a) * (b - u)) / ((u - a) * (b - v)))


def poincare_length_star(cfg: GapConfiguration) -> BigReal:
    p = poincare_length(cfg)
    one = mpfr(1)
    return p if p < one else one


def asymmetric_length(
    cfg: GapConfiguration,
    near_side: str = "U",
    critical: Optional[BigReal] = None,
) -> BigReal:
    """Full weight on the near flank's term, half weight on the far flank's.

    ``near_side`` names the flank closer to the critical point. When
    ``critical`` is given, a gap containing it in its interior is rejected.
    """
    if near_side not in ("U", "V"):
        raise InvalidInput(f"near_side must be 'U' or 'V', got {near_side!r}")
    if critical is not None and cfg.u < critical < cfg.v:
        raise GapContainsCritical(f"gap [{cfg.u}, {cfg.v}] contains {critical}")
    ru, rv = _flank_ratios(cfg)
    near, far = (ru, rv) if near_side == "U" else (rv, ru)
    return gmpy2.log1p(near) + gmpy2.log1p(far) / 2


def nested_configs(line: Interval, middle: Interval, inner: Interval):
    """Configurations (I in T, T in L) for a nested triple L ⊃ T ⊃ I."""
    outer_cfg = GapConfiguration.from_nested(line, middle)
    inner_cfg = GapConfiguration.from_nested(middle, inner)
    return inner_cfg, outer_cfg


def composition_bound(inner: GapConfiguration, outer: GapConfiguration):
    """Both sides of P(I|L) <= P(I|T) P(T|L) / 2.

    ``inner`` places I inside T and ``outer`` places T inside L, so the gap
    of ``outer`` must coincide with the line of ``inner``.
    """
    if not (inner.a == outer.u and inner.b == outer.v):
        raise NotNested("inner line must equal the gap of the outer configuration")
    whole = GapConfiguration(outer.a, inner.u, inner.v, outer.b)
    lhs = poincare_length(whole)
    rhs = poincare_length(inner) * poincare_length(outer) / 2
    return lhs, rhs


def quadratic_pullback_config(cfg: GapConfiguration) -> GapConfiguration:
    """Preimage of a one-sided configuration under x -> x^2.

    Configurations left of 0 are reflected first. The returned configuration
    has its near flank (the one adjacent to the critical point) as ``U``.
    """
    if cfg.b <= 0:
        cfg = GapConfiguration(-cfg.b, -cfg.v, -cfg.u, -cfg.a)
    if cfg.a < 0:
        raise NegativeCoordinate(f"configuration straddles 0: a = {cfg.a}")
    return GapConfiguration(*(eval_sqrt_branch(x, 1) for x in (cfg.a, cfg.u, cfg.v, cfg.b)))


def sigma_bar(lambda_bar) -> BigReal:
    """exp(λ)/(1 + exp(λ)), written to avoid overflow for large λ."""
    return 1 / (1 + gmpy2.exp(-lambda_bar))


# Random sampling. Spacings are log-uniform over ``decades`` decades so both
# tiny and huge aspect ratios show up.

def _log_uniform(rng: random.Random, decades: float) -> BigReal:
    return mpfr(10.0 ** rng.uniform(-decades, 0.0))


def random_configuration(rng: random.Random, decades: float = 10.0) -> GapConfiguration:
    a = mpfr(rng.uniform(-1.0, 1.0))
    s1, s2, s3 = (_log_uniform(rng, decades) for _ in range(3))
    return GapConfiguration(a, a + s1, a + s1 + s2, a + s1 + s2 + s3)


def random_one_sided_configuration(rng: random.Random, decades: float = 10.0) -> GapConfiguration:
    """Configuration with a >= 0; a is exactly 0 one time in eight."""
    a = mpfr(0) if rng.random() < 0.125 else mpfr(10.0 ** rng.uniform(-decades, 1.0))
    s1, s2, s3 = (_log_uniform(rng, decades) for _ in range(3))
    return GapConfiguration(a, a + s1, a + s1 + s2, a + s1 + s2 + s3)


def random_nested_triple(rng: random.Random, decades: float = 10.0):
    """Nested intervals L ⊃ T ⊃ I with all four flanks positive."""
    a = mpfr(rng.uniform(-1.0, 1.0))
    gaps = [_log_uniform(rng, decades) for _ in range(5)]
    pts = [a]
    for g in gaps:
        pts.append(pts[-1] + g)
    line = Interval(pts[0], pts[5])
    middle = Interval(pts[1], pts[4])
    inner = Interval(pts[2], pts[3])
    return line, middle, inner


def symmetric_central_length(mu) -> BigReal:
    """P([-mu, mu] | [-1, 1]) = 2 log(1 + 2mu/(1 - mu))."""
    return 2 * gmpy2.log1p(2 * mu / (1 - mu))


__all__ = [
    "Interval",
    "GapConfiguration",
    "poincare_density",
    "poincare_length",
    "cross_ratio_length",
    "poincare_length_star",
    "asymmetric_length",
    "nested_configs",
    "composition_bound",
    "quadratic_pullback_config",
    "sigma_bar",
    "random_configuration",
    "random_one_sided_configuration",
    "random_nested_triple",
    "symmetric_central_length",
]
