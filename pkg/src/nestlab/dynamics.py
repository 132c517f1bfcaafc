"""The quadratic family f(x) = x^2 + c: orbits, derivatives and branch pullbacks.

The critical point is 0. Single-step preimages are ±sqrt(y - c); a pullback
along an orbit segment picks the sign of each orbit point, so the whole
chain of preimages is computed by square roots alone and inherits their
accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import gmpy2
from gmpy2 import mpfr

from .errors import (
    CriticalOrbitPoint,
    Escape,
    FoldEncountered,
    InvalidInput,
    OutsideDomain,
    PrecisionExhausted,
)
from .hyperbolic import Interval
from .precision import BigReal, PrecisionContext, eval_sqrt_branch

# log2 of an absolute error bound is tracked in units of 2^-bits
_NEG_INF = float("-inf")


def _log2_abs(x) -> float:
    if x == 0:
        return _NEG_INF
    e, m = gmpy2.frexp(x)
    return math.log2(abs(float(m))) + e


def _accumulate(log_err: float, log_gain: float) -> float:
    """log2(gain * 2^log_err + 1)."""
    grown = log_gain + log_err
    if grown > 60:
        return grown
    return math.log2(2.0 ** grown + 1.0)


@dataclass(frozen=True)
class QuadraticMap:
    c: BigReal
    ctx: PrecisionContext = field(default_factory=PrecisionContext)
    c_text: Optional[str] = None

    @classmethod
    def from_value(cls, c, ctx: Optional[PrecisionContext] = None) -> "QuadraticMap":
        """Build from a decimal string, integer or mpfr without a float round-trip."""
        ctx = ctx or PrecisionContext()
        text = c.strip() if isinstance(c, str) else None
        if isinstance(c, float):
            raise InvalidInput("pass the parameter as a decimal string, not a float")
        return cls(ctx.real(c), ctx, text)

    def at_precision(self, ctx: PrecisionContext) -> "QuadraticMap":
        """Same parameter at another precision; decimal input is re-parsed exactly."""
        value = self.c_text if self.c_text is not None else mpfr(self.c, max(ctx.bits, self.c.precision))
        return QuadraticMap(ctx.real(value), ctx, self.c_text)

    @property
    def critical_point(self) -> BigReal:
        return mpfr(0)

    def _discriminant(self):
        disc = 1 - 4 * self.c
        if disc < 0:
            raise Escape(f"c = {self.c} > 1/4 has no real fixed points")
        return disc

    @property
    def beta(self) -> BigReal:
        """Orientation-preserving fixed point (1 + sqrt(1 - 4c))/2."""
        with self.ctx.scope():
            return (1 + gmpy2.sqrt(self._discriminant())) / 2

    @property
    def alpha(self) -> BigReal:
        """Orientation-reversing fixed point (1 - sqrt(1 - 4c))/2."""
        with self.ctx.scope():
            return (1 - gmpy2.sqrt(self._discriminant())) / 2

    def __call__(self, x):
        return gmpy2.fma(x, x, self.c)

    def preimage(self, y, sign: int) -> BigReal:
        return eval_sqrt_branch(y - self.c, sign)


def iterate(fmap: QuadraticMap, x, n: int) -> Tuple[BigReal, float]:
    """Return ``(f^n(x), loss)`` where ``loss`` estimates the bits lost to error growth.

    Raises:
        PrecisionExhausted: when the loss exceeds ``bits - guard_bits``.
    """
    if n < 0:
        raise InvalidInput("n must be nonnegative")
    ctx = fmap.ctx
    limit = ctx.bits - ctx.guard_bits
    log_err = 0.0
    with ctx.scope():
        y = mpfr(x)
        for _ in range(n):
            log_err = _accumulate(log_err, 1.0 + _log2_abs(y))
            y = fmap(y)
            if log_err > limit:
                raise PrecisionExhausted(f"iterate lost {log_err:.0f} of {ctx.bits} bits")
    return y, max(log_err, 0.0)


def schwarzian_of_iterate(fmap: QuadraticMap, x, l: int) -> BigReal:
    """S(f^l)(x) by the cocycle S(f∘g) = (Sf∘g)(g')^2 + Sg with Sf(y) = -3/(2y^2)."""
    if l < 1:
        raise InvalidInput("l must be at least 1")
    with fmap.ctx.scope():
        y = mpfr(x)
        s = mpfr(0)
        d = mpfr(1)
        for _ in range(l):
            if y == 0:
                raise CriticalOrbitPoint("orbit passes through the critical point")
            s += (-3 / (2 * y * y)) * d * d
            d *= 2 * y
            y = fmap(y)
    return s


def derivative_of_iterate(fmap: QuadraticMap, x, l: int) -> BigReal:
    with fmap.ctx.scope():
        y = mpfr(x)
        d = mpfr(1)
        for _ in range(l):
            d *= 2 * y
            y = fmap(y)
    return d


class CriticalOrbit:
    """Lazily extended orbit x_0 = 0, x_m = f(x_{m-1}).

    Points are computed once, in order, so the sequence depends only on the
    map. Alongside each point the orbit keeps a running bound on its absolute
    error, measured in units of 2^-bits and stored as a log2.
    """

    def __init__(self, fmap: QuadraticMap):
        self.map = fmap
        self._points: List[BigReal] = [mpfr(0, fmap.ctx.bits)]
        self._log_err: List[float] = [_NEG_INF]

    def __len__(self) -> int:
        return len(self._points)

    @property
    def length(self) -> int:
        return len(self._points)

    def extend_to(self, m: int) -> None:
        pts, errs = self._points, self._log_err
        if m < len(pts):
            return
        with self.map.ctx.scope():
            y = pts[-1]
            e = errs[-1]
            for _ in range(len(pts), m + 1):
                e = _accumulate(e, 1.0 + _log2_abs(y))
                y = self.map(y)
                pts.append(y)
                errs.append(e)

    def __getitem__(self, m: int) -> BigReal:
        self.extend_to(m)
        return self._points[m]

    def point(self, m: int) -> BigReal:
        return self[m]

    def points(self, stop: int) -> Sequence[BigReal]:
        self.extend_to(stop - 1)
        return self._points[:stop]

    def error_bound(self, m: int) -> BigReal:
        """Estimated absolute error of x_m."""
        self.extend_to(m)
        e = self._log_err[m]
        if e == _NEG_INF:
            return mpfr(0)
        return mpfr(2) ** (e - self.map.ctx.bits)

    def loss_bits(self, m: int) -> float:
        self.extend_to(m)
        return max(self._log_err[m], 0.0)

    def first_entry(self, interval: Interval, start: int, cap: int) -> Optional[int]:
        """Smallest t in (start, cap] with x_t strictly inside ``interval``."""
        pts = self._points
        lo, hi = interval.lo, interval.hi
        t = start + 1
        while t <= cap:
            stop = min(cap, t + 511)
            self.extend_to(stop)
            for s in range(t, stop + 1):
                if lo < pts[s] < hi:
                    return s
            t = stop + 1
        return None


@dataclass(frozen=True)
class MonotoneBranch:
    """A branch f^l : domain -> target along the orbit segment x_start, ..., x_{start+l}.

    ``chain[k]`` holds the preimages of (target.lo, target.hi) under f^(l-k),
    so ``chain[l] == (target.lo, target.hi)``. When ``folding`` is true the
    domain is symmetric about 0, ``chain[0]`` is None, only the endpoint
    ``chain[1][fold_end]`` has a preimage, and f^l = (monotone part) ∘ φ.
    """

    domain: Interval
    iterate_count: int
    orbit_anchor: int
    folding: bool
    target: Interval
    chain: Tuple[Tuple[BigReal, BigReal], ...]
    fold_end: int = 1

    @property
    def l(self) -> int:
        return self.iterate_count

    def images(self, fmap: QuadraticMap) -> List[Interval]:
        """f^m(domain) for m = 0..l, from the pullback chain (no forward error growth)."""
        out = [self.domain]
        xm = mpfr(0)
        for m in range(1, self.l + 1):
            p, q = self.chain[m]
            if self.folding:
                # f^m(domain) runs from the critical orbit point x_m to the image of the fold end
                with fmap.ctx.scope():
                    xm = fmap(xm)
                end = (p, q)[self.fold_end]
                lo, hi = (xm, end) if xm < end else (end, xm)
            else:
                lo, hi = (p, q) if p < q else (q, p)
            out.append(Interval(lo, hi))
        return out


def monotone_pullback(
    fmap: QuadraticMap,
    target: Interval,
    orbit: CriticalOrbit,
    start: int,
    l: int,
    allow_fold: bool = True,
) -> MonotoneBranch:
    """Component of f^-l(target) containing x_start, built one square root at a time.

    Every step except the innermost must be monotone (the interval being
    pulled back lies at or above the critical value c). The innermost step
    may fold when ``allow_fold`` is set; the domain is then symmetric.

    Raises:
        OutsideDomain: if f^l(x_start) is not in ``target``.
        FoldEncountered: if a non-final step straddles the critical value.
        PrecisionExhausted: if the orbit segment is too inaccurate to resolve ``target``.
    """
    if l < 1:
        raise InvalidInput("l must be at least 1")
    ctx = fmap.ctx
    c = fmap.c
    with ctx.scope():
        end_pt = orbit[start + l]
        if not (target.lo <= end_pt <= target.hi):
            raise OutsideDomain(f"x_{start + l} = {end_pt} is not in the target")
        if orbit.loss_bits(start + l) > ctx.bits - ctx.guard_bits:
            raise PrecisionExhausted(f"orbit point x_{start + l} has lost all precision")
        chain: List[Tuple[BigReal, BigReal]] = [(target.lo, target.hi)]
        p, q = target.lo, target.hi
        for k in range(start + l - 1, start - 1, -1):
            lo = p if p < q else q
            hi = q if p < q else p
            if hi - c < 0:
                raise OutsideDomain("interval lies below the critical value")
            if lo - c >= 0:
                x = orbit[k]
                if x == 0:
                    raise CriticalOrbitPoint(f"x_{k} is the critical point")
                s = 1 if x > 0 else -1
                p = eval_sqrt_branch(p - c, s)
                q = eval_sqrt_branch(q - c, s)
                chain.append((p, q))
                continue
            if k != start or not allow_fold:
                raise FoldEncountered(f"pullback straddles the critical value at step x_{k}")
            a = eval_sqrt_branch(hi - c, 1)
            chain.reverse()
            fold_end = 0 if chain[0][0] == hi else 1
            return MonotoneBranch(
                Interval(-a, a), l, start, True, target, (None,) + tuple(chain), fold_end
            )
        chain.reverse()
        p0, q0 = chain[0]
        dom = Interval(p0, q0) if p0 < q0 else Interval(q0, p0)
        return MonotoneBranch(dom, l, start, False, target, tuple(chain))


def branch_preimage(fmap: QuadraticMap, branch: MonotoneBranch, y, stop: int = 0) -> BigReal:
    """Pull a point of f^l(domain) back to step ``stop`` of the branch.

    Each square root takes the side of the corresponding chain interval.
    Folding branches can only be pulled back to step 1, the last monotone step.
    """
    if branch.folding and stop < 1:
        raise FoldEncountered("folding branch is monotone only down to step 1")
    c = fmap.c
    with fmap.ctx.scope():
        for k in range(branch.l - 1, stop - 1, -1):
            p, q = branch.chain[k]
            s = 1 if p + q > 0 else -1
            y = eval_sqrt_branch(y - c, s)
        return y


def chebyshev_nodes(interval: Interval, samples: int) -> List[BigReal]:
    """Chebyshev-Lobatto nodes, endpoints included.

    Grids with ``samples - 1`` dividing ``samples' - 1`` are nested, so a
    maximum over them can only grow as the grid refines (33 -> 65 -> 129).
    """
    if samples < 2:
        raise InvalidInput("need at least two sample points")
    mid = interval.midpoint
    half = interval.length / 2
    pi = gmpy2.const_pi()
    return [mid - half * gmpy2.cos(pi * j / (samples - 1)) for j in range(samples)]


def sampled_distortion(derivative: Callable, points: Sequence) -> BigReal:
    """max - min of log|derivative| over ``points``: max log|Dh(x)/Dh(y)| on the sample."""
    logs = []
    for x in points:
        d = derivative(x)
        if d == 0:
            raise CriticalOrbitPoint("derivative vanishes at a sample point")
        logs.append(gmpy2.log(abs(d)))
    return max(logs) - min(logs)


def log_derivative_spread(fmap: QuadraticMap, points: Sequence, l: int) -> BigReal:
    """max - min of log|Df^l| over ``points``."""
    return sampled_distortion(lambda x: derivative_of_iterate(fmap, x, l), points)


def branch_distortion(
    fmap: QuadraticMap,
    branch: MonotoneBranch,
    sub: Optional[Interval] = None,
    samples: int = 33,
    after_fold: Optional[bool] = None,
) -> BigReal:
    """Sampled distortion of the branch on ``sub`` (default: its whole domain).

    With ``after_fold`` (the default for folding branches) the result is the
    distortion of the diffeomorphic part h = f^(l-1)∘(y -> y + c) on φ(sub),
    that is of f^(l-1) on f(sub).
    """
    sub = sub or branch.domain
    if not branch.domain.contains_interval(sub):
        raise OutsideDomain("sub-interval is not inside the branch domain")
    if after_fold is None:
        after_fold = branch.folding
    with fmap.ctx.scope():
        if not after_fold:
            if sub.lo < 0 < sub.hi:
                raise OutsideDomain("sub-interval contains the critical point")
            return log_derivative_spread(fmap, chebyshev_nodes(sub, samples), branch.l)
        lo2, hi2 = sub.lo * sub.lo, sub.hi * sub.hi
        if sub.lo < 0 < sub.hi:
            ylo, yhi = mpfr(0), max(lo2, hi2)
        else:
            ylo, yhi = min(lo2, hi2), max(lo2, hi2)
        if branch.l == 1:
            return mpfr(0)
        nodes = chebyshev_nodes(Interval(ylo + fmap.c, yhi + fmap.c), samples)
        return log_derivative_spread(fmap, nodes, branch.l - 1)


def image_length_sum(fmap: QuadraticMap, branch: MonotoneBranch, first: int = 0, last: Optional[int] = None) -> BigReal:
    """Sum of |f^m(domain)| for m = first..last (default: 0..l-1)."""
    last = branch.l - 1 if last is None else last
    imgs = branch.images(fmap)
    with fmap.ctx.scope():
        total = mpfr(0)
        for m in range(first, last + 1):
            total += imgs[m].length
    return total
