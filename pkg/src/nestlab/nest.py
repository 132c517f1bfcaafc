"""Principal nest I^0 ⊃ I^1 ⊃ ... of a real quadratic map.

Level n is built from level n-1 by following the critical orbit: the first
return time r_n of 0 to I^(n-1) determines the central interval I^n as the
folding pullback of I^(n-1) along x_0, ..., x_(r_n), and later visits of the
orbit to I^(n-1) outside I^n give the non-central intervals, each the
monotone pullback of I^(n-1) along the orbit until it first returns.

The seed is I^0 = [alpha, -alpha], bounded by the orientation-reversing fixed
point and its symmetric preimage.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from gmpy2 import mpfr

from .dynamics import CriticalOrbit, MonotoneBranch, QuadraticMap, iterate, monotone_pullback
from .errors import (
    Degenerate,
    Escape,
    FoldEncountered,
    InvalidInput,
    MissingLevel,
    NonRecurrent,
    NoSignChange,
    PrecisionExhausted,
)
from .hyperbolic import Interval
from .precision import BigReal, bracketed_root

log = logging.getLogger(__name__)


class ReturnClass(str, enum.Enum):
    CENTRAL = "Central"
    NONCENTRAL = "NonCentral"


class Termination(str, enum.Enum):
    MAX_DEPTH = "MaxDepth"
    RENORMALIZABLE = "Renormalizable"
    NON_RECURRENT = "NonRecurrent"
    ESCAPE = "Escape"
    DEGENERATE = "Degenerate"
    PRECISION_EXHAUSTED = "PrecisionExhausted"
    CASCADE_CAP_EXCEEDED = "CascadeCapExceeded"


@dataclass(frozen=True)
class NestConfig:
    depth: int = 10
    horizon_factor: int = 2
    cascade_cap: int = 64
    iterate_cap: int = 20000
    max_bits: int = 1024
    # orbit error must stay this many bits below the smallest level interval
    orbit_margin_bits: int = 16

    def __post_init__(self):
        if self.depth < 0:
            raise InvalidInput("depth must be nonnegative")
        if self.horizon_factor < 0:
            raise InvalidInput("horizon_factor must be non-negative")
        if self.cascade_cap < 1 or self.iterate_cap < 1:
            raise InvalidInput("caps must be positive")


@dataclass(frozen=True)
class LevelInterval:
    interval: Interval
    signed_index: int
    return_time: int
    first_visit_time: int
    branch: Optional[MonotoneBranch] = field(default=None, compare=False, repr=False)

    @property
    def is_central(self) -> bool:
        return self.signed_index == 0


@dataclass(frozen=True)
class NestLevel:
    n: int
    central: LevelInterval
    noncentral: Tuple[LevelInterval, ...] = ()
    return_class: Optional[ReturnClass] = None
    r_n: int = 0
    first_return_value: Optional[BigReal] = None
    horizon: int = 0

    @property
    def intervals(self) -> Tuple[LevelInterval, ...]:
        return (self.central,) + tuple(self.noncentral)


@dataclass(frozen=True)
class Cascade:
    start_level: int
    length: int


@dataclass(frozen=True)
class RenormalizationCheck:
    renormalizable: bool
    cap_exceeded: bool = False
    restrictive_point: Optional[BigReal] = None

    def __bool__(self) -> bool:
        return self.renormalizable or self.cap_exceeded


@dataclass
class NestResult:
    map: QuadraticMap
    levels: List[NestLevel]
    termination: Termination
    termination_level: int
    message: str = ""
    cascades: List[Cascade] = field(default_factory=list)
    kappa: Dict[int, int] = field(default_factory=dict)
    L_set: List[int] = field(default_factory=list)
    orbit: Optional[CriticalOrbit] = field(default=None, repr=False)
    config: NestConfig = field(default_factory=NestConfig)

    @property
    def depth(self) -> int:
        """Deepest level built (0 means only I^0, -1 means none)."""
        return len(self.levels) - 1

    def level(self, n: int) -> NestLevel:
        if not 0 <= n < len(self.levels):
            raise MissingLevel(f"level {n} was not built (depth {self.depth})")
        return self.levels[n]


def initial_interval(fmap: QuadraticMap) -> Interval:
    """I^0 = [alpha, -alpha] for c in (-2, -3/4).

    Raises:
        Escape: c outside [-2, 1/4], the critical orbit is unbounded.
        Degenerate: f(0) = -beta (c = -2), the critical orbit lands on a fixed point.
        NonRecurrent: c >= -3/4, alpha attracts and the orbit never enters I^0 for good.
    """
    c = fmap.c
    with fmap.ctx.scope():
        if c < -2 or 4 * c > 1:
            raise Escape(f"critical orbit escapes for c = {c}")
        beta = fmap.beta
        if c == -beta or c == beta:
            raise Degenerate(f"critical value {c} is a fixed point")
        if 4 * c >= -3:
            raise NonRecurrent(f"alpha is not repelling for c = {c}")
        alpha = fmap.alpha
        return Interval(alpha, -alpha)


def seed_level(fmap: QuadraticMap) -> NestLevel:
    i0 = initial_interval(fmap)
    return NestLevel(0, LevelInterval(i0, 0, 0, 0))


def _check_orbit_resolution(fmap, orbit, upto: int, scale) -> None:
    cfg_bits = fmap.ctx.bits - fmap.ctx.guard_bits
    if orbit.loss_bits(upto) > cfg_bits:
        raise PrecisionExhausted(f"orbit up to x_{upto} has lost all working precision")
    with fmap.ctx.scope():
        if orbit.error_bound(upto) * 2**16 > scale:
            raise PrecisionExhausted(
                f"orbit error at x_{upto} is not small against level intervals of size {float(scale):.3e}"
            )


def _snap(K: Interval, anchors, tol) -> Interval:
    """Move endpoints within ``tol`` of an anchor onto it.

    Level-1 intervals share endpoints with I^1 and with the boundary of I^0;
    snapping makes that contact exact instead of a rounding accident.
    """
    lo, hi = K.lo, K.hi
    for a in anchors:
        if abs(lo - a) <= tol:
            lo = a
        if abs(hi - a) <= tol:
            hi = a
    return Interval(lo, hi)


def build_level(
    fmap: QuadraticMap,
    orbit: CriticalOrbit,
    prev: NestLevel,
    config: NestConfig = NestConfig(),
    i0_length: Optional[BigReal] = None,
    horizon: Optional[int] = None,
) -> NestLevel:
    """Build level n = prev.n + 1.

    The horizon for collecting non-central intervals defaults to
    ``config.horizon_factor`` times the first return time of 0 into the new
    central interval. A factor of 0 keeps only the interval holding x_r.
    """
    ctx = fmap.ctx
    n = prev.n + 1
    J = prev.central.interval
    cap = config.iterate_cap
    r = orbit.first_entry(J, 0, cap)
    if r is None:
        raise NonRecurrent(f"no return of the critical orbit to level {n - 1} within {cap} iterates")
    branch = monotone_pullback(fmap, J, orbit, 0, r, allow_fold=True)
    if not branch.folding:
        raise FoldEncountered("central pullback did not fold at the critical point")
    I = branch.domain
    with ctx.scope():
        i0_length = i0_length if i0_length is not None else J.length
        if I.length < ctx.tolerance * i0_length:
            raise PrecisionExhausted(f"|I^{n}| is below the resolution of {ctx.bits} bits")
        y = orbit[r]
        return_class = ReturnClass.CENTRAL if I.contains(y) else ReturnClass.NONCENTRAL

        if horizon is None and config.horizon_factor == 0:
            # only the interval holding x_r
            horizon = r
        elif horizon is None:
            R = orbit.first_entry(I, 0, cap)
            horizon = config.horizon_factor * (R if R is not None else 2 * r)
            horizon = min(horizon, cap)

        found: List[LevelInterval] = []
        smallest = I.length
        tol = ctx.tolerance * i0_length
        t = r - 1
        while True:
            t = orbit.first_entry(J, t, horizon)
            if t is None:
                break
            x = orbit[t]
            if I.lo <= x <= I.hi or any(li.interval.lo <= x <= li.interval.hi for li in found):
                continue
            t_back = orbit.first_entry(J, t, cap)
            if t_back is None:
                log.debug("orbit point x_%d does not return within the cap", t)
                continue
            p = t_back - t
            sub = monotone_pullback(fmap, J, orbit, t, p, allow_fold=False)
            K = _snap(sub.domain, [J.lo, J.hi, I.lo, I.hi], tol)
            if any(abs(K.lo - li.interval.lo) <= tol and abs(K.hi - li.interval.hi) <= tol for li in found):
                continue
            if K.lo <= 0 <= K.hi:
                raise FoldEncountered(f"non-central interval at x_{t} contains the critical point")
            side = 1 if x > 0 else -1
            found.append(LevelInterval(K, side * (len(found) + 1), p, t, sub))
            if K.length < smallest:
                smallest = K.length

    _check_orbit_resolution(fmap, orbit, max(horizon, r), smallest)
    central = LevelInterval(I, 0, r, 0, branch)
    return NestLevel(n, central, tuple(found), return_class, r, y, horizon)


def detect_renormalizable(
    level: NestLevel,
    fmap: QuadraticMap,
    cascade_length: int = 0,
    cap: int = 64,
) -> RenormalizationCheck:
    """Look for a restrictive interval of the central branch G = f^r on I^n.

    G is even on I^n = [-a, a] with G(0) = y and G(±a) = e, an endpoint of
    I^(n-1). With s the sign of e, the point q in (0, a] solving G(q) = s q
    bounds the candidate invariant interval [-q, q]; it is invariant exactly
    when |y| <= q. Only central returns can be renormalizable this way; a
    central cascade of length ``cap`` or more is reported as cap-exceeded.
    """
    if level.return_class is not ReturnClass.CENTRAL:
        return RenormalizationCheck(False)
    if cascade_length >= cap:
        return RenormalizationCheck(False, cap_exceeded=True)
    y = level.first_return_value
    r = level.r_n
    a = level.central.interval.hi
    with fmap.ctx.scope():
        if y == 0:
            return RenormalizationCheck(True, restrictive_point=a)
        G = lambda x: iterate(fmap, x, r)[0]
        e = G(a)
        s = 1 if e > 0 else -1
        h = lambda x: G(x) - s * x
        try:
            q = bracketed_root(h, mpfr(0), a, fmap.ctx.tolerance * a)
        except NoSignChange:
            return RenormalizationCheck(False)
        return RenormalizationCheck(abs(y) <= q, restrictive_point=q)


def _bookkeeping(levels: List[NestLevel]):
    cascades: List[Cascade] = []
    kappa: Dict[int, int] = {0: 0} if levels else {}
    L_set: List[int] = []
    run_start = None
    count = 0
    for lv in levels[1:]:
        if lv.return_class is ReturnClass.NONCENTRAL:
            L_set.append(lv.n)
            count += 1
            if run_start is not None:
                cascades.append(Cascade(run_start, lv.n - run_start))
                run_start = None
        elif run_start is None:
            run_start = lv.n
        kappa[lv.n] = count
    if run_start is not None:
        cascades.append(Cascade(run_start, levels[-1].n - run_start + 1))
    return cascades, kappa, L_set


def _build_at(fmap: QuadraticMap, depth: int, config: NestConfig, final: bool = False):
    """One attempt at the map's precision. Returns (levels, termination, level, message, orbit).

    Precision exhaustion propagates unless ``final`` is set, in which case
    the levels built so far are kept.
    """
    try:
        seed = seed_level(fmap)
    except Escape as exc:
        return [], Termination.ESCAPE, 0, str(exc), None
    except Degenerate as exc:
        return [], Termination.DEGENERATE, 0, str(exc), None
    except NonRecurrent as exc:
        return [], Termination.NON_RECURRENT, 0, str(exc), None
    orbit = CriticalOrbit(fmap)
    levels = [seed]
    i0_len = seed.central.interval.length
    run = 0
    while len(levels) <= depth:
        prev = levels[-1]
        n = prev.n + 1
        try:
            lv = build_level(fmap, orbit, prev, config, i0_len)
        except NonRecurrent as exc:
            return levels, Termination.NON_RECURRENT, n, str(exc), orbit
        except PrecisionExhausted as exc:
            if not final:
                raise
            return levels, Termination.PRECISION_EXHAUSTED, n, str(exc), orbit
        J, I = prev.central.interval, lv.central.interval
        with fmap.ctx.scope():
            slack = fmap.ctx.tolerance * i0_len
            strictly_inside = J.lo + slack < I.lo and I.hi < J.hi - slack
        if not strictly_inside:
            # the return branch maps I^(n-1) into itself: a restrictive interval
            return levels, Termination.RENORMALIZABLE, n, f"I^{n} coincides with I^{n - 1}", orbit
        levels.append(lv)
        run = run + 1 if lv.return_class is ReturnClass.CENTRAL else 0
        check = detect_renormalizable(lv, fmap, run, config.cascade_cap)
        if check.cap_exceeded:
            return levels, Termination.CASCADE_CAP_EXCEEDED, n, f"central cascade reached {run} levels", orbit
        if check.renormalizable:
            return levels, Termination.RENORMALIZABLE, n, f"restrictive interval of period {lv.r_n} at level {n}", orbit
    return levels, Termination.MAX_DEPTH, len(levels) - 1, "", orbit


def build_nest(fmap: QuadraticMap, depth: int = 10, config: Optional[NestConfig] = None) -> NestResult:
    """Build levels 0..depth, restarting at doubled precision when resolution runs out.

    Never raises for dynamical outcomes: escape, degeneracy, non-recurrence,
    renormalizability and precision exhaustion are all recorded as the
    termination reason.
    """
    config = config or NestConfig(depth=depth)
    current = fmap
    while True:
        final = current.ctx.bits * 2 > config.max_bits
        try:
            levels, term, at, msg, orbit = _build_at(current, depth, config, final)
            break
        except PrecisionExhausted as exc:
            bits = current.ctx.bits * 2
            log.info("escalating precision to %d bits: %s", bits, exc)
            current = current.at_precision(current.ctx.with_bits(bits))
    cascades, kappa, L_set = _bookkeeping(levels)
    return NestResult(current, levels, term, at, msg, cascades, kappa, L_set, orbit, config)


def bookkeeping_violations(result: NestResult) -> List[str]:
    """Check the kappa, cascade and L-set records against the level classes."""
    problems: List[str] = []
    levels = result.levels
    if not levels:
        return problems
    prev = 0
    for lv in levels[1:]:
        k = result.kappa.get(lv.n)
        step = k - prev if k is not None else None
        expected = 1 if lv.return_class is ReturnClass.NONCENTRAL else 0
        if step != expected:
            problems.append(f"kappa step {step} at level {lv.n}, expected {expected}")
        if (lv.n in result.L_set) != (expected == 1):
            problems.append(f"L-set membership wrong at level {lv.n}")
        prev = k if k is not None else prev
    central = {lv.n for lv in levels[1:] if lv.return_class is ReturnClass.CENTRAL}
    covered = set()
    for cs in result.cascades:
        run = set(range(cs.start_level, cs.start_level + cs.length))
        if run - central or run & covered:
            problems.append(f"cascade {cs} does not fit the central levels")
        covered |= run
        end = cs.start_level + cs.length
        if end < len(levels):
            # completed cascade: the cascade map sends 0 into I^(end-1) minus I^end
            y = levels[end].first_return_value
            if not (levels[end - 1].central.interval.contains(y) and not levels[end].central.interval.contains(y)):
                problems.append(f"cascade {cs} exit value is not in I^{end - 1} minus I^{end}")
            if levels[end].r_n != levels[cs.start_level].r_n:
                problems.append(f"cascade {cs} return time changes inside the cascade")
    if covered != central:
        problems.append("cascades do not partition the central levels")
    return problems
