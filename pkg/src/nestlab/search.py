"""Parameter search over return itineraries, and parameter scans.

A nest of depth k assigns each level a code: central, or non-central with
the side of the first return and whether the return after that lands in the
new central interval ("single landing"). The parameters realizing a given
code prefix form a parapuzzle piece; ``locate_itinerary`` finds nested
pieces one level at a time. Inside the piece for depth k the point
x_(r_(k+1)) sweeps I^k monotonically, so the center of the next piece and
its edges are roots of continuous functions of c, found by bisection and
then confirmed by classifying the candidate parameters outright.
"""

from __future__ import annotations

import concurrent.futures as cf
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import gmpy2
from gmpy2 import mpfr

from .dynamics import CriticalOrbit, QuadraticMap, monotone_pullback
from .errors import InvalidInput, NestlabError, NoAdmissiblePair, NotRealized
from .geometry import K_param, scaling_factor
from .hyperbolic import Interval
from .nest import (
    NestConfig,
    NestResult,
    ReturnClass,
    bookkeeping_violations,
    build_nest,
    initial_interval,
)
from .precision import PrecisionContext

log = logging.getLogger(__name__)

FIBONACCI_SIGNS = (1, -1, -1, 1)


@dataclass(frozen=True)
class LevelCode:
    symbol: ReturnClass
    sign: int = 0
    single_landing: Optional[bool] = None
    r_n: int = 0

    def __str__(self) -> str:
        if self.symbol is ReturnClass.CENTRAL:
            return "C"
        tag = "N" if self.single_landing else "M"
        return tag + ("+" if self.sign > 0 else "-")


def level_codes(nest: NestResult) -> List[LevelCode]:
    orbit = nest.orbit
    cap = nest.config.iterate_cap
    out = []
    with nest.map.ctx.scope():
        for lv in nest.levels[1:]:
            if lv.return_class is ReturnClass.CENTRAL:
                out.append(LevelCode(ReturnClass.CENTRAL, 0, None, lv.r_n))
                continue
            J = nest.levels[lv.n - 1].central.interval
            t = orbit.first_entry(J, lv.r_n, cap)
            single = t is not None and lv.central.interval.contains(orbit[t])
            sign = 1 if lv.first_return_value > 0 else -1
            out.append(LevelCode(ReturnClass.NONCENTRAL, sign, single, lv.r_n))
    return out


def fibonacci_return_time(n: int) -> int:
    a, b = 3, 5
    for _ in range(n - 1):
        a, b = b, a + b
    return a


@dataclass(frozen=True)
class ReturnItinerary:
    """Target code per level.

    ``signs`` and ``single_landing`` entries may be None (no constraint).
    An extendable itinerary (Fibonacci) defines a target at every depth.
    """

    symbols: Tuple[ReturnClass, ...] = ()
    signs: Tuple[Optional[int], ...] = ()
    single_landing: Tuple[Optional[bool], ...] = ()
    fibonacci: bool = False
    name: str = "custom"

    @classmethod
    def fibonacci_itinerary(cls) -> "ReturnItinerary":
        return cls(fibonacci=True, name="fibonacci")

    @classmethod
    def parse(cls, text: str) -> "ReturnItinerary":
        """Parse ``fibonacci`` or a comma list of C, N, N+, N-, with ``!`` for single landing."""
        text = text.strip()
        if text.lower() == "fibonacci":
            return cls.fibonacci_itinerary()
        symbols, signs, single = [], [], []
        for tok in (t.strip() for t in text.split(",")):
            if tok == "C":
                symbols.append(ReturnClass.CENTRAL)
                signs.append(None)
                single.append(None)
                continue
            if not tok.startswith("N"):
                raise InvalidInput(f"bad itinerary symbol {tok!r}")
            rest = tok[1:]
            landing = rest.endswith("!")
            rest = rest.rstrip("!")
            if rest not in ("", "+", "-"):
                raise InvalidInput(f"bad itinerary symbol {tok!r}")
            symbols.append(ReturnClass.NONCENTRAL)
            signs.append({"": None, "+": 1, "-": -1}[rest])
            single.append(True if landing else None)
        if not symbols:
            raise InvalidInput("empty itinerary")
        return cls(tuple(symbols), tuple(signs), tuple(single), name=text)

    @property
    def extendable(self) -> bool:
        return self.fibonacci

    def __len__(self) -> int:
        return 10**9 if self.fibonacci else len(self.symbols)

    def target(self, n: int) -> Tuple[ReturnClass, Optional[int], Optional[bool]]:
        """(symbol, sign, single_landing) required at level n >= 1."""
        if self.fibonacci:
            return ReturnClass.NONCENTRAL, FIBONACCI_SIGNS[(n - 1) % 4], True
        i = n - 1
        if i >= len(self.symbols):
            raise InvalidInput(f"itinerary has only {len(self.symbols)} levels")
        sign = self.signs[i] if i < len(self.signs) else None
        single = self.single_landing[i] if i < len(self.single_landing) else None
        return self.symbols[i], sign, single

    def level_matches(self, n: int, code: LevelCode) -> bool:
        symbol, sign, single = self.target(n)
        if code.symbol is not symbol:
            return False
        if sign is not None and code.sign != sign:
            return False
        if single is not None and code.single_landing != single:
            return False
        if self.fibonacci and code.r_n != fibonacci_return_time(n):
            return False
        return True

    def matches(self, codes: Sequence[LevelCode], k: int) -> bool:
        if len(codes) < k:
            return False
        return all(self.level_matches(n, codes[n - 1]) for n in range(1, k + 1))


# classification

@dataclass(frozen=True)
class ScanRow:
    c: str
    termination: str
    depth_reached: int
    return_classes: Tuple[str, ...]
    mu_last: Optional[str] = None
    K_last: Optional[str] = None
    kappa: Tuple[int, ...] = ()
    L_set: Tuple[int, ...] = ()
    cascades: Tuple[Tuple[int, int], ...] = ()
    bits: int = 0
    bookkeeping_ok: bool = True
    error: str = ""


def _short(x) -> Optional[str]:
    if x is None:
        return None
    return format(x, ".17g")


def classify_parameter(c, depth: int, config: Optional[NestConfig] = None, bits: int = 256) -> ScanRow:
    """Build the nest at ``c`` and summarise it; failures land in the row, never raise."""
    config = config or NestConfig(depth=depth)
    c_text = c if isinstance(c, str) else None
    try:
        fmap = QuadraticMap.from_value(c, PrecisionContext(bits=bits))
    except NestlabError as exc:
        return ScanRow(str(c), "InvalidInput", -1, (), error=str(exc))
    try:
        nest = build_nest(fmap, depth, config)
        codes = level_codes(nest) if nest.levels else []
        mu = K = None
        if nest.depth >= 1:
            mu = scaling_factor(nest, nest.depth)
            try:
                K = K_param(nest, nest.depth)
            except NoAdmissiblePair:
                K = None
        with nest.map.ctx.scope():
            return ScanRow(
                c=c_text if c_text is not None else format(fmap.c, ".40g"),
                termination=nest.termination.value,
                depth_reached=nest.depth,
                return_classes=tuple(str(x) for x in codes),
                mu_last=_short(mu),
                K_last=_short(K),
                kappa=tuple(nest.kappa[n] for n in sorted(nest.kappa)),
                L_set=tuple(nest.L_set),
                cascades=tuple((cs.start_level, cs.length) for cs in nest.cascades),
                bits=nest.map.ctx.bits,
                bookkeeping_ok=not bookkeeping_violations(nest),
            )
    except NestlabError as exc:
        return ScanRow(str(c), type(exc).__name__, -1, (), error=str(exc))


def _grid(window: Tuple[str, str], steps: int) -> List[Fraction]:
    lo, hi = (Fraction(str(w)) for w in window)
    if not lo < hi:
        raise InvalidInput("scan window needs lo < hi")
    return [lo + (hi - lo) * Fraction(2 * i + 1, 2 * steps) for i in range(steps)]


def _fraction_text(q: Fraction, digits: int = 40) -> str:
    """Exact decimal when it terminates in at most ``digits`` places, else rounded."""
    s = f"{float(q):.17g}"
    if Fraction(s) == q:
        return s
    scaled = round(q * 10**digits)
    sign = "-" if scaled < 0 else ""
    body = str(abs(scaled)).rjust(digits + 1, "0")
    return f"{sign}{body[:-digits]}.{body[-digits:]}".rstrip("0")


def _classify_job(args):
    c_text, depth, config, bits = args
    return classify_parameter(c_text, depth, config, bits)


def scan(
    window: Tuple[str, str] = ("-2", "-1.4"),
    steps: int = 100,
    depth: int = 6,
    bits: int = 256,
    config: Optional[NestConfig] = None,
    jobs: int = 1,
) -> List[ScanRow]:
    """Classify ``steps`` parameters at the midpoints of a uniform partition of the window."""
    if steps < 1:
        raise InvalidInput("steps must be at least 1")
    config = config or NestConfig(depth=depth)
    tasks = [(_fraction_text(q), depth, config, bits) for q in _grid(window, steps)]
    if jobs <= 1:
        return [_classify_job(t) for t in tasks]
    with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_classify_job, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


# locating itineraries

@dataclass
class Bracket:
    lo: object
    hi: object
    depth: int
    bits: int
    widths: List[float] = field(default_factory=list)
    validated_bits: int = 0

    def __iter__(self) -> Iterator:
        yield self.lo
        yield self.hi

    @property
    def width(self):
        return self.hi - self.lo

    def midpoint_text(self, digits: int) -> str:
        with gmpy2.context(precision=self.bits):
            mid = (self.lo + self.hi) / 2
            return format(mid, f".{digits}g")

    def endpoint_texts(self, digits: int) -> Tuple[str, str]:
        with gmpy2.context(precision=self.bits):
            return format(self.lo, f".{digits}g"), format(self.hi, f".{digits}g")


class _Searcher:
    def __init__(self, target: ReturnItinerary, ctx: PrecisionContext, config: NestConfig):
        self.target = target
        self.ctx = ctx
        self.config = config

    def fmap(self, c) -> QuadraticMap:
        return QuadraticMap(mpfr(c, self.ctx.bits), self.ctx)

    def codes(self, c, k: int) -> List[LevelCode]:
        cfg = NestConfig(
            depth=k,
            horizon_factor=0,
            cascade_cap=self.config.cascade_cap,
            iterate_cap=self.config.iterate_cap,
            max_bits=self.ctx.bits,
        )
        nest = build_nest(self.fmap(c), k, cfg)
        if nest.depth < k:
            return level_codes(nest) if nest.levels else []
        return level_codes(nest)[:k]

    def realizes(self, c, k: int) -> bool:
        try:
            return self.target.matches(self.codes(c, k), k)
        except NestlabError:
            return False

    # continuous functions on a piece, given its return times

    def orbit_point(self, c, t: int):
        fmap = self.fmap(c)
        with self.ctx.scope():
            x = mpfr(0)
            for _ in range(t):
                x = fmap(x)
            return x

    def half_width(self, c, rs: Sequence[int]):
        """Half-length of I^len(rs) at c, pulling back with the given return times."""
        fmap = self.fmap(c)
        orbit = CriticalOrbit(fmap)
        J = initial_interval(fmap)
        for r in rs:
            branch = monotone_pullback(fmap, J, orbit, 0, r, allow_fold=True)
            J = branch.domain
        return J.hi

    def boundary_gap(self, c, t: int, rs: Sequence[int]):
        """|x_t| - |I^k|/2: negative inside the central interval."""
        try:
            with self.ctx.scope():
                return abs(self.orbit_point(c, t)) - self.half_width(c, rs)
        except NestlabError:
            return mpfr(1)


def _bisect(fn: Callable, a, b, steps: int):
    """Bisection on a sign change of fn between a and b; returns the final pair (a, b)."""
    fa = fn(a)
    for _ in range(steps):
        m = (a + b) / 2
        if m == a or m == b:
            break
        fm = fn(m)
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return a, b


def _outside(fn: Callable, center, bound, steps: int):
    """Nearest point to ``center`` on the way to ``bound`` where fn turns positive.

    Steps out from ``center`` by doubling distances, so a piece much smaller
    than the segment is not jumped over.
    """
    span = bound - center
    for j in range(steps, -1, -1):
        c = center + span * mpfr(2) ** (-j)
        if fn(c) > 0:
            return c
    return bound


def _bool_edge(pred: Callable, inside, outside, steps: int):
    """Last point known to satisfy ``pred`` on the segment from inside to outside."""
    for _ in range(steps):
        m = (inside + outside) / 2
        if m == inside or m == outside:
            break
        if pred(m):
            inside = m
        else:
            outside = m
    return inside


def locate_itinerary(
    target: ReturnItinerary,
    precision_digits: int = 40,
    max_depth: int = 10,
    window: Tuple[str, str] = ("-2", "-1"),
    bits: Optional[int] = None,
    config: Optional[NestConfig] = None,
    scan_points: int = 400,
    validate: bool = True,
) -> Bracket:
    """Bracket [c_lo, c_hi] whose endpoints both realize the target prefix.

    Extendable targets are deepened until the bracket is narrower than
    10^-precision_digits and at least ``max_depth`` levels deep. Finite
    targets are realized to their full length (capped at ``max_depth``) and
    then narrowed onto the parameter where the critical point returns
    exactly to 0 at the next level. With ``validate`` both endpoints are
    re-classified at four times the working precision.

    Raises:
        NotRealized: if some level of the target cannot be realized in the window.
    """
    if precision_digits < 1 or max_depth < 1:
        raise InvalidInput("precision_digits and max_depth must be positive")
    bits = bits or max(256, int(precision_digits * 3.33 * 2) + 64)
    ctx = PrecisionContext(bits=bits)
    config = config or NestConfig()
    S = _Searcher(target, ctx, config)
    final_depth = max_depth if target.extendable else min(max_depth, len(target.symbols))
    goal = mpfr(10, bits) ** (-precision_digits)
    steps = bits + 16

    with ctx.scope():
        candidates = _first_level_candidates(S, window, scan_points, steps)
        if not candidates:
            raise NotRealized(f"level 1 of {target.name} is not realized in the window")
        last_error = None
        for lo, hi in candidates:
            try:
                bracket = _deepen(S, lo, hi, final_depth, goal, steps)
                break
            except NotRealized as exc:
                last_error = exc
        else:
            raise last_error
        if not target.extendable:
            bracket = _narrow_finite(S, bracket, goal, steps)
        if validate:
            vctx = PrecisionContext(bits=4 * bits)
            V = _Searcher(target, vctx, config)
            for end in bracket:
                if not V.realizes(mpfr(end, 4 * bits), bracket.depth):
                    raise NotRealized(f"endpoint {end} fails validation at {4 * bits} bits")
            bracket.validated_bits = 4 * bits
        return bracket


def _first_level_candidates(S: _Searcher, window, points: int, steps: int):
    lo, hi = (S.ctx.real(w) for w in window)
    grid = [lo + (hi - lo) * i / points for i in range(1, points)]
    good = [S.realizes(c, 1) for c in grid]
    runs = []
    i = 0
    while i < len(grid):
        if not good[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(grid) and good[j + 1]:
            j += 1
        left = _bool_edge(lambda c: S.realizes(c, 1), grid[i], grid[i - 1] if i > 0 else lo, 60)
        right = _bool_edge(lambda c: S.realizes(c, 1), grid[j], grid[j + 1] if j + 1 < len(grid) else hi, 60)
        runs.append((left, right))
        i = j + 1
    return runs


def _deepen(S: _Searcher, lo, hi, final_depth: int, goal, steps: int) -> Bracket:
    k = 1
    widths = [float(hi - lo)]
    while True:
        if k >= final_depth and (not S.target.extendable or hi - lo <= goal):
            return Bracket(lo, hi, k, S.ctx.bits, widths)
        lo, hi = _next_piece(S, lo, hi, k, steps)
        k += 1
        widths.append(float(hi - lo))
        log.info("level %d piece width %.3e", k, widths[-1])


def _next_piece(S: _Searcher, L, H, k: int, steps: int, samples: int = 128):
    """Piece realizing prefix k+1 inside [L, H], whose endpoints realize prefix k.

    For finite targets the realizing set of a prefix can be a union of
    pieces with different return times, so the sweep may fail; then a
    sample point realizing k+1 is bracketed by bisection on the prefix test.
    """
    try:
        return _swept_piece(S, L, H, k, steps)
    except NotRealized as exc:
        if S.target.extendable:
            raise
        failure = exc
    realizes = lambda c: S.realizes(c, k + 1)
    for i in range(1, samples):
        c = L + (H - L) * i / samples
        if realizes(c):
            left = _bool_edge(realizes, c, L, steps)
            right = _bool_edge(realizes, c, H, steps)
            return _validated(S, left, right, k + 1, steps, center=c)
    raise failure


def _swept_piece(S: _Searcher, L, H, k: int, steps: int):
    """The sweep construction: x_(r_(k+1)) crosses 0 between L and H."""
    rs = [code.r_n for code in S.codes(L, k)]
    r_next = _next_return(S, L, rs)
    rs_next = rs + [r_next]
    G = lambda c: S.orbit_point(c, r_next)
    if (G(L) > 0) == (G(H) > 0):
        raise NotRealized(f"return value at level {k + 1} does not sweep the piece")
    a, b = _bisect(G, L, H, steps)
    c0 = (a + b) / 2
    symbol, sign, single = S.target.target(k + 1)
    D = lambda c: S.boundary_gap(c, r_next, rs_next)

    if symbol is ReturnClass.CENTRAL:
        centers = [c0]
        D_piece = D
    else:
        side_end = L if (G(L) > 0) == (sign is None or sign > 0) else H
        if sign is None:
            side_end = H if abs(H - c0) > abs(L - c0) else L
        if single:
            p = fibonacci_return_time(k) if S.target.fibonacci else None
            centers = _landing_centers(S, c0, side_end, r_next, p, k, steps)
            t2 = r_next + p if p is not None else None
            D_piece = (lambda c: S.boundary_gap(c, t2, rs_next)) if t2 else None
        else:
            edge = _bisect(D, c0, side_end, steps)[1]
            return _validated(S, edge, side_end, k + 1, steps)
    for cstar in centers:
        if not S.realizes(cstar, k + 1):
            continue
        if D_piece is not None:
            left = _bisect(D_piece, cstar, _outside(D_piece, cstar, L, steps), steps)[0]
            right = _bisect(D_piece, cstar, _outside(D_piece, cstar, H, steps), steps)[0]
        else:
            left = _bool_edge(lambda c: S.realizes(c, k + 1), cstar, L, steps)
            right = _bool_edge(lambda c: S.realizes(c, k + 1), cstar, H, steps)
        try:
            return _validated(S, left, right, k + 1, steps, center=cstar)
        except NotRealized:
            continue
    raise NotRealized(f"level {k + 1} of {S.target.name} not realized in the piece")


def _next_return(S: _Searcher, c, rs: Sequence[int]) -> int:
    fmap = S.fmap(c)
    orbit = CriticalOrbit(fmap)
    with S.ctx.scope():
        J = Interval(-S.half_width(c, rs), S.half_width(c, rs))
    t = orbit.first_entry(J, 0, S.config.iterate_cap)
    if t is None:
        raise NotRealized("no further return within the iterate cap")
    return t


def _landing_centers(S: _Searcher, c0, side_end, r_next: int, p: Optional[int], k: int, steps: int, samples: int = 64):
    """Parameters on the side segment where the second return hits 0 exactly.

    Without a known landing return time, fall back to sample points that
    realize the next level outright.
    """
    seg = [c0 + (side_end - c0) * i / samples for i in range(1, samples)]
    if p is None:
        return [c for c in seg if S.realizes(c, k + 1)][:1]
    F = lambda c: S.orbit_point(c, r_next + p)
    vals = [F(c) for c in seg]
    out = []
    for i in range(len(seg) - 1):
        if (vals[i] > 0) != (vals[i + 1] > 0):
            a, b = _bisect(F, seg[i], seg[i + 1], steps)
            out.append((a + b) / 2)
    return out


def _validated(S: _Searcher, a, b, k: int, steps: int, center=None):
    """Pull endpoints toward the center until both realize prefix k."""
    lo, hi = (a, b) if a < b else (b, a)
    mid = center if center is not None else (lo + hi) / 2
    lo = _pull_in(S, lo, mid, k)
    hi = _pull_in(S, hi, mid, k)
    if not lo < hi:
        raise NotRealized("collapsed bracket")
    return lo, hi


def _narrow_finite(S: _Searcher, bracket: Bracket, goal, steps: int, tries: int = 64) -> Bracket:
    """Shrink a finite-target bracket onto a parameter where x_t = 0.

    t starts at the next return r_(k+1). When x_t keeps one sign across the
    bracket, later times are tried; the first zero whose neighbourhood still
    realizes the prefix wins.
    """
    k = bracket.depth
    L, H = bracket.lo, bracket.hi
    rs = [code.r_n for code in S.codes(L, k)]
    try:
        t = _next_return(S, L, rs)
    except NotRealized:
        t = rs[-1] + 1
    last = None
    for _ in range(tries):
        G = lambda c, t=t: S.orbit_point(c, t)
        t += 1
        fa = G(L)
        if (fa > 0) == (G(H) > 0):
            continue
        a, b = L, H
        while b - a > goal:
            m = (a + b) / 2
            if m == a or m == b:
                break
            fm = G(m)
            if (fm > 0) == (fa > 0):
                a, fa = m, fm
            else:
                b = m
        try:
            lo, hi = _validated(S, a, b, k, steps)
        except NotRealized as exc:
            last = exc
            continue
        bracket.widths.append(float(hi - lo))
        return Bracket(lo, hi, k, bracket.bits, bracket.widths)
    raise last or NotRealized("no orbit point changes sign across the bracket")


def _pull_in(S: _Searcher, end, mid, k: int):
    """Move ``end`` toward ``mid`` by growing fractions until it realizes prefix k."""
    frac = mpfr(2) ** -30
    point = end
    for _ in range(31):
        if S.realizes(point, k):
            return point
        point = end + (mid - end) * frac
        frac *= 2
    raise NotRealized(f"no point between {end} and {mid} realizes the prefix")
