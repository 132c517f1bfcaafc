"""Per-level geometric parameters of a built nest.

Every quantity is computed over the intervals the critical orbit actually
visited within the level's horizon. The true first-return domain can have
more (even infinitely many) components, so K is an upper estimate of the
infimum it stands for; each row carries ``interval_count`` for that reason.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from gmpy2 import mpfr

from .dynamics import branch_distortion
from .errors import DistanceZero, MissingLevel, NoAdmissiblePair, NoNonCentral
from .hyperbolic import GapConfiguration, Interval, asymmetric_length, poincare_length
from .nest import NestResult, ReturnClass
from .precision import BigReal


def _level_pair(nest: NestResult, n: int):
    if n < 1 or n > nest.depth:
        raise MissingLevel(f"level {n} needs levels {n - 1} and {n}; depth is {nest.depth}")
    return nest.levels[n - 1], nest.levels[n]


def scaling_factor(nest: NestResult, n: int) -> BigReal:
    prev, cur = _level_pair(nest, n)
    with nest.map.ctx.scope():
        return cur.central.interval.length / prev.central.interval.length


def lambda_param(nest: NestResult, n: int) -> Tuple[BigReal, BigReal]:
    """(λ_n, λ*_n): largest Poincaré length of a non-central interval in I^(n-1)."""
    prev, cur = _level_pair(nest, n)
    if not cur.noncentral:
        raise NoNonCentral(f"level {n} has no non-central intervals")
    J = prev.central.interval
    with nest.map.ctx.scope():
        lam = max(_length_in(J, li.interval) for li in cur.noncentral)
        return lam, min(lam, mpfr(1))


def _length_in(J: Interval, K: Interval) -> BigReal:
    """P(K|J), infinite when K reaches the boundary of J (possible on level 1 only)."""
    if K.lo <= J.lo or K.hi >= J.hi:
        return mpfr("inf")
    return poincare_length(GapConfiguration.from_nested(J, K))


def interval_alpha(interval: Interval) -> BigReal:
    d = interval.distance_to(0)
    if d == 0:
        raise DistanceZero(f"[{interval.lo}, {interval.hi}] touches the critical point")
    return interval.length / d


def alpha_param(nest: NestResult, n: int) -> BigReal:
    _, cur = _level_pair(nest, n)
    if not cur.noncentral:
        raise NoNonCentral(f"level {n} has no non-central intervals")
    with nest.map.ctx.scope():
        return max(interval_alpha(li.interval) for li in cur.noncentral)


def pair_asymmetric_length(first, second) -> Optional[BigReal]:
    """Q of the gap between two level intervals, or None if the pair is not admissible.

    Admissible means the signed indices have product >= 0 and the gap does
    not contain 0. The near flank is the interval closer to 0.
    """
    if first.signed_index * second.signed_index < 0:
        return None
    A, B = first.interval, second.interval
    if A.lo > B.lo:
        A, B = B, A
        first, second = second, first
    if not A.hi < B.lo:
        return None
    if A.hi < 0 < B.lo:
        return None
    cfg = GapConfiguration(A.lo, A.hi, B.lo, B.hi)
    near = "U" if A.distance_to(0) <= B.distance_to(0) else "V"
    return asymmetric_length(cfg, near, critical=mpfr(0))


def K_param(nest: NestResult, n: int) -> BigReal:
    """Smallest asymmetric length over admissible pairs of observed level-n intervals."""
    _, cur = _level_pair(nest, n)
    items = cur.intervals
    best = None
    with nest.map.ctx.scope():
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                q = pair_asymmetric_length(items[i], items[j])
                if q is not None and (best is None or q < best):
                    best = q
    if best is None:
        raise NoAdmissiblePair(f"level {n} has no admissible pair of intervals")
    return best


def rho_param(nest: NestResult, n: int, samples: int = 33) -> BigReal:
    """Largest sampled distortion of the diffeomorphic parts h_{n,i} at level n."""
    _, cur = _level_pair(nest, n)
    fmap = nest.map
    with fmap.ctx.scope():
        return max(branch_distortion(fmap, li.branch, samples=samples, after_fold=True) for li in cur.intervals)


def omega_total(nest: NestResult, n: int) -> BigReal:
    """Σ_j Σ_{m=1}^{p_j - 1} |f^m(I^n_j)| over the observed level-n intervals."""
    _, cur = _level_pair(nest, n)
    fmap = nest.map
    with fmap.ctx.scope():
        total = mpfr(0)
        for li in cur.intervals:
            imgs = li.branch.images(fmap)
            for m in range(1, li.return_time):
                total += imgs[m].length
        return total


def orders(nest: NestResult, n: int, l: int = 0) -> int:
    """ord^n_l: iterates of the level-(n-l) return map taking c back into I^n.

    Counted on the critical orbit as the visits x_t ∈ I^(n-l-1), 0 < t <= r_(n+1).
    """
    if l < 0 or n - l - 1 < 0 or n + 1 > nest.depth:
        raise MissingLevel(f"ord^{n}_{l} needs levels {n - l - 1}..{n + 1}; depth is {nest.depth}")
    J = nest.levels[n - l - 1].central.interval
    r_next = nest.levels[n + 1].r_n
    orbit = nest.orbit
    count = 0
    t = 0
    while True:
        t = orbit.first_entry(J, t, r_next)
        if t is None:
            return count
        count += 1


@dataclass(frozen=True)
class LevelGeometry:
    n: int
    mu: BigReal
    lambda_: Optional[BigReal]
    lambda_star: Optional[BigReal]
    alpha: Optional[BigReal]
    K: Optional[BigReal]
    rho: BigReal
    kappa: int
    in_L: bool
    r_n: int
    interval_count: int
    omega_n: BigReal
    rho_samples: int = 33
    # K is a minimum over observed intervals only
    K_observed_only: bool = True


@dataclass
class GeometryReport:
    levels: List[LevelGeometry]
    graph: "object" = None
    ranks: Dict[Tuple[int, int], Optional[int]] = field(default_factory=dict)
    orders: Dict[Tuple[int, int], int] = field(default_factory=dict)
    termination: Optional[str] = None

    def level(self, n: int) -> LevelGeometry:
        for g in self.levels:
            if g.n == n:
                return g
        raise MissingLevel(f"no geometry row for level {n}")


def _optional(fn, *args):
    try:
        return fn(*args)
    except (NoNonCentral, NoAdmissiblePair, DistanceZero):
        return None


def level_geometry(nest: NestResult, n: int, samples: int = 33) -> LevelGeometry:
    cur = nest.levels[n]
    lam = _optional(lambda_param, nest, n)
    return LevelGeometry(
        n=n,
        mu=scaling_factor(nest, n),
        lambda_=lam[0] if lam else None,
        lambda_star=lam[1] if lam else None,
        alpha=_optional(alpha_param, nest, n),
        K=_optional(K_param, nest, n),
        rho=rho_param(nest, n, samples),
        kappa=nest.kappa[n],
        in_L=cur.return_class is ReturnClass.NONCENTRAL,
        r_n=cur.r_n,
        interval_count=len(cur.intervals),
        omega_n=omega_total(nest, n),
        rho_samples=samples,
    )


def compute_geometry(nest: NestResult, samples: int = 33, with_graph: bool = True) -> GeometryReport:
    """Geometry rows for levels 1..depth, plus the return graph, ranks and orders."""
    from .graph import build_return_graph, graph_ranks

    rows = [level_geometry(nest, n, samples) for n in range(1, nest.depth + 1)]
    report = GeometryReport(rows, termination=nest.termination.value)
    if with_graph and nest.depth >= 1:
        graph = build_return_graph(nest)
        report.graph = graph
        report.ranks = graph_ranks(graph)
        for n in range(1, nest.depth):
            for l in range(0, n):
                report.orders[(n, l)] = orders(nest, n, l)
    return report
