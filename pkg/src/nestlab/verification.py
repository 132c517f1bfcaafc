"""Verification suites: exact lemma checks, Schwarz and Koebe checks on built
branches, decay fits over the nest, and consistency of the bookkeeping.

Exact suites count violations against an additive slack tied to the
working precision. Regression suites only assert signs and trends; the
ceilings they use are engineering gates, reported alongside the result.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .dynamics import branch_distortion, branch_preimage, monotone_pullback
from .errors import (
    FoldEncountered,
    InsufficientLevels,
    NestlabError,
    OutsideDomain,
    PrecisionExhausted,
)
from .geometry import GeometryReport, orders
from .graph import ReturnGraph, build_return_graph, dynamic_rank, graph_ranks
from .hyperbolic import (
    GapConfiguration,
    Interval,
    asymmetric_length,
    composition_bound,
    nested_configs,
    poincare_length,
    poincare_length_star,
    quadratic_pullback_config,
    cross_ratio_length,
    random_configuration,
    random_nested_triple,
    random_one_sided_configuration,
    symmetric_central_length,
)
from .nest import NestResult, Termination, bookkeeping_violations
from .precision import PrecisionContext

__all__ = [
    "Fit",
    "SuiteReport",
    "check_composition_lemma",
    "check_sqrt_lemma",
    "check_cross_ratio",
    "check_leading_order",
    "check_schwarz_on_nest",
    "check_koebe_fit",
    "check_theorem_b",
    "check_a_priori_bounds",
    "check_bookkeeping",
    "check_graph_consistency",
    "brute_force_ranks",
    "bookkeeping_violations",
]


def _text(x) -> str:
    if isinstance(x, (int, str)):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    return format(x, ".20g")


@dataclass
class Fit:
    quantity: str
    regressor: str
    slope: float
    intercept: float
    residual: float
    points: int
    required_sign: int
    ok: bool


@dataclass
class SuiteReport:
    name: str
    trials: int = 0
    violations: int = 0
    witness: Optional[Dict[str, str]] = None
    fits: List[Fit] = field(default_factory=list)
    skipped: int = 0
    gates: Dict[str, str] = field(default_factory=dict)
    diagnostics: Dict[str, str] = field(default_factory=dict)
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.violations == 0 and all(f.ok for f in self.fits) and not self.reason

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = self.passed
        return out


class _Worst:
    """Tracks the smallest margin seen and the inputs that produced it."""

    def __init__(self):
        self.margin = None
        self.witness = None

    def see(self, margin, make_witness):
        if self.margin is None or margin < self.margin:
            self.margin = margin
            self.witness = make_witness()


# exact lemmas

def check_composition_lemma(trials: int = 100_000, seed: int = 1, bits: int = 256, sweep: int = 1000) -> SuiteReport:
    """P(I|L) <= P(I|T) P(T|L) / 2 and P(I|L) <= P(I|T) P*(T|L) on random nested triples.

    ``sweep`` extra trials use centered triples with |I|/|T| = |T|/|L|
    drawn close to 1, where the two sides come nearest to each other.
    """
    ctx = PrecisionContext(bits=bits, rng_seed=seed)
    rng = ctx.rng(31)
    report = SuiteReport("composition", trials=trials + sweep)
    worst = _Worst()
    with ctx.scope():
        slack = ctx.slack()
        for i in range(trials + sweep):
            if i < trials:
                L, T, I = random_nested_triple(rng)
            else:
                lam = mpfr(1) - mpfr(10.0 ** rng.uniform(-8.0, 0.0))
                L = Interval(mpfr(-1), mpfr(1))
                T = Interval(-lam, lam)
                I = Interval(-lam * lam, lam * lam)
            inner, outer = nested_configs(L, T, I)
            lhs, rhs = composition_bound(inner, outer)
            rhs_star = poincare_length(inner) * poincare_length_star(outer)
            for label, bound in (("half-product", rhs), ("starred", rhs_star)):
                if lhs > bound + slack:
                    report.violations += 1
                worst.see(
                    (bound - lhs) / bound,
                    lambda: {"form": label, "L": f"[{_text(L.lo)}, {_text(L.hi)}]", "T": f"[{_text(T.lo)}, {_text(T.hi)}]",
                             "I": f"[{_text(I.lo)}, {_text(I.hi)}]", "lhs": _text(lhs), "rhs": _text(bound)},
                )
    report.witness = worst.witness
    report.diagnostics["min_relative_margin"] = _text(worst.margin)
    report.gates["slack"] = f"2^-{bits - 16}"
    return report


def check_sqrt_lemma(trials: int = 100_000, seed: int = 1, bits: int = 256) -> SuiteReport:
    """Q(sqrt of cfg, near flank at 0) > P(cfg) / 2 on random one-sided configurations."""
    ctx = PrecisionContext(bits=bits, rng_seed=seed)
    rng = ctx.rng(38)
    report = SuiteReport("sqrt", trials=trials)
    worst = _Worst()
    with ctx.scope():
        slack = ctx.slack()
        for _ in range(trials):
            cfg = random_one_sided_configuration(rng)
            pulled = quadratic_pullback_config(cfg)
            q = asymmetric_length(pulled, "U")
            half = poincare_length(cfg) / 2
            if not q + slack > half:
                report.violations += 1
            worst.see((q - half) / half, lambda: {"a": _text(cfg.a), "u": _text(cfg.u), "v": _text(cfg.v),
                                                  "b": _text(cfg.b), "Q": _text(q), "half_P": _text(half)})
    report.witness = worst.witness
    report.diagnostics["min_relative_margin"] = _text(worst.margin)
    report.gates["slack"] = f"2^-{bits - 16}"
    return report


def check_cross_ratio(trials: int = 100_000, seed: int = 1, bits: int = 256, tolerance_bits: Optional[int] = None) -> SuiteReport:
    """The flank form of P against the log cross-ratio, as a relative error.

    The cross-ratio is evaluated at twice the working precision from the
    same endpoints, so it serves as the reference value.
    """
    tolerance_bits = bits - 8 if tolerance_bits is None else tolerance_bits
    ctx = PrecisionContext(bits=bits, rng_seed=seed)
    ref = PrecisionContext(bits=2 * bits)
    rng = ctx.rng(3)
    report = SuiteReport("cross_ratio", trials=trials)
    worst = None
    tol = mpfr(2) ** -tolerance_bits
    for _ in range(trials):
        with ctx.scope():
            cfg = random_configuration(rng)
            p = poincare_length(cfg)
        with ref.scope():
            q = cross_ratio_length(GapConfiguration(*(mpfr(x, 2 * bits) for x in (cfg.a, cfg.u, cfg.v, cfg.b))))
            err = abs(p - q) / q
        if err > tol:
            report.violations += 1
        if worst is None or err > worst[0]:
            worst = (err, cfg, p, q)
    if worst is not None:
        err, cfg, p, q = worst
        report.witness = {"a": _text(cfg.a), "u": _text(cfg.u), "v": _text(cfg.v), "b": _text(cfg.b),
                          "P": _text(p), "cross_ratio": _text(q)}
        with ref.scope():
            report.diagnostics["max_relative_error_log2"] = repr(float(gmpy2.log2(err))) if err > 0 else "-inf"
    report.gates["tolerance"] = f"2^-{tolerance_bits}"
    return report


def check_leading_order(mus: Sequence[str] = ("1e-2", "1e-3", "1e-4"), bits: int = 256) -> SuiteReport:
    """|P([-mu, mu] | [-1, 1]) - 4 mu| <= 8 mu^2, with P cross-checked against 4 artanh(mu)."""
    ctx = PrecisionContext(bits=bits)
    ref = PrecisionContext(bits=2 * bits)
    report = SuiteReport("leading_order", trials=len(mus))
    for text in mus:
        with ctx.scope():
            mu = ctx.real(text)
            p = symmetric_central_length(mu)
            gap = abs(p - 4 * mu)
            bound = 8 * mu * mu
        with ref.scope():
            oracle = 4 * gmpy2.atanh(ref.real(text))
            agree = abs(p - oracle) <= abs(oracle) * mpfr(2) ** -(bits - 8)
        report.diagnostics[f"mu={text}"] = f"P={_text(p)} |P-4mu|={_text(gap)}"
        if not (agree and gap <= bound):
            report.violations += 1
            report.witness = report.witness or {"mu": text, "P": _text(p), "oracle": _text(oracle), "bound": _text(bound)}
    return report


# checks on built branches

_FRACTIONS = tuple(i / 8 for i in range(9))


def _sub_configs(image: Interval):
    """Deterministic four-point configurations inside ``image`` on an eighths grid."""
    pts = [image.lo + image.length * mpfr(f) for f in _FRACTIONS]
    pts[0], pts[-1] = image.lo, image.hi
    n = len(pts)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                for m in range(k + 1, n):
                    yield pts[i], pts[j], pts[k], pts[m]


def _branch_image(fmap, li) -> Tuple[Interval, int]:
    """Image of the diffeomorphic part of a level branch and the step it starts from."""
    branch = li.branch
    if not branch.folding:
        return branch.target, 0
    return branch.images(fmap)[branch.l], 1


def _all_level_intervals(nest: NestResult):
    for lv in nest.levels[1:]:
        for li in lv.intervals:
            yield lv.n, li


def check_schwarz_on_nest(nest: NestResult) -> SuiteReport:
    """Pulled-back gaps are never longer than the gaps they come from.

    Every level branch is tested on the sub-configurations of its image
    with endpoints on an eighths grid. Folding branches are tested on the
    part after the fold. A branch of length 1 after the fold is affine and
    is skipped.
    """
    fmap = nest.map
    ctx = fmap.ctx
    report = SuiteReport("schwarz")
    worst = _Worst()
    with ctx.scope():
        slack = ctx.slack()
        for n, li in _all_level_intervals(nest):
            branch = li.branch
            image, stop = _branch_image(fmap, li)
            if branch.l - stop < 1:
                report.skipped += 1
                continue
            try:
                for a, u, v, b in _sub_configs(image):
                    pre = sorted(branch_preimage(fmap, branch, y, stop) for y in (a, u, v, b))
                    p_img = poincare_length(GapConfiguration(a, u, v, b))
                    p_pre = poincare_length(GapConfiguration(*pre))
                    report.trials += 1
                    if p_pre > p_img + slack:
                        report.violations += 1
                    worst.see((p_img - p_pre) / p_img,
                              lambda: {"level": str(n), "signed_index": str(li.signed_index),
                                       "P_pullback": _text(p_pre), "P_image": _text(p_img)})
            except (PrecisionExhausted, NestlabError):
                report.skipped += 1
    report.witness = worst.witness
    if worst.margin is not None:
        report.diagnostics["min_relative_margin"] = _text(worst.margin)
    report.gates["slack"] = f"2^-{ctx.bits - 16}"
    return report


def _extends(fmap, orbit, li, L: Interval) -> bool:
    try:
        monotone_pullback(fmap, L, orbit, li.first_visit_time, li.return_time, allow_fold=False)
        return True
    except (FoldEncountered, OutsideDomain, NestlabError):
        return False


def koebe_space(fmap, orbit, li, J: Interval, steps: int = 24, cap: int = 20) -> Interval:
    """Largest interval L around J (found side by side) over which the branch of li stays monotone.

    Each side is grown by doubling up to 2^cap |J| and then refined by
    bisection, so L is a slight under-estimate of the maximal extension.
    """
    lo, hi = J.lo, J.hi
    for side in (0, 1):
        def trial(e):
            return Interval(lo - e * J.length, hi) if side == 0 else Interval(lo, hi + e * J.length)

        good, bad = mpfr(0), None
        e = mpfr(2) ** -cap
        while e <= 2 ** cap:
            if _extends(fmap, orbit, li, trial(e)):
                good, e = e, e * 2
            else:
                bad = e
                break
        if bad is not None:
            for _ in range(steps):
                mid = (good + bad) / 2
                if _extends(fmap, orbit, li, trial(mid)):
                    good = mid
                else:
                    bad = mid
        ext = trial(good)
        lo, hi = ext.lo, ext.hi
    return Interval(lo, hi)


def check_koebe_fit(nest: NestResult, ceiling: float = 10.0, r_max: float = 0.2, samples: int = 33) -> SuiteReport:
    """Distortion against Koebe space: max(distortion / r) over branches with r <= r_max.

    For a non-central level-n interval with branch f^p onto J = I^(n-1),
    the Koebe space is the largest L around J that the branch extends over
    monotonically, and r = P(J | L). Branches with no room on one side
    have r infinite and do not enter the fit.
    """
    fmap, orbit = nest.map, nest.orbit
    report = SuiteReport("koebe")
    pairs = []
    with fmap.ctx.scope():
        for lv in nest.levels[1:]:
            J = nest.levels[lv.n - 1].central.interval
            for li in lv.noncentral:
                L = koebe_space(fmap, orbit, li, J)
                if not (L.lo < J.lo and J.hi < L.hi):
                    report.skipped += 1
                    continue
                r = poincare_length(GapConfiguration.from_nested(L, J))
                d = branch_distortion(fmap, li.branch, samples=samples)
                pairs.append((lv.n, li.signed_index, r, d))
    worst = None
    for n, idx, r, d in pairs:
        if r > r_max:
            continue
        report.trials += 1
        ratio = d / r
        if ratio > ceiling:
            report.violations += 1
        if worst is None or ratio > worst[0]:
            worst = (ratio, n, idx, r, d)
    if worst is not None:
        ratio, n, idx, r, d = worst
        report.witness = {"level": str(n), "signed_index": str(idx), "r": _text(r), "distortion": _text(d)}
        report.diagnostics["max_ratio"] = _text(ratio)
    report.diagnostics["pairs"] = str(len(pairs))
    report.diagnostics["r_values"] = ", ".join(format(float(r), ".3g") for _, _, r, _ in pairs)
    report.gates["ceiling"] = repr(ceiling)
    report.gates["r_max"] = repr(r_max)
    return report


# regressions over the nest

def _fit(quantity: str, regressor: str, xs: Sequence[float], ys: Sequence[float], sign: int) -> Fit:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, _, _ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    residual = float(np.sqrt(res[0] / len(x))) if res.size else 0.0
    return Fit(quantity, regressor, slope, intercept, residual, len(x), sign, slope * sign > 0)


def check_theorem_b(report: GeometryReport, n0: int = 4, min_levels: int = 6) -> SuiteReport:
    """Least-squares trends from level n0 on.

    K_n against kappa(n) must rise; log mu_(n+1) against kappa(n) on the
    non-central levels and log rho_n against kappa(n) must fall.

    Raises:
        InsufficientLevels: fewer than ``min_levels`` levels beyond n0, or a
            nest that stopped early.
    """
    rows = [g for g in report.levels if g.n >= n0]
    depth = max((g.n for g in report.levels), default=0)
    if depth - n0 < min_levels:
        why = f"need {min_levels} levels beyond n0={n0}, have {max(depth - n0, 0)}"
        if report.termination not in (None, Termination.MAX_DEPTH.value):
            why += f"; nest terminated early ({report.termination})"
        raise InsufficientLevels(why)
    suite = SuiteReport("theorem_b", trials=len(rows))
    by_n = {g.n: g for g in report.levels}

    k_rows = [g for g in rows if g.K is not None]
    if len(k_rows) >= 2:
        suite.fits.append(_fit("K", "kappa", [g.kappa for g in k_rows], [float(g.K) for g in k_rows], +1))
    else:
        suite.reason = "too few levels with an admissible pair for the K fit"

    mu_pts = [(g.kappa, math.log(float(by_n[g.n + 1].mu))) for g in rows if g.in_L and g.n + 1 in by_n]
    if len(mu_pts) >= 2:
        suite.fits.append(_fit("log mu_next", "kappa", *zip(*mu_pts), -1))
    else:
        suite.reason = suite.reason or "too few non-central levels for the mu fit"

    rho_pts = [(g.kappa, math.log(float(g.rho))) for g in rows if g.rho > 0]
    if len(rho_pts) >= 2:
        suite.fits.append(_fit("log rho", "kappa", *zip(*rho_pts), -1))
    else:
        suite.reason = suite.reason or "too few levels with positive distortion for the rho fit"
    return suite


def check_a_priori_bounds(
    report: GeometryReport,
    nest: Optional[NestResult] = None,
    rho_ceiling: float = 1.0,
    mu_ceiling: float = 0.9,
    lambda_ceiling: float = 10.0,
    band: Tuple[float, float] = (1e-4, 1.0),
    first_level: int = 2,
) -> SuiteReport:
    """Ceilings on rho, mu and lambda, and a band for interval and gap sizes.

    The band check needs the nest: each observed level-n interval and each
    gap between neighbouring ones, measured relative to |I^(n-1)|.
    """
    suite = SuiteReport("a_priori")
    worst: Dict[str, float] = {}

    def gate(name, value, ok, n):
        suite.trials += 1
        worst[name] = max(worst.get(name, -math.inf), value) if name.startswith("max") else min(worst.get(name, math.inf), value)
        if not ok and suite.witness is None:
            suite.witness = {"gate": name, "level": str(n), "value": repr(value)}
        if not ok:
            suite.violations += 1

    for g in report.levels:
        if g.n < first_level:
            continue
        rho, mu = float(g.rho), float(g.mu)
        gate("max_rho", rho, rho <= rho_ceiling, g.n)
        gate("max_mu", mu, mu <= mu_ceiling, g.n)
        if g.lambda_ is not None:
            lam = float(g.lambda_)
            gate("max_lambda", lam, lam <= lambda_ceiling, g.n)
    if nest is not None:
        lo_band, hi_band = band
        with nest.map.ctx.scope():
            for lv in nest.levels[first_level:]:
                J = nest.levels[lv.n - 1].central.interval
                pieces = sorted((li.interval for li in lv.intervals), key=lambda K: K.lo)
                sizes = [float(K.length / J.length) for K in pieces]
                sizes += [float((b.lo - a.hi) / J.length) for a, b in zip(pieces, pieces[1:]) if b.lo > a.hi]
                for s in sizes:
                    gate("min_ratio", s, lo_band <= s <= hi_band, lv.n)
                    gate("max_ratio", s, lo_band <= s <= hi_band, lv.n)
    suite.diagnostics = {k: repr(v) for k, v in worst.items()}
    suite.gates = {"rho_ceiling": repr(rho_ceiling), "mu_ceiling": repr(mu_ceiling),
                   "lambda_ceiling": repr(lambda_ceiling), "band": repr(band), "first_level": str(first_level)}
    return suite


# bookkeeping and graph

def check_bookkeeping(nest: NestResult) -> SuiteReport:
    problems = bookkeeping_violations(nest)
    suite = SuiteReport("bookkeeping", trials=max(nest.depth, 0), violations=len(problems))
    if problems:
        suite.witness = {"first": problems[0]}
    return suite


def brute_force_ranks(graph: ReturnGraph, limit: int = 64) -> Dict[Tuple[int, int], Optional[int]]:
    """Shortest path lengths from a central node, by enumerating every path.

    Independent of the breadth-first search; only for graphs small enough
    that the path count stays modest.
    """
    best: Dict[Tuple[int, int], Optional[int]] = {k: None for k in graph.nodes}

    def walk(key, length):
        if best[key] is None or length < best[key]:
            best[key] = length
        if length >= limit:
            return
        for t in set(graph.edges.get(key, ())):
            walk(t, length + 1)

    for key, node in graph.nodes.items():
        if node.central:
            walk(key, 0)
    return best


def check_graph_consistency(nest: NestResult, graph: Optional[ReturnGraph] = None) -> SuiteReport:
    """ord from the orbit against out-degree and path counts; ranks three ways."""
    suite = SuiteReport("graph")
    if nest.depth < 2:
        suite.diagnostics["note"] = "fewer than two levels; nothing to compare"
        return suite
    graph = graph or build_return_graph(nest)
    mismatches: List[str] = []
    for n in range(1, nest.depth):
        dyn = orders(nest, n, 0)
        suite.trials += 1
        if dyn != graph.out_degree((n + 1, 0)):
            mismatches.append(f"ord^{n}_0 = {dyn} but out-degree of I^{n + 1} is {graph.out_degree((n + 1, 0))}")
        for l in range(1, n):
            suite.trials += 1
            dyn_l = orders(nest, n, l)
            paths = graph.path_count((n + 1, 0), l + 1)
            if dyn_l != paths:
                mismatches.append(f"ord^{n}_{l} = {dyn_l} but {paths} paths of length {l + 1}")
    bfs = graph_ranks(graph)
    brute = brute_force_ranks(graph) if len(graph.nodes) <= 1000 else bfs
    for key, node in graph.nodes.items():
        suite.trials += 1
        if bfs[key] != brute[key]:
            mismatches.append(f"rank of {key}: search {bfs[key]}, enumeration {brute[key]}")
        dyn = dynamic_rank(nest, node)
        if dyn is not None and dyn != bfs[key]:
            mismatches.append(f"rank of {key}: orbit {dyn}, graph {bfs[key]}")
    suite.violations = len(mismatches)
    if mismatches:
        suite.witness = {"first": mismatches[0]}
    suite.diagnostics["nodes"] = str(len(graph.nodes))
    return suite
