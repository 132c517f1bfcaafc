"""Command line front end.

Exit codes: 0 success, 1 a verification gate failed, 2 invalid input,
3 precision exhausted. Reports go to --output or standard output;
diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from . import __version__
from .dynamics import QuadraticMap
from .errors import InvalidInput, NestlabError, NotRealized, PrecisionExhausted
from .geometry import compute_geometry
from .nest import NestConfig, Termination, build_nest
from .precision import BITS_ENV, PrecisionContext, default_bits
from .report import CSV_COLUMNS, dumps, levels_csv, nest_report, scan_csv, scan_payload
from .search import ReturnItinerary, locate_itinerary, scan
from . import verification as V

EXIT_OK, EXIT_GATES, EXIT_INPUT, EXIT_PRECISION = 0, 1, 2, 3

log = logging.getLogger("nestlab")

NEST_SUITES = ("schwarz", "koebe", "theorem_b", "a_priori", "bookkeeping", "graph")
GEOMETRY_SUITES = ("composition", "sqrt", "cross_ratio", "leading_order")


@dataclass
class RunConfig:
    command: str
    c: Optional[str] = None
    depth: int = 10
    bits: Optional[int] = None
    horizon: int = 2
    seed: int = 1
    output: Optional[str] = None
    format: str = "json"
    options: Dict[str, object] = field(default_factory=dict)


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _bits(cfg: RunConfig) -> int:
    return cfg.bits if cfg.bits is not None else default_bits()


def _run_nest_suites(nest, geometry, names: Sequence[str]) -> List[V.SuiteReport]:
    out = []
    for name in names:
        if name == "schwarz":
            out.append(V.check_schwarz_on_nest(nest))
        elif name == "koebe":
            out.append(V.check_koebe_fit(nest))
        elif name == "theorem_b":
            try:
                out.append(V.check_theorem_b(geometry))
            except NestlabError as exc:
                out.append(V.SuiteReport("theorem_b", reason=str(exc)))
        elif name == "a_priori":
            out.append(V.check_a_priori_bounds(geometry, nest))
        elif name == "bookkeeping":
            out.append(V.check_bookkeeping(nest))
        elif name == "graph":
            out.append(V.check_graph_consistency(nest, geometry.graph))
        else:
            raise InvalidInput(f"unknown nest suite {name!r}")
    return out


def _build(cfg: RunConfig):
    if cfg.c is None:
        raise InvalidInput("--c is required")
    if cfg.depth < 0:
        raise InvalidInput("--depth must be non-negative")
    bits = _bits(cfg)
    max_bits = max(int(cfg.options.get("max_bits") or 1024), bits)
    fmap = QuadraticMap.from_value(cfg.c, PrecisionContext(bits=bits, rng_seed=cfg.seed))
    config = NestConfig(depth=cfg.depth, horizon_factor=cfg.horizon, max_bits=max_bits)
    nest = build_nest(fmap, cfg.depth, config)
    geometry = compute_geometry(nest)
    return nest, geometry


def cmd_nest(cfg: RunConfig) -> int:
    nest, geometry = _build(cfg)
    names = cfg.options.get("suites") or ()
    suites = _run_nest_suites(nest, geometry, names)
    if cfg.format == "csv":
        _emit(levels_csv(geometry, nest.map.ctx.bits), cfg.output)
    else:
        _emit(dumps(nest_report(nest, geometry, suites, cfg.options.get("timestamp"))), cfg.output)
    print(f"termination: {nest.termination.value} at level {nest.termination_level}"
          + (f" ({nest.message})" if nest.message else ""), file=sys.stderr)
    for s in suites:
        print(f"suite {s.name}: {'pass' if s.passed else 'FAIL'}", file=sys.stderr)
    if nest.termination is Termination.PRECISION_EXHAUSTED:
        return EXIT_PRECISION
    return EXIT_OK if all(s.passed for s in suites) else EXIT_GATES


def cmd_scan(cfg: RunConfig) -> int:
    window = cfg.options.get("window") or ("-2", "-1.4")
    steps = int(cfg.options.get("steps") or 100)
    jobs = int(cfg.options.get("jobs") or 1)
    bits = _bits(cfg)
    config = NestConfig(depth=cfg.depth, horizon_factor=cfg.horizon)
    rows = scan(tuple(window), steps, cfg.depth, bits, config, jobs)
    if cfg.format == "csv":
        _emit(scan_csv(rows), cfg.output)
    else:
        meta = {"window": list(window), "steps": steps, "depth": cfg.depth, "bits": bits}
        _emit(dumps(scan_payload(rows, meta)), cfg.output)
    bad = sum(not r.bookkeeping_ok for r in rows)
    print(f"{len(rows)} rows, {bad} with bookkeeping violations", file=sys.stderr)
    return EXIT_OK if bad == 0 else EXIT_GATES


def _locate(cfg: RunConfig, target: ReturnItinerary) -> int:
    digits = int(cfg.options.get("digits") or 40)
    window = cfg.options.get("window") or ("-2", "-1")
    bracket = locate_itinerary(target, digits, cfg.depth, tuple(window), cfg.bits)
    shown = digits + 5
    lo, hi = bracket.endpoint_texts(shown)
    payload = {
        "target": target.name,
        "digits": digits,
        "depth": bracket.depth,
        "bits": bracket.bits,
        "validated_bits": bracket.validated_bits,
        "c_lo": lo,
        "c_hi": hi,
        "c": bracket.midpoint_text(shown),
        "widths": [format(w, ".3e") for w in bracket.widths],
    }
    if cfg.format == "csv":
        _emit("c,c_lo,c_hi,depth\n" + f"{payload['c']},{lo},{hi},{bracket.depth}\n", cfg.output)
    else:
        _emit(json.dumps(payload, indent=2, sort_keys=True) + "\n", cfg.output)
    return EXIT_OK


def cmd_fibonacci(cfg: RunConfig) -> int:
    return _locate(cfg, ReturnItinerary.fibonacci_itinerary())


def cmd_locate(cfg: RunConfig) -> int:
    text = cfg.options.get("itinerary")
    if not text:
        raise InvalidInput("--itinerary is required")
    return _locate(cfg, ReturnItinerary.parse(str(text)))


def cmd_verify(cfg: RunConfig) -> int:
    suite = cfg.options.get("suite") or "geometry"
    trials = int(cfg.options.get("trials") or 100_000)
    bits = _bits(cfg)
    reports: List[V.SuiteReport] = []
    if suite in ("geometry", "all") or suite in GEOMETRY_SUITES:
        picked = GEOMETRY_SUITES if suite in ("geometry", "all") else (suite,)
        for name in picked:
            if name == "composition":
                reports.append(V.check_composition_lemma(trials, cfg.seed, bits))
            elif name == "sqrt":
                reports.append(V.check_sqrt_lemma(trials, cfg.seed, bits))
            elif name == "cross_ratio":
                reports.append(V.check_cross_ratio(trials, cfg.seed, bits))
            else:
                reports.append(V.check_leading_order(bits=bits))
    if suite in ("nest", "all") or suite in NEST_SUITES:
        if cfg.c is None:
            raise InvalidInput(f"suite {suite!r} needs --c")
        nest, geometry = _build(cfg)
        reports.extend(_run_nest_suites(nest, geometry, NEST_SUITES if suite in ("nest", "all") else (suite,)))
    if not reports:
        raise InvalidInput(f"unknown suite {suite!r}")
    payload = {"suites": {r.name: r.to_dict() for r in reports}, "bits": bits, "seed": cfg.seed}
    _emit(dumps(payload), cfg.output)
    for r in reports:
        print(f"suite {r.name}: {'pass' if r.passed else 'FAIL'} ({r.trials} trials, {r.violations} violations)",
              file=sys.stderr)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_GATES


def cmd_export(cfg: RunConfig) -> int:
    """Re-emit a saved nest report as the per-level CSV table (or as normalized JSON)."""
    path = cfg.options.get("input")
    if not path:
        raise InvalidInput("--input is required")
    try:
        with open(str(path), encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"cannot read report {path}: {exc}") from None
    levels = payload.get("levels")
    if not isinstance(levels, list):
        raise InvalidInput("report has no levels table")
    if cfg.format == "json":
        _emit(dumps({"parameter": payload.get("parameter"), "levels": levels}), cfg.output)
        return EXIT_OK
    lines = [",".join(CSV_COLUMNS)]
    for row in levels:
        lines.append(",".join(_csv_cell(row.get(col)) for col in CSV_COLUMNS))
    _emit("\n".join(lines) + "\n", cfg.output)
    return EXIT_OK


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "True" if v else "False"
    return str(v)


COMMANDS = {
    "nest": cmd_nest,
    "scan": cmd_scan,
    "fibonacci": cmd_fibonacci,
    "locate": cmd_locate,
    "verify": cmd_verify,
    "export": cmd_export,
}


def run(cfg: RunConfig) -> int:
    try:
        if cfg.format not in ("json", "csv"):
            raise InvalidInput(f"unknown format {cfg.format!r}")
        if cfg.bits is not None and cfg.bits < 64:
            raise InvalidInput("--bits must be at least 64")
        return COMMANDS[cfg.command](cfg)
    except PrecisionExhausted as exc:
        print(f"precision exhausted: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except NotRealized as exc:
        print(f"not realized: {exc}", file=sys.stderr)
        return EXIT_GATES
    except (InvalidInput, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NestlabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


def _common(p: argparse.ArgumentParser, depth: int) -> None:
    p.add_argument("--depth", type=int, default=depth, help=f"nest depth (default {depth})")
    p.add_argument("--bits", type=int, default=None, help=f"working precision in bits (default ${BITS_ENV} or 256)")
    p.add_argument("--output", "-o", default=None, help="write the report here instead of standard output")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="output format")
    p.add_argument("--seed", type=int, default=1, help="random seed for sampled suites")
    p.add_argument("--horizon", type=int, default=2, help="horizon multiplier for non-central intervals")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nestlab", description="Principal nests of x^2 + c in arbitrary precision.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nest", help="build a nest and report its geometry")
    p.add_argument("--c", required=True, help="parameter as an exact decimal string")
    p.add_argument("--max-bits", type=int, default=1024, help="precision ceiling for escalation")
    p.add_argument("--suites", default="", help=f"comma list of suites to run: {','.join(NEST_SUITES)}")
    p.add_argument("--timestamp", default=None, help="fixed metadata timestamp (for golden files)")
    _common(p, 10)

    p = sub.add_parser("scan", help="classify parameters on a uniform grid")
    p.add_argument("--window", nargs=2, default=("-2", "-1.4"), metavar=("LO", "HI"))
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    _common(p, 6)

    p = sub.add_parser("fibonacci", help="locate the Fibonacci parameter")
    p.add_argument("--digits", type=int, default=40)
    p.add_argument("--window", nargs=2, default=("-2", "-1"), metavar=("LO", "HI"))
    _common(p, 10)

    p = sub.add_parser("locate", help="locate a parameter realizing a return itinerary")
    p.add_argument("--itinerary", required=True, help="'fibonacci' or a comma list of C, N, N+, N- (suffix ! = single landing)")
    p.add_argument("--digits", type=int, default=40)
    p.add_argument("--window", nargs=2, default=("-2", "-1"), metavar=("LO", "HI"))
    _common(p, 10)

    p = sub.add_parser("verify", help="run verification suites")
    p.add_argument("--suite", default="geometry",
                   help="geometry, nest, all, or one of " + ", ".join(GEOMETRY_SUITES + NEST_SUITES))
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--c", default=None, help="parameter for nest suites")
    _common(p, 12)

    p = sub.add_parser("export", help="convert a saved nest report to the per-level table")
    p.add_argument("--input", required=True, help="JSON report written by 'nest'")
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    known = {"command", "c", "depth", "bits", "horizon", "seed", "output", "format", "verbose"}
    options = {k: v for k, v in vars(args).items() if k not in known}
    if isinstance(options.get("suites"), str):
        options["suites"] = tuple(s.strip() for s in options["suites"].split(",") if s.strip())
    return RunConfig(
        command=args.command,
        c=getattr(args, "c", None),
        depth=getattr(args, "depth", 10),
        bits=getattr(args, "bits", None),
        horizon=getattr(args, "horizon", 2),
        seed=getattr(args, "seed", 1),
        output=args.output,
        format=args.format,
        options=options,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return run(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
