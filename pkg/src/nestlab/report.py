"""JSON and CSV serialization of nests, geometry tables, scans and suites.

Numbers are written as decimal strings at the full working precision
(``meta.digits`` records how many significant digits). Output is sorted and
indented so identical inputs give identical bytes; the only volatile field
is ``meta.timestamp``.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
from dataclasses import asdict, fields, is_dataclass
from typing import Dict, Iterable, Optional, Sequence

import gmpy2

from . import __version__
from .geometry import GeometryReport, LevelGeometry
from .nest import NestResult

CSV_COLUMNS = (
    "n", "mu", "lambda", "lambda_star", "alpha", "K", "rho",
    "kappa", "in_L", "r_n", "interval_count", "omega_n",
)

_FIELD_FOR_COLUMN = {"lambda": "lambda_"}


def digits_for(bits: int) -> int:
    """Significant decimal digits that round-trip a ``bits``-bit mantissa."""
    return int(math.ceil(bits * math.log10(2))) + 1


def decimal(x, digits: int) -> Optional[str]:
    if x is None:
        return None
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        x = gmpy2.mpfr(x)
    if gmpy2.is_nan(x):
        return "nan"
    if gmpy2.is_infinite(x):
        return "inf" if x > 0 else "-inf"
    return format(x, f".{digits}g")


def level_row(g: LevelGeometry, digits: int) -> Dict[str, object]:
    row: Dict[str, object] = {}
    for col in CSV_COLUMNS:
        value = getattr(g, _FIELD_FOR_COLUMN.get(col, col))
        if isinstance(value, bool) or isinstance(value, int):
            row[col] = value
        else:
            row[col] = decimal(value, digits)
    row["rho_samples"] = g.rho_samples
    row["K_observed_only"] = g.K_observed_only
    return row


def _graph_dict(report: GeometryReport, digits: int) -> Optional[dict]:
    graph = report.graph
    if graph is None:
        return None
    nodes = []
    for key in sorted(graph.nodes):
        node = graph.nodes[key]
        nodes.append({
            "level": node.level,
            "signed_index": node.signed_index,
            "lo": decimal(node.interval.lo, digits),
            "hi": decimal(node.interval.hi, digits),
            "first_visit_time": node.first_visit_time,
            "return_time": node.return_time,
            "discovered": node.discovered,
            "rank": report.ranks.get(key),
            "out_degree": graph.out_degree(key),
        })
    edges = [[list(src), list(dst)] for src in sorted(graph.edges) for dst in graph.edges[src]]
    orders = [{"n": n, "l": l, "value": v} for (n, l), v in sorted(report.orders.items())]
    return {"nodes": nodes, "edges": edges, "orders": orders}


def nest_report(
    nest: NestResult,
    geometry: Optional[GeometryReport] = None,
    suites: Sequence = (),
    timestamp: Optional[str] = None,
) -> dict:
    """The full report: meta, parameter, termination, levels, cascades, graph, suites."""
    bits = nest.map.ctx.bits
    digits = digits_for(bits)
    with nest.map.ctx.scope():
        levels = [level_row(g, digits) for g in geometry.levels] if geometry else []
        intervals = [
            {
                "n": lv.n,
                "return_class": lv.return_class.value if lv.n > 0 else None,
                "r_n": lv.r_n,
                "central": [decimal(lv.central.interval.lo, digits), decimal(lv.central.interval.hi, digits)],
                "noncentral": [
                    {"signed_index": li.signed_index, "lo": decimal(li.interval.lo, digits),
                     "hi": decimal(li.interval.hi, digits), "return_time": li.return_time,
                     "first_visit_time": li.first_visit_time}
                    for li in lv.noncentral
                ],
            }
            for lv in nest.levels
        ]
        graph = _graph_dict(geometry, digits) if geometry else None
    return {
        "meta": {
            "timestamp": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "version": __version__,
            "bits": bits,
            "digits": digits,
        },
        "parameter": {"c": nest.map.c_text or decimal(nest.map.c, digits), "bits": bits},
        "config": asdict(nest.config),
        "termination": {
            "reason": nest.termination.value,
            "level": nest.termination_level,
            "depth_reached": nest.depth,
            "message": nest.message,
        },
        "levels": levels,
        "intervals": intervals,
        "cascades": [{"start_level": c.start_level, "length": c.length} for c in nest.cascades],
        "kappa": {str(k): v for k, v in sorted(nest.kappa.items())},
        "L_set": list(nest.L_set),
        "graph": graph,
        "suites": {s.name: s.to_dict() for s in suites},
    }


def dumps(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=_default) + "\n"


def _default(obj):
    if is_dataclass(obj):
        return asdict(obj)
    if isinstance(obj, type(gmpy2.mpfr(0))):
        return format(obj, ".40g")
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def without_timestamp(payload: dict) -> dict:
    """Copy of a report with ``meta.timestamp`` removed, for golden comparisons."""
    out = json.loads(json.dumps(payload, default=_default))
    if isinstance(out, dict) and isinstance(out.get("meta"), dict):
        out["meta"].pop("timestamp", None)
    return out


def levels_csv(geometry: GeometryReport, bits: int) -> str:
    digits = digits_for(bits)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for g in geometry.levels:
        row = level_row(g, digits)
        writer.writerow(["" if row[c] is None else row[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def scan_payload(rows: Iterable, meta: dict) -> dict:
    return {"meta": meta, "rows": [asdict(r) for r in rows]}


def scan_csv(rows: Sequence) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if not rows:
        return ""
    names = [f.name for f in fields(rows[0])]
    writer.writerow(names)
    for r in rows:
        out = []
        for name in names:
            v = getattr(r, name)
            if isinstance(v, tuple):
                v = " ".join("/".join(map(str, x)) if isinstance(x, tuple) else str(x) for x in v)
            out.append("" if v is None else v)
        writer.writerow(out)
    return buf.getvalue()
