"""Return graph of a nest.

Nodes are level intervals. A level-k interval X with return time p maps onto
I^(k-1) by f^p, and on the way its orbit passes through I^(k-2) some number
of times, each time inside a level-(k-1) interval. Those visits, taken in
order over the times (t0, t0 + p], are the out-edges of X; repeated visits
give parallel edges, so the out-degree of I^(n+1) is ord^n_0. The last visit
always lands in the central interval I^(k-1). Level-1 nodes have no edges.

Visits that fall in level intervals the nest did not enumerate (they are
first seen beyond the level's horizon) create new nodes on the fly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .dynamics import monotone_pullback
from .errors import MissingLevel, Unreachable
from .hyperbolic import Interval
from .nest import NestResult

NodeKey = Tuple[int, int]


@dataclass
class GraphNode:
    level: int
    signed_index: int
    interval: Interval
    first_visit_time: int
    return_time: int
    discovered: bool = False

    @property
    def key(self) -> NodeKey:
        return (self.level, self.signed_index)

    @property
    def central(self) -> bool:
        return self.signed_index == 0


@dataclass
class ReturnGraph:
    nodes: Dict[NodeKey, GraphNode] = field(default_factory=dict)
    edges: Dict[NodeKey, List[NodeKey]] = field(default_factory=dict)

    def add_node(self, node: GraphNode) -> None:
        self.nodes[node.key] = node
        self.edges.setdefault(node.key, [])

    def level_nodes(self, level: int) -> List[GraphNode]:
        return [v for k, v in self.nodes.items() if k[0] == level]

    def out_degree(self, key: NodeKey) -> int:
        return len(self.edges[key])

    def path_count(self, key: NodeKey, length: int) -> int:
        """Number of edge paths of the given length starting at ``key``."""
        counts = {key: 1}
        for _ in range(length):
            nxt: Dict[NodeKey, int] = {}
            for k, c in counts.items():
                for t in self.edges.get(k, ()):
                    nxt[t] = nxt.get(t, 0) + c
            counts = nxt
        return sum(counts.values())

    def reverse_adjacency(self) -> Dict[NodeKey, List[NodeKey]]:
        rev: Dict[NodeKey, List[NodeKey]] = {k: [] for k in self.nodes}
        for src, targets in self.edges.items():
            for t in targets:
                rev[t].append(src)
        return rev


def _locate(graph: ReturnGraph, level: int, x) -> Optional[NodeKey]:
    for node in graph.level_nodes(level):
        if node.interval.lo <= x <= node.interval.hi:
            return node.key
    return None


def build_return_graph(nest: NestResult) -> ReturnGraph:
    fmap, orbit = nest.map, nest.orbit
    cap = nest.config.iterate_cap
    graph = ReturnGraph()
    for lv in nest.levels[1:]:
        for li in lv.intervals:
            graph.add_node(GraphNode(lv.n, li.signed_index, li.interval, li.first_visit_time, li.return_time))

    with fmap.ctx.scope():
        for k in range(nest.depth, 1, -1):
            outer = nest.levels[k - 2].central.interval
            home = nest.levels[k - 1].central.interval
            for node in sorted(graph.level_nodes(k), key=lambda v: (v.first_visit_time, v.signed_index)):
                t0, p = node.first_visit_time, node.return_time
                s = t0
                while True:
                    s = orbit.first_entry(outer, s, t0 + p)
                    if s is None:
                        break
                    x = orbit[s]
                    target = _locate(graph, k - 1, x)
                    if target is None:
                        target = _discover(graph, fmap, orbit, k - 1, outer, home, s, cap)
                    graph.edges[node.key].append(target)
    return graph


def _discover(graph, fmap, orbit, level, outer, home, s, cap) -> NodeKey:
    back = orbit.first_entry(outer, s, cap)
    if back is None:
        raise Unreachable(f"orbit point x_{s} never returns to level {level - 1}")
    branch = monotone_pullback(fmap, outer, orbit, s, back - s, allow_fold=False)
    x = orbit[s]
    same_level = graph.level_nodes(level)
    index = 1 + max((abs(v.signed_index) for v in same_level), default=0)
    node = GraphNode(level, index if x > 0 else -index, branch.domain, s, back - s, discovered=True)
    graph.add_node(node)
    return node.key


def graph_ranks(graph: ReturnGraph) -> Dict[NodeKey, Optional[int]]:
    """Shortest path length from a central node down to each node; None if none exists."""
    dist: Dict[NodeKey, Optional[int]] = {k: None for k in graph.nodes}
    queue = deque()
    for k, node in graph.nodes.items():
        if node.central:
            dist[k] = 0
            queue.append(k)
    while queue:
        k = queue.popleft()
        for t in graph.edges.get(k, ()):
            if dist[t] is None:
                dist[t] = dist[k] + 1
                queue.append(t)
    return dist


def ranks(graph: ReturnGraph, strict: bool = False) -> Dict[NodeKey, Optional[int]]:
    """Rank table; with ``strict`` an unreachable node raises instead of mapping to None."""
    table = graph_ranks(graph)
    if strict:
        missing = [k for k, v in table.items() if v is None]
        if missing:
            raise Unreachable(f"no path to a central interval from {missing[:5]}")
    return table


def dynamic_rank(nest: NestResult, node: GraphNode) -> Optional[int]:
    """Rank from the orbit alone: the least k >= 1 with the first visit before r_(n+k).

    Central intervals have rank 0. The first visit time is found by scanning
    the critical orbit, not taken from the node.
    """
    if node.central:
        return 0
    n = node.level
    if n > nest.depth:
        raise MissingLevel(f"level {n} not built")
    orbit = nest.orbit
    lo, hi = node.interval.lo, node.interval.hi
    top = nest.levels[-1].r_n
    first = None
    with nest.map.ctx.scope():
        for t in range(1, top + 1):
            x = orbit[t]
            if lo <= x <= hi:
                first = t
                break
    if first is None:
        return None
    for k in range(1, nest.depth - n + 1):
        if first < nest.levels[n + k].r_n:
            return k
    return None
