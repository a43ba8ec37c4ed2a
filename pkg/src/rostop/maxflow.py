"""Max-flow/min-cut on directed graphs and the maximal-closure solver on top.

The flow algorithm is Dinic's blocking-flow scheme over a CSR residual
structure, JIT-compiled with numba.  Capacities are real; with integer-valued
capacities all arithmetic stays exact in float64.  The closure reduction is
Picard's: positive-weight nodes hang off the source, negative-weight nodes
feed the sink, precedence arcs get effectively infinite capacity, and the
optimal closure is the source side of a min cut minus the source.  Residual
reachability returns the inclusion-minimal min cut, so zero-weight nodes on
the boundary resolve toward exclusion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, List, Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit

from .errors import ParameterError

__all__ = [
    "INFINITE_CAPACITY",
    "FlowGraph",
    "MaxFlowResult",
    "ClosureProblem",
    "ClosureResult",
    "max_flow",
    "maximal_closure",
    "write_dot",
]

# Sentinel "effectively infinite" capacity: any graph handed to max_flow must
# keep its total finite capacity far below this so infinite arcs can never be
# saturated or sit on a min cut.
INFINITE_CAPACITY = 1e18


@dataclass(frozen=True, eq=False)
class FlowGraph:
    """Directed graph with nonnegative real arc capacities."""

    n_nodes: int
    arcs: Sequence[Tuple[int, int, float]]
    source: int
    sink: int

    def __post_init__(self):
        if self.source == self.sink:
            raise ParameterError("source and sink must differ")
        if not (0 <= self.source < self.n_nodes and 0 <= self.sink < self.n_nodes):
            raise ParameterError("source/sink out of range")

    def as_arrays(self):
        m = len(self.arcs)
        src = np.empty(m, dtype=np.int64)
        dst = np.empty(m, dtype=np.int64)
        cap = np.empty(m, dtype=np.float64)
        for e, (u, v, c) in enumerate(self.arcs):
            src[e], dst[e], cap[e] = u, v, c
        return src, dst, cap


@dataclass(frozen=True, eq=False)
class MaxFlowResult:
    value: float
    source_side: np.ndarray  # bool mask over nodes; contains source, not sink
    flow: np.ndarray         # per input arc

    def cut_nodes(self) -> frozenset:
        return frozenset(np.flatnonzero(self.source_side).tolist())


@dataclass(frozen=True, eq=False)
class ClosureProblem:
    """Maximal-closure input: node weights, precedence arcs, constant offset.

    An arc (u, v) means u in the closure forces v in the closure.  arcs is
    stored as an (m, 2) integer array.
    """

    weights: np.ndarray
    arcs: np.ndarray
    offset: float = 0.0
    labels: Optional[Tuple] = None

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", weights)
        arcs = np.asarray(self.arcs, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "arcs", arcs)
        n = weights.shape[0]
        if arcs.size and (arcs.min() < 0 or arcs.max() >= n):
            raise ParameterError("an arc references a missing node")
        if self.labels is not None and len(self.labels) != n:
            raise ParameterError("labels must cover every node")


@dataclass(frozen=True, eq=False)
class ClosureResult:
    in_closure: np.ndarray  # bool mask over nodes
    weight: float           # includes the problem's constant offset

    def nodes(self) -> frozenset:
        return frozenset(np.flatnonzero(self.in_closure).tolist())


@njit(cache=True, nogil=True)
def _dinic(n, src, dst, cap, source, sink):
    m = src.shape[0]
    deg = np.zeros(n + 1, dtype=np.int64)
    for e in range(m):
        deg[src[e] + 1] += 1
        deg[dst[e] + 1] += 1
    start = np.cumsum(deg)
    to = np.empty(2 * m, dtype=np.int64)
    res = np.empty(2 * m, dtype=np.float64)
    pair = np.empty(2 * m, dtype=np.int64)
    fwd = np.empty(m, dtype=np.int64)
    fill = start[:-1].copy()
    for e in range(m):
        u, v = src[e], dst[e]
        a = fill[u]
        fill[u] += 1
        b = fill[v]
        fill[v] += 1
        to[a] = v
        res[a] = cap[e]
        pair[a] = b
        to[b] = u
        res[b] = 0.0
        pair[b] = a
        fwd[e] = a

    level = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    total = 0.0
    while True:
        level[:] = -1
        level[source] = 0
        qh, qt = 0, 1
        queue[0] = source
        while qh < qt:
            u = queue[qh]
            qh += 1
            for a in range(start[u], start[u + 1]):
                if res[a] > 0.0 and level[to[a]] < 0:
                    level[to[a]] = level[u] + 1
                    queue[qt] = to[a]
                    qt += 1
        if level[sink] < 0:
            break
        it[:] = start[:-1]
        while True:
            stack[0] = source
            top = 0
            found = False
            while top >= 0:
                u = stack[top]
                if u == sink:
                    found = True
                    break
                advanced = False
                while it[u] < start[u + 1]:
                    a = it[u]
                    if res[a] > 0.0 and level[to[a]] == level[u] + 1:
                        top += 1
                        stack[top] = to[a]
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    level[u] = -1
                    top -= 1
                    if top >= 0:
                        it[stack[top]] += 1
            if not found:
                break
            bottleneck = np.inf
            for k in range(top):
                a = it[stack[k]]
                if res[a] < bottleneck:
                    bottleneck = res[a]
            for k in range(top):
                a = it[stack[k]]
                res[a] -= bottleneck
                res[pair[a]] += bottleneck
            total += bottleneck

    reach = np.zeros(n, dtype=np.bool_)
    reach[source] = True
    qh, qt = 0, 1
    queue[0] = source
    while qh < qt:
        u = queue[qh]
        qh += 1
        for a in range(start[u], start[u + 1]):
            if res[a] > 0.0 and not reach[to[a]]:
                reach[to[a]] = True
                queue[qt] = to[a]
                qt += 1
    return total, res, fwd, reach


def _solve_arrays(n_nodes, src, dst, cap, source, sink) -> MaxFlowResult:
    if np.any(cap < 0.0) or not np.all(np.isfinite(cap)):
        raise ParameterError("capacities must be nonnegative and finite")
    finite = cap[cap < INFINITE_CAPACITY]
    if finite.sum() >= INFINITE_CAPACITY / 4.0:
        raise ParameterError("total finite capacity too close to the infinite sentinel")
    total, res, fwd, reach = _dinic(
        np.int64(n_nodes), src, dst, cap, np.int64(source), np.int64(sink)
    )
    return MaxFlowResult(value=float(total), source_side=reach, flow=cap - res[fwd])


def max_flow(g: FlowGraph) -> MaxFlowResult:
    """Maximum s-t flow value, a minimum cut, and the per-arc flow.

    The returned source side contains the source, excludes the sink, and its
    outgoing capacity equals the flow value.
    """
    src, dst, cap = g.as_arrays()
    return _solve_arrays(g.n_nodes, src, dst, cap, g.source, g.sink)


def _closure_arrays(weights: np.ndarray, arc_src: np.ndarray,
                    arc_dst: np.ndarray, offset: float) -> ClosureResult:
    n = weights.shape[0]
    pos = np.flatnonzero(weights > 0.0)
    neg = np.flatnonzero(weights < 0.0)
    source, sink = n, n + 1
    src = np.concatenate([np.full(pos.size, source, dtype=np.int64),
                          neg.astype(np.int64),
                          arc_src.astype(np.int64)])
    dst = np.concatenate([pos.astype(np.int64),
                          np.full(neg.size, sink, dtype=np.int64),
                          arc_dst.astype(np.int64)])
    cap = np.concatenate([weights[pos], -weights[neg],
                          np.full(arc_src.size, INFINITE_CAPACITY)])
    result = _solve_arrays(n + 2, src, dst, cap, source, sink)
    in_closure = result.source_side[:n].copy()
    weight = float(offset + weights[in_closure].sum())
    return ClosureResult(in_closure=in_closure, weight=weight)


def maximal_closure(p: ClosureProblem) -> ClosureResult:
    """Maximum-weight closed node set (u selected and (u,v) an arc => v selected).

    The empty set is always feasible, so the weight is at least the offset.
    """
    return _closure_arrays(p.weights, np.ascontiguousarray(p.arcs[:, 0]),
                           np.ascontiguousarray(p.arcs[:, 1]), p.offset)


def write_dot(p: ClosureProblem, sink: Union[str, IO[str]]) -> None:
    """Dump a closure problem as a DOT digraph for debugging."""
    lines: List[str] = ["digraph closure {"]
    for v in range(p.weights.shape[0]):
        label = p.labels[v] if p.labels is not None else v
        lines.append(f'  n{v} [label="{label} ({p.weights[v]:g})"];')
    for u, v in p.arcs:
        lines.append(f"  n{u} -> n{v};")
    lines.append("}")
    text = "\n".join(lines) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
