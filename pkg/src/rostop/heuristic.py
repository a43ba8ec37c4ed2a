"""Max-flow heuristic for the robust stopping problem.

The solver restricts each path's stopping index to {argmax period, horizon},
linearizes the surrogate objective over reward-level increments, and solves
the resulting precedence-constrained selection problem as a maximal closure.

Graph encoding (all weights are divided by N):

* one selector node per path i whose earliest max-reward period t*_i precedes
  the horizon, weight +G[i][t*_i];
* per path, a chain of level nodes at t = t*_i (when t*_i < T) and a chain at
  t = T; the node for level l carries weight -(kappa[l+1|-kappa[l]) wherever
  that increment appears in the surrogate objective, 0 otherwise; chain arcs
  run from each level node to the next;
* selecting path i forces the lowest level node of its horizon chain;
* selecting path j forces, in every chain of every path i whose box meets
  path j's box at period t*_j (with chain period >= t*_j), the level node of
  G[i][t*_j].

The constant offset is the mean terminal reward.  Nodes are created only
where the chains or constraints reference them, keeping the graph at O(N*T)
nodes.  For one-dimensional states the cross-path forcing arcs are routed
through a segment tree over the sorted period-t*_j states, which keeps the
arc count near-linear even when every pair of boxes overlaps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .core import SigmaPolicy, ip_objective
from .errors import ParameterError
from .instance import RobustInstance
from .maxflow import ClosureProblem, ClosureResult, maximal_closure

__all__ = ["HeuristicSolution", "build_hbar", "solve_heuristic"]


@dataclass(frozen=True, eq=False)
class HeuristicSolution:
    sigma: SigmaPolicy
    hbar_value: float   # optimal objective of the closure surrogate
    ip_value: float     # objective of the recovered sigma; never smaller

    def __post_init__(self):
        if self.ip_value < self.hbar_value - 1e-9:
            raise ParameterError(
                f"recovered objective {self.ip_value} fell below the "
                f"surrogate optimum {self.hbar_value}"
            )


class _HbarGraph:
    """Closure encoding plus the bookkeeping needed to recover sigma."""

    def __init__(self, weights, arc_src, arc_dst, offset, b_ids, labels):
        self.weights = weights
        self.arc_src = arc_src
        self.arc_dst = arc_dst
        self.offset = offset
        self.b_ids = b_ids      # selector node per path, -1 where absent
        self.labels = labels

    def problem(self) -> ClosureProblem:
        arcs = np.stack([self.arc_src, self.arc_dst], axis=1)
        return ClosureProblem(weights=self.weights, arcs=arcs,
                              offset=self.offset, labels=self.labels)


def _bisect_first(vals: np.ndarray, lo: np.ndarray, hi: np.ndarray, pred):
    """Vectorized first index in [lo, hi) where pred(index) is True.

    pred must be monotone (False then True) on each row's range; rows with an
    all-False range return hi.
    """
    lo = lo.copy()
    hi = hi.copy()
    while True:
        open_rows = lo < hi
        if not open_rows.any():
            break
        mid = (lo + hi) // 2
        ok = pred(np.minimum(mid, vals.shape[0] - 1)) & open_rows
        hi = np.where(ok, mid, hi)
        lo = np.where(ok | ~open_rows, lo, mid + 1)
    return lo


def _intersect_ranges(sorted_vals: np.ndarray, centers: np.ndarray,
                      threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """Index ranges [l, r) of sorted_vals with |center - value| <= threshold.

    Uses the same subtract-and-compare float predicate as the instance's
    intersection table, so borderline cases agree bit-for-bit with it.
    """
    s = sorted_vals.shape[0]
    split = np.searchsorted(sorted_vals, centers, side="left")
    # Left side: values < center, predicate center - value <= threshold is
    # monotone nondecreasing in the index.
    left = _bisect_first(
        sorted_vals, np.zeros_like(split), split,
        lambda idx: centers - sorted_vals[idx] <= threshold,
    )
    # Right side: values >= center, predicate value - center > threshold is
    # monotone; the range ends where it first holds.
    right = _bisect_first(
        sorted_vals, split, np.full_like(split, s),
        lambda idx: sorted_vals[idx] - centers > threshold,
    )
    return left, right


def _segment_tree_arcs(n_leaves: int, hub_base: int, leaf_payload: np.ndarray):
    """Intra-tree arcs of an implicit segment tree with 2*n_leaves-1 hubs.

    Returns (arc_src, arc_dst) covering leaf->hub and child-hub->parent-hub
    arcs; heap node k (1-based) maps to global id hub_base + k - 1, and leaf
    p corresponds to heap node n_leaves + p.
    """
    ks = np.arange(2, 2 * n_leaves, dtype=np.int64)
    child = hub_base + ks - 1
    parent = hub_base + (ks >> 1) - 1
    leaves = hub_base + (n_leaves + np.arange(n_leaves, dtype=np.int64)) - 1
    src = np.concatenate([leaf_payload, child])
    dst = np.concatenate([leaves, parent])
    return src, dst


def _decompose_ranges(n_leaves: int, hub_base: int, left: np.ndarray,
                      right: np.ndarray):
    """Segment-tree cover of each [left, right) range.

    Returns (hub ids, row ids) pairs: row k's range is covered by exactly the
    emitted hubs with row id k.
    """
    rows = np.flatnonzero(left < right)
    l = left[rows] + n_leaves
    r = right[rows] + n_leaves
    out_hubs: List[np.ndarray] = []
    out_rows: List[np.ndarray] = []
    while rows.size:
        emit_l = (l & 1) == 1
        if emit_l.any():
            out_hubs.append(hub_base + l[emit_l] - 1)
            out_rows.append(rows[emit_l])
        l = l + emit_l
        emit_r = (r & 1) == 1
        r = r - emit_r
        if emit_r.any():
            out_hubs.append(hub_base + r[emit_r] - 1)
            out_rows.append(rows[emit_r])
        l >>= 1
        r >>= 1
        alive = l < r
        rows, l, r = rows[alive], l[alive], r[alive]
    if not out_hubs:
        return (np.empty(0, dtype=np.int64),) * 2
    return np.concatenate(out_hubs), np.concatenate(out_rows)


def _build_graph(instance: RobustInstance, with_labels: bool) -> _HbarGraph:
    n, t_len = instance.n_paths, instance.horizon
    g = instance.rewards.values
    t_star = instance.t_star
    level_of = instance.kappa.level_of
    levels = instance.kappa.levels
    sizes = np.array([lv.shape[0] for lv in levels], dtype=np.int64)
    has_sel = t_star < t_len

    # Node layout: horizon chains for every path, argmax chains and selector
    # nodes for paths with t_star < T, then segment-tree hubs.
    cum_h = np.concatenate(([0], np.cumsum(sizes)))
    off_h = cum_h[:-1]
    base_a = int(cum_h[-1])
    a_sizes = np.where(has_sel, sizes, 0)
    cum_a = base_a + np.concatenate(([0], np.cumsum(a_sizes)))
    off_a = cum_a[:-1]
    base_b = int(cum_a[-1])
    b_ids = np.where(has_sel, base_b + np.cumsum(has_sel) - 1, -1)
    n_static = base_b + int(has_sel.sum())

    weights = [np.zeros(n_static)]
    arc_src: List[np.ndarray] = []
    arc_dst: List[np.ndarray] = []
    w0 = weights[0]

    for i in range(n):
        diffs = np.diff(levels[i]) / n
        k = sizes[i]
        # horizon chain: increments below the terminal reward level are paid
        lt = level_of[i, t_len - 1] - 1
        w0[off_h[i]:off_h[i] + lt] = -diffs[:lt]
        if k > 1:
            ids = off_h[i] + np.arange(k - 1)
            arc_src.append(ids)
            arc_dst.append(ids + 1)
        if has_sel[i]:
            # argmax chain: every increment is paid (its top level is the max)
            w0[off_a[i]:off_a[i] + k - 1] = -diffs
            if k > 1:
                ids = off_a[i] + np.arange(k - 1)
                arc_src.append(ids)
                arc_dst.append(ids + 1)
            w0[b_ids[i]] = g[i, t_star[i] - 1] / n
    # selecting a path forces the bottom of its horizon chain
    sel = np.flatnonzero(has_sel)
    if sel.size:
        arc_src.append(b_ids[sel])
        arc_dst.append(off_h[sel])

    hub_labels: List[Tuple] = []
    next_node = n_static
    threshold = 2.0 * instance.epsilon
    for u in np.unique(t_star[has_sel]):
        group = np.flatnonzero(has_sel & (t_star == u))
        lvl = level_of[:, u - 1] - 1          # 0-based level of G[i][u] per i
        h_targets = off_h + lvl               # horizon-chain target nodes
        a_ok = has_sel & (t_star >= u)        # argmax chain exists and t >= u
        a_targets = off_a + lvl
        if instance.state_dim == 1:
            vals = instance.states[group, u - 1, 0]
            order = np.argsort(vals, kind="stable")
            svals = vals[order]
            sel_sorted = b_ids[group[order]]
            s = group.size
            hub_base = next_node
            next_node += 2 * s - 1
            src, dst = _segment_tree_arcs(s, hub_base, sel_sorted)
            arc_src.append(src)
            arc_dst.append(dst)
            if with_labels:
                hub_labels.extend(("hub", int(u), k) for k in range(1, 2 * s))
            left, right = _intersect_ranges(
                svals, instance.states[:, u - 1, 0], threshold
            )
            hubs, rows = _decompose_ranges(s, hub_base, left, right)
            arc_src.append(hubs)
            arc_dst.append(h_targets[rows])
            arows = rows[a_ok[rows]]
            ahubs = hubs[a_ok[rows]]
            arc_src.append(ahubs)
            arc_dst.append(a_targets[arows])
        else:
            for j in group:
                hit = np.flatnonzero(instance.intersect_row(u, j))
                arc_src.append(np.full(hit.size, b_ids[j], dtype=np.int64))
                arc_dst.append(h_targets[hit])
                ahit = hit[a_ok[hit]]
                arc_src.append(np.full(ahit.size, b_ids[j], dtype=np.int64))
                arc_dst.append(a_targets[ahit])

    if next_node > n_static:
        weights.append(np.zeros(next_node - n_static))
    all_weights = np.concatenate(weights)
    src = (np.concatenate(arc_src) if arc_src else np.empty(0, dtype=np.int64))
    dst = (np.concatenate(arc_dst) if arc_dst else np.empty(0, dtype=np.int64))
    offset = float(g[:, t_len - 1].mean())

    labels: Optional[Tuple] = None
    if with_labels:
        lab: List[Tuple] = [None] * n_static
        for i in range(n):
            for l0 in range(sizes[i]):
                lab[off_h[i] + l0] = ("w", i, t_len, l0 + 1)
            if has_sel[i]:
                for l0 in range(sizes[i]):
                    lab[off_a[i] + l0] = ("w", i, int(t_star[i]), l0 + 1)
                lab[b_ids[i]] = ("b", i, int(t_star[i]))
        labels = tuple(lab) + tuple(hub_labels)

    return _HbarGraph(all_weights, src.astype(np.int64), dst.astype(np.int64),
                      offset, b_ids, labels)


def build_hbar(instance: RobustInstance, with_labels: bool = True) -> ClosureProblem:
    """Closure problem whose maximal closure solves the surrogate exactly.

    Node labels are ("b", i, t), ("w", i, t, level) with 1-based periods and
    levels, and ("hub", t, k) for the aggregation hubs.
    """
    return _build_graph(instance, with_labels).problem()


def solve_heuristic(instance: RobustInstance) -> HeuristicSolution:
    """Solve the surrogate by max-flow and lift the selection to a sigma policy.

    A path whose argmax-period selector lands in the closure stops at its
    argmax period; every other path stops at the horizon.
    """
    graph = _build_graph(instance, with_labels=False)
    result: ClosureResult = maximal_closure(graph.problem())
    t_star = instance.t_star
    t_len = instance.horizon
    selected = np.zeros(instance.n_paths, dtype=bool)
    present = graph.b_ids >= 0
    selected[present] = result.in_closure[graph.b_ids[present]]
    sigma = np.where(t_star == t_len, t_len, np.where(selected, t_star, t_len))
    policy = SigmaPolicy(sigma)
    return HeuristicSolution(
        sigma=policy,
        hbar_value=result.weight,
        ip_value=ip_objective(instance, policy),
    )
