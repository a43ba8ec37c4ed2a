"""Exact solvers for the sigma-assignment problem and the MILP text export.

solve_enumeration sweeps all T^N assignments and is the ground-truth oracle.
solve_bnb is a depth-first branch-and-bound whose node bound combines, for
fixed paths, the inner minimum restricted to conditions already implied by
the fixed assignments (extra conditions can only lower a minimum) and, for
unfixed paths, their maximum reward.  The bilinear formulation itself is not
solved in-process; export_milp writes its standard linearization in LP text
format for external solvers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import IO, List, Optional, Union

import numpy as np

from .core import SigmaPolicy, ip_objective
from .errors import EnumerationCapError
from .heuristic import solve_heuristic
from .instance import RobustInstance

__all__ = ["ExactSolution", "solve_enumeration", "solve_bnb", "export_milp"]

ENUMERATION_CAP = 10 ** 6


@dataclass(frozen=True, eq=False)
class ExactSolution:
    sigma: SigmaPolicy
    value: float
    proved_optimal: bool
    nodes_explored: int


def _bit_masks(instance: RobustInstance):
    """Intersection rows as arbitrary-precision ints, one per (t, i).

    Bit for path j sits at position (8*width - 1 - j), matching the packed
    big-endian layout, and path_bit[j] is that single-bit mask.
    """
    n, t_len = instance.n_paths, instance.horizon
    width8 = 8 * ((n + 7) // 8)
    path_bit = [1 << (width8 - 1 - j) for j in range(n)]
    masks = [[0] * n for _ in range(t_len + 1)]
    for t in range(1, t_len + 1):
        for i in range(n):
            masks[t][i] = int.from_bytes(
                instance._packed[t - 1, i].tobytes(), "big"
            )
    return masks, path_bit


def solve_enumeration(instance: RobustInstance,
                      cap: int = ENUMERATION_CAP) -> ExactSolution:
    """Evaluate every sigma assignment; exact but exponential in N.

    Returns the lexicographically smallest maximizer.  Refuses instances with
    more than `cap` candidates and points to solve_bnb instead.
    """
    n, t_len = instance.n_paths, instance.horizon
    candidates = t_len ** n
    if candidates > cap:
        raise EnumerationCapError(
            f"{t_len}^{n} = {candidates} candidates exceed the cap {cap}; "
            "use solve_bnb for instances of this size"
        )
    g = instance.rewards.values
    masks, path_bit = _bit_masks(instance)

    best_val = -np.inf
    best_sigma: Optional[tuple] = None
    stop_mask = [0] * (t_len + 1)
    for sigma in itertools.product(range(1, t_len + 1), repeat=n):
        for t in range(1, t_len + 1):
            stop_mask[t] = 0
        for j, t in enumerate(sigma):
            stop_mask[t] |= path_bit[j]
        total = 0.0
        for i in range(n):
            inner = np.inf
            row_g = g[i]
            for t in range(1, sigma[i] + 1):
                if masks[t][i] & stop_mask[t] and row_g[t - 1] < inner:
                    inner = row_g[t - 1]
            total += inner
        if total / n > best_val:
            best_val = total / n
            best_sigma = sigma
    policy = SigmaPolicy(np.array(best_sigma, dtype=np.int64))
    return ExactSolution(
        sigma=policy,
        value=ip_objective(instance, policy),
        proved_optimal=True,
        nodes_explored=candidates,
    )


def solve_bnb(instance: RobustInstance,
              budget: Optional[int] = None) -> ExactSolution:
    """Depth-first branch-and-bound over sigma, warm-started by the heuristic.

    Paths are fixed in order of decreasing maximum reward.  A node is pruned
    when its bound does not exceed the incumbent; with an exhausted node
    budget the best incumbent is returned unproved.
    """
    n, t_len = instance.n_paths, instance.horizon
    g = instance.rewards.values
    t_star = instance.t_star
    gmax = g[np.arange(n), t_star - 1]

    warm = solve_heuristic(instance)
    incumbent_sigma = warm.sigma.sigma.copy()
    incumbent_val = warm.ip_value
    if budget is not None and budget <= 0:
        return ExactSolution(
            sigma=SigmaPolicy(incumbent_sigma),
            value=ip_objective(instance, SigmaPolicy(incumbent_sigma)),
            proved_optimal=False,
            nodes_explored=0,
        )

    masks, path_bit = _bit_masks(instance)
    order = np.argsort(-gmax, kind="stable")
    fixed_sigma = np.zeros(n, dtype=np.int64)
    fixed_min = np.zeros(n)
    stop_mask = [0] * (t_len + 1)
    fixed_paths: List[int] = []
    stats = {"nodes": 0, "aborted": False}

    def node_bound() -> float:
        total = fixed_min[fixed_paths].sum() if fixed_paths else 0.0
        for k in range(len(fixed_paths), n):
            total += gmax[order[k]]
        return total / n

    def qualified_prefix_min(p: int) -> np.ndarray:
        """out[t] = min over s <= t of G[p][s] among currently qualified s."""
        out = np.empty(t_len + 1)
        out[0] = np.inf
        for t in range(1, t_len + 1):
            v = g[p, t - 1] if (masks[t][p] & stop_mask[t]) else np.inf
            out[t] = v if v < out[t - 1] else out[t - 1]
        return out

    def descend(k: int):
        nonlocal incumbent_val
        if budget is not None and stats["nodes"] >= budget:
            stats["aborted"] = True
            return
        stats["nodes"] += 1
        bound = node_bound()
        if bound <= incumbent_val:
            return
        if k == n:
            # all conditions known: the bound is the exact objective
            incumbent_val = bound
            np.copyto(incumbent_sigma, fixed_sigma)
            return
        p = order[k]
        prefix = qualified_prefix_min(p)
        own = np.minimum(prefix[:t_len], g[p])  # own[t-1]: value if sigma_p = t
        for t in sorted(range(1, t_len + 1), key=lambda t: (-own[t - 1], t)):
            fixed_sigma[p] = t
            stop_mask[t] |= path_bit[p]
            fixed_min[p] = own[t - 1]
            fixed_paths.append(p)
            # path p stopping at t can lower the inner min of fixed paths
            undo: List[tuple] = []
            for q in fixed_paths[:-1]:
                if fixed_sigma[q] >= t and (masks[t][q] & path_bit[p]) \
                        and g[q, t - 1] < fixed_min[q]:
                    undo.append((q, fixed_min[q]))
                    fixed_min[q] = g[q, t - 1]
            descend(k + 1)
            for q, old in undo:
                fixed_min[q] = old
            fixed_paths.pop()
            stop_mask[t] &= ~path_bit[p]
            fixed_sigma[p] = 0
            if stats["aborted"]:
                return

    descend(0)
    policy = SigmaPolicy(incumbent_sigma)
    return ExactSolution(
        sigma=policy,
        value=ip_objective(instance, policy),
        proved_optimal=not stats["aborted"],
        nodes_explored=stats["nodes"],
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def export_milp(instance: RobustInstance, sink: Union[str, IO[str]]) -> None:
    """Write the linearized bilinear formulation in LP text format.

    Variables: binary b_i_t; continuous w_i_t_l in [0, 1] (one per path,
    period and reward level) and f_i_t_l >= 0 (one per objective increment)
    linearizing the products via f <= b and f <= 1 - w.  The three families of
    valid equalities (w_i_1_1 = 0, b_i_t + w_i_t_1 = w_i_{t+1}_1, and
    b_i_T + w_i_T_1 = 1) tighten the relaxation.  Naming is 1-based and
    deterministic, so exporting the same instance twice is byte-identical.
    """
    n, t_len = instance.n_paths, instance.horizon
    g = instance.rewards.values
    level_of = instance.kappa.level_of
    levels = instance.kappa.levels

    lines: List[str] = ["Maximize", " obj:"]
    terms = []
    for i in range(n):
        diffs = np.diff(levels[i]) / n
        for t in range(1, t_len + 1):
            for l in range(1, level_of[i, t - 1]):
                terms.append(f" + {_fmt(diffs[l - 1])} f_{i + 1}_{t}_{l}")
    lines[1] += "".join(terms) if terms else " 0 b_1_1"

    cons: List[str] = ["Subject To"]
    for i in range(n):
        for t in range(1, t_len + 1):
            for l in range(1, level_of[i, t - 1]):
                cons.append(
                    f" fb_{i + 1}_{t}_{l}: f_{i + 1}_{t}_{l} - b_{i + 1}_{t} <= 0"
                )
                cons.append(
                    f" fw_{i + 1}_{t}_{l}: f_{i + 1}_{t}_{l} + w_{i + 1}_{t}_{l} <= 1"
                )
    for i in range(n):
        k = levels[i].shape[0]
        for t in range(1, t_len):
            for l in range(1, k + 1):
                cons.append(
                    f" time_{i + 1}_{t}_{l}: w_{i + 1}_{t}_{l} - w_{i + 1}_{t + 1}_{l} <= 0"
                )
        for t in range(1, t_len + 1):
            for l in range(1, k):
                cons.append(
                    f" level_{i + 1}_{t}_{l}: w_{i + 1}_{t}_{l} - w_{i + 1}_{t}_{l + 1} <= 0"
                )
        for t in range(1, t_len):
            cons.append(
                f" next_{i + 1}_{t}: b_{i + 1}_{t} - w_{i + 1}_{t + 1}_1 <= 0"
            )
    for i in range(n):
        for t in range(1, t_len + 1):
            l = int(level_of[i, t - 1])
            for j in range(n):
                if instance.intersects(i, j, t):
                    cons.append(
                        f" cross_{i + 1}_{j + 1}_{t}: b_{j + 1}_{t} - w_{i + 1}_{t}_{l} <= 0"
                    )
    for i in range(n):
        cons.append(f" start_{i + 1}: w_{i + 1}_1_1 = 0")
        for t in range(1, t_len):
            cons.append(
                f" step_{i + 1}_{t}: b_{i + 1}_{t} + w_{i + 1}_{t}_1 - w_{i + 1}_{t + 1}_1 = 0"
            )
        cons.append(f" final_{i + 1}: b_{i + 1}_{t_len} + w_{i + 1}_{t_len}_1 = 1")

    bounds: List[str] = ["Bounds"]
    for i in range(n):
        k = levels[i].shape[0]
        for t in range(1, t_len + 1):
            for l in range(1, k + 1):
                bounds.append(f" w_{i + 1}_{t}_{l} <= 1")

    binaries: List[str] = ["Binary"]
    for i in range(n):
        for t in range(1, t_len + 1):
            binaries.append(f" b_{i + 1}_{t}")

    text = "\n".join(lines + cons + bounds + binaries + ["End"]) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
