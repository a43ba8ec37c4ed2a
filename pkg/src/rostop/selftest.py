"""Built-in property suites behind the `rostop selftest` subcommand.

Each suite checks a solver against an independent brute-force oracle on
randomized small inputs with a fixed seed; one line is printed per suite.
"""

from __future__ import annotations

import itertools

import numpy as np

from .core import RewardMatrix, SigmaPolicy, ip_objective
from .exact import solve_bnb, solve_enumeration
from .heuristic import solve_heuristic
from .instance import build_instance
from .maxflow import ClosureProblem, FlowGraph, max_flow, maximal_closure
from .scenarios import BumpParams, simulate_bump

__all__ = ["run"]


def _random_instance(rng, n_max=6, t_max=4, d_max=2):
    n = int(rng.integers(2, n_max + 1))
    t = int(rng.integers(2, t_max + 1))
    d = int(rng.integers(1, d_max + 1))
    states = rng.random((n, t, d)) * 4.0
    rewards = RewardMatrix(np.round(rng.random((n, t)) * 10.0, 3))
    eps = float(rng.choice([0.0, 0.1, 1.0]))
    return build_instance(states, rewards, eps)


def _brute_min_cut(n, arcs, source, sink):
    best = np.inf
    others = [v for v in range(n) if v not in (source, sink)]
    for k in range(len(others) + 1):
        for side in itertools.combinations(others, k):
            s_side = set(side) | {source}
            cut = sum(c for u, v, c in arcs if u in s_side and v not in s_side)
            best = min(best, cut)
    return best


def _brute_closure(weights, arcs, offset):
    n = len(weights)
    best = offset
    for mask in range(1 << n):
        chosen = [(mask >> v) & 1 for v in range(n)]
        if any(chosen[u] and not chosen[v] for u, v in arcs):
            continue
        best = max(best, offset + sum(w for v, w in enumerate(weights) if chosen[v]))
    return best


def _suite_maxflow(rng) -> bool:
    for _ in range(40):
        n = int(rng.integers(3, 9))
        m = int(rng.integers(2, 3 * n))
        arcs = [(int(rng.integers(0, n)), int(rng.integers(0, n)),
                 float(rng.integers(0, 9))) for _ in range(m)]
        g = FlowGraph(n_nodes=n, arcs=arcs, source=0, sink=n - 1)
        if max_flow(g).value != _brute_min_cut(n, arcs, 0, n - 1):
            return False
    return True


def _suite_closure(rng) -> bool:
    for _ in range(40):
        n = int(rng.integers(1, 9))
        weights = rng.integers(-8, 9, size=n).astype(float)
        m = int(rng.integers(0, 2 * n))
        arcs = [(int(rng.integers(0, n)), int(rng.integers(0, n)))
                for _ in range(m)]
        problem = ClosureProblem(weights=weights,
                                 arcs=np.array(arcs, dtype=np.int64).reshape(-1, 2),
                                 offset=1.5)
        result = maximal_closure(problem)
        if result.weight != _brute_closure(weights, arcs, 1.5):
            return False
        chosen = result.in_closure
        if any(chosen[u] and not chosen[v] for u, v in arcs):
            return False
    return True


def _suite_solvers(rng) -> bool:
    for _ in range(25):
        inst = _random_instance(rng)
        exact = solve_enumeration(inst)
        bnb = solve_bnb(inst)
        heur = solve_heuristic(inst)
        if abs(bnb.value - exact.value) > 1e-9:
            return False
        if heur.ip_value > exact.value + 1e-9:
            return False
        if heur.ip_value < heur.hbar_value - 1e-9:
            return False
    return True


def _suite_sigma_objective(rng) -> bool:
    # a random sigma's recomputed objective never beats the enumerated optimum
    for _ in range(25):
        inst = _random_instance(rng)
        exact = solve_enumeration(inst)
        sigma = SigmaPolicy(rng.integers(1, inst.horizon + 1, size=inst.n_paths))
        if ip_objective(inst, sigma) > exact.value + 1e-9:
            return False
    return True


def _suite_determinism(rng) -> bool:
    params = BumpParams(horizon=6, duration=2, seed=123)
    a = simulate_bump(params, 50).states
    b = simulate_bump(params, 50).states
    return bool(np.array_equal(a, b))


def run(verbose: bool = True) -> int:
    rng = np.random.default_rng(20240817)
    suites = [
        ("max-flow equals brute-force min cut", _suite_maxflow),
        ("maximal closure equals brute-force optimum", _suite_closure),
        ("solver agreement on random instances", _suite_solvers),
        ("random policies never beat the enumerated optimum", _suite_sigma_objective),
        ("generator determinism", _suite_determinism),
    ]
    failures = 0
    for name, suite in suites:
        ok = suite(rng)
        failures += 0 if ok else 1
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return 0 if failures == 0 else 1
