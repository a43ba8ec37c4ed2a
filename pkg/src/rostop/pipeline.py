"""Training-size schedule, epsilon-grid validation, and test-set estimation.

The driver simulates validation and test sets once, then walks the training
sizes in ascending order: for each size it simulates a fresh training set,
solves the robust problem for every epsilon in the grid, and scores each
recovered policy on the validation set.  The wall-clock budget is checked
after each complete (size, epsilon-sweep) block; when it is exhausted (or the
largest size is done) the epsilon maximizing the validation mean at the last
completed size wins, ties resolving to the smallest epsilon, and that policy
is scored once on the test set.  Training, validation, and test sets draw
from disjoint named substreams of the master seed, so a rerun reproduces the
report bit-identically except for the wall-clock columns.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import IO, List, Optional, Tuple, Union

from .core import (IdentityReward, MeanEstimate, RewardMatrix, SamplePathSet,
                   SigmaPolicy, StoppingRule, evaluate_policy,
                   materialize_policy, reward_matrix)
from .errors import BudgetExhaustedError, ConfigError, ParameterError
from .exact import solve_bnb, solve_enumeration
from .heuristic import solve_heuristic
from .instance import build_instance
from .scenarios import (BumpParams, GbmBarrierParams, ThreePointParams,
                        UniformParams, derive_seed, simulate_bump,
                        simulate_gbm_barrier, simulate_threepoint,
                        simulate_uniform)

__all__ = ["PipelineConfig", "PipelineRow", "PipelineReport", "run_pipeline",
           "best_epsilon_curve"]

ProcessParams = Union[BumpParams, GbmBarrierParams, ThreePointParams,
                      UniformParams]

SOLVERS = ("heuristic", "bnb", "enumeration")


@dataclass(frozen=True)
class PipelineConfig:
    process: ProcessParams
    training_sizes: Tuple[int, ...]
    n_validation: int
    n_test: int
    epsilon_grid: Tuple[float, ...]
    solver: str = "heuristic"
    seed: int = 0
    budget_seconds: Optional[float] = None
    threads: Optional[int] = None

    def __post_init__(self):
        if not self.training_sizes or not self.epsilon_grid:
            raise ParameterError("training sizes and epsilon grid must be nonempty")
        if min(self.training_sizes) < 1 or self.n_validation < 1 or self.n_test < 1:
            raise ParameterError("all set sizes must be >= 1")
        if min(self.epsilon_grid) < 0.0:
            raise ParameterError("epsilons must be nonnegative")
        if self.solver not in SOLVERS:
            raise ParameterError(f"solver must be one of {SOLVERS}")
        object.__setattr__(self, "training_sizes",
                           tuple(sorted(self.training_sizes)))
        object.__setattr__(self, "epsilon_grid", tuple(self.epsilon_grid))


@dataclass(frozen=True)
class PipelineRow:
    n_train: int
    epsilon: float
    solver: str
    objective: float
    val_mean: float
    val_se: float
    seconds: float


@dataclass(frozen=True, eq=False)
class PipelineReport:
    rows: Tuple[PipelineRow, ...]
    solver: str
    chosen_n: int
    chosen_epsilon: float
    chosen_sigma: SigmaPolicy
    test: Optional[MeanEstimate]
    per_n_best: Tuple[Tuple[int, float], ...]

    def to_csv(self, sink: Union[str, IO[str]]) -> None:
        fh, owned = _open_w(sink)
        try:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["N", "epsilon", "solver", "objective", "val_mean",
                             "val_se", "test_mean", "test_se", "seconds"])
            for row in self.rows:
                chosen = (row.n_train == self.chosen_n
                          and row.epsilon == self.chosen_epsilon)
                test_mean = repr(self.test.mean) if chosen and self.test else ""
                test_se = repr(self.test.std_error) if chosen and self.test else ""
                writer.writerow([row.n_train, repr(row.epsilon), row.solver,
                                 repr(row.objective), repr(row.val_mean),
                                 repr(row.val_se), test_mean, test_se,
                                 f"{row.seconds:.6f}"])
        finally:
            if owned:
                fh.close()

    def summary(self) -> str:
        lines = [
            f"solver: {self.solver}",
            f"chosen: N={self.chosen_n} epsilon={self.chosen_epsilon}",
        ]
        if self.test is not None:
            lines.append(
                f"test estimate: {self.test.mean:.6f} "
                f"+/- {self.test.std_error:.6f} (n={self.test.n})"
            )
        for n, eps in self.per_n_best:
            best = max((r.val_mean for r in self.rows if r.n_train == n),
                       default=float("nan"))
            lines.append(f"  N={n}: best epsilon={eps} val_mean={best:.6f}")
        return "\n".join(lines) + "\n"

    def write_plot_data(self, mean_sink: Union[str, IO[str]],
                        epsilon_sink: Union[str, IO[str]]) -> None:
        """Best validation mean per N and chosen epsilon per N, as CSV."""
        fh, owned = _open_w(mean_sink)
        try:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["N", "val_mean"])
            for n, eps in self.per_n_best:
                best = max(r.val_mean for r in self.rows if r.n_train == n)
                writer.writerow([n, repr(best)])
        finally:
            if owned:
                fh.close()
        fh, owned = _open_w(epsilon_sink)
        try:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["N", "epsilon"])
            for n, eps in self.per_n_best:
                writer.writerow([n, repr(eps)])
        finally:
            if owned:
                fh.close()


def _open_w(sink):
    if hasattr(sink, "write"):
        return sink, False
    return open(sink, "w", encoding="utf-8", newline=""), True


def simulate_process(process: ProcessParams, n: int,
                     seed: Optional[int] = None
                     ) -> Tuple[SamplePathSet, RewardMatrix]:
    """Simulate any configured process, returning paths and their rewards."""
    if seed is not None:
        process = replace(process, seed=seed)
    if isinstance(process, GbmBarrierParams):
        return simulate_gbm_barrier(process, n)
    if isinstance(process, BumpParams):
        paths = simulate_bump(process, n)
    elif isinstance(process, ThreePointParams):
        paths = simulate_threepoint(process, n)
    elif isinstance(process, UniformParams):
        paths = simulate_uniform(process, n)
    else:
        raise ConfigError(f"unknown process {process!r}")
    return paths, reward_matrix(paths, IdentityReward())


def _solve(solver: str, instance):
    if solver == "heuristic":
        sol = solve_heuristic(instance)
        return sol.sigma, sol.hbar_value
    if solver == "bnb":
        sol = solve_bnb(instance)
        return sol.sigma, sol.value
    sol = solve_enumeration(instance)
    return sol.sigma, sol.value


def _run(config: PipelineConfig, with_test: bool):
    start = time.perf_counter()
    budget = config.budget_seconds
    if budget is not None and budget <= 0:
        raise BudgetExhaustedError(
            "budget exhausted before any solve completed",
            report=PipelineReport(rows=(), solver=config.solver, chosen_n=0,
                                  chosen_epsilon=float("nan"),
                                  chosen_sigma=SigmaPolicy([1]), test=None,
                                  per_n_best=()),
        )
    val_paths, val_rewards = simulate_process(
        config.process, config.n_validation,
        derive_seed(config.seed, "validation"))

    rows: List[PipelineRow] = []
    per_n_best: List[Tuple[int, float]] = []
    chosen: Optional[Tuple[float, SigmaPolicy, StoppingRule]] = None
    chosen_n = 0

    def sweep_one(args):
        train, train_rewards, eps = args
        t0 = time.perf_counter()
        instance = build_instance(train.states, train_rewards, eps)
        sigma, objective = _solve(config.solver, instance)
        seconds = time.perf_counter() - t0
        rule = materialize_policy(instance, sigma)
        score = evaluate_policy(rule, val_paths, val_rewards)
        return eps, objective, sigma, rule, score, seconds

    for n in config.training_sizes:
        train, train_rewards = simulate_process(
            config.process, n, derive_seed(config.seed, f"train/N={n}"))
        jobs = [(train, train_rewards, eps) for eps in config.epsilon_grid]
        if config.threads and config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                results = list(pool.map(sweep_one, jobs))
        else:
            results = [sweep_one(job) for job in jobs]
        for eps, objective, sigma, rule, score, seconds in results:
            rows.append(PipelineRow(n_train=n, epsilon=eps,
                                    solver=config.solver, objective=objective,
                                    val_mean=score.mean, val_se=score.std_error,
                                    seconds=seconds))
        best = None
        # ascending epsilon with a strict improvement test: ties keep the
        # smallest epsilon
        for eps, objective, sigma, rule, score, seconds in sorted(
                results, key=lambda r: r[0]):
            if best is None or score.mean > best[0]:
                best = (score.mean, eps, sigma, rule)
        per_n_best.append((n, best[1]))
        chosen = (best[1], best[2], best[3])
        chosen_n = n
        if budget is not None and time.perf_counter() - start >= budget:
            break

    test_est = None
    if with_test:
        test_paths, test_rewards = simulate_process(
            config.process, config.n_test, derive_seed(config.seed, "test"))
        test_est = evaluate_policy(chosen[2], test_paths, test_rewards)
    return PipelineReport(rows=tuple(rows), solver=config.solver,
                          chosen_n=chosen_n, chosen_epsilon=chosen[0],
                          chosen_sigma=chosen[1], test=test_est,
                          per_n_best=tuple(per_n_best))


def run_pipeline(config: PipelineConfig) -> PipelineReport:
    """Full parameter-selection run ending with an unbiased test estimate."""
    return _run(config, with_test=True)


def best_epsilon_curve(config: PipelineConfig) -> Tuple[Tuple[int, float], ...]:
    """Chosen epsilon per training size (no test evaluation)."""
    return _run(config, with_test=False).per_n_best
