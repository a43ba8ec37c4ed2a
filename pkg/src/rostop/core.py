"""Domain types and policy evaluation for simulation-based optimal stopping.

A stopping problem instance lives on N simulated sample paths of a
d-dimensional state process over T periods.  A policy is parameterized by one
period index per path (sigma); materializing it yields a stopping rule whose
period-t region is the union of infinity-norm boxes of radius epsilon around
the states of the paths assigned to t.  Never stopping pays zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import ConfigError, ParameterError

__all__ = [
    "SamplePathSet",
    "RewardMatrix",
    "SigmaPolicy",
    "StoppingRule",
    "MeanEstimate",
    "IdentityReward",
    "BarrierCallReward",
    "TableReward",
    "reward_matrix",
    "ip_objective",
    "materialize_policy",
    "apply_policy",
    "evaluate_policy",
    "stop_times",
    "NEVER",
]

# Sentinel stop time for "never stopped"; reward convention for it is 0.
NEVER = math.inf


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SamplePathSet:
    """N simulated paths of projected states, plus optional raw asset paths.

    states has shape (n_paths, horizon, state_dim).  raw, when present, holds
    the underlying asset paths used for reward evaluation (shape N x T x d_raw)
    and is not part of the solver-facing state.
    """

    states: np.ndarray
    raw: Optional[np.ndarray] = None
    seed: int = 0
    generator_tag: str = ""

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != 3:
            raise ParameterError("states must have shape (n_paths, horizon, state_dim)")
        n, t, d = states.shape
        if n < 1 or t < 1 or d < 1:
            raise ParameterError("n_paths, horizon and state_dim must all be >= 1")
        if not np.all(np.isfinite(states)):
            raise ParameterError("states must be finite")
        object.__setattr__(self, "states", _freeze(states))
        if self.raw is not None:
            raw = np.asarray(self.raw, dtype=np.float64)
            if raw.ndim != 3 or raw.shape[:2] != (n, t):
                raise ParameterError("raw paths must match (n_paths, horizon)")
            object.__setattr__(self, "raw", _freeze(raw))

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    @property
    def state_dim(self) -> int:
        return self.states.shape[2]


@dataclass(frozen=True, eq=False)
class RewardMatrix:
    """Precomputed rewards, values[i, t-1] = g(t, x^i) >= 0."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ParameterError("reward values must have shape (n_paths, horizon)")
        if not np.all(np.isfinite(values)):
            raise ParameterError("rewards must be finite")
        if np.any(values < 0.0):
            raise ParameterError("rewards must be nonnegative")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class SigmaPolicy:
    """One period index per sample path, sigma[i] in {1..T} (1-based)."""

    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.int64)
        if sigma.ndim != 1 or sigma.size < 1:
            raise ParameterError("sigma must be a nonempty integer vector")
        if np.any(sigma < 1):
            raise ParameterError("sigma entries must be >= 1")
        object.__setattr__(self, "sigma", _freeze(sigma))

    @property
    def n_paths(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True, eq=False)
class MeanEstimate:
    """Monte-Carlo mean with its standard error (sample std / sqrt(n))."""

    mean: float
    std_error: float
    n: int


class StoppingRule:
    """Union-of-boxes stopping rule.

    stop(t, y) is true iff some path i with sigma[i] = t has
    ||y - x^i_t||_inf <= epsilon.  centers_by_period[t-1] is the pair
    (path indices, centers) of the paths assigned to period t.
    """

    def __init__(self, epsilon: float, horizon: int, state_dim: int,
                 centers_by_period: list):
        if epsilon < 0.0:
            raise ParameterError("epsilon must be nonnegative")
        if len(centers_by_period) != horizon:
            raise ParameterError("need one center list per period")
        self.epsilon = float(epsilon)
        self.horizon = int(horizon)
        self.state_dim = int(state_dim)
        self.centers_by_period = [
            (_freeze(np.asarray(idx, dtype=np.int64)),
             _freeze(np.asarray(c, dtype=np.float64).reshape(-1, state_dim)))
            for idx, c in centers_by_period
        ]
        self._intervals = None  # merged [lo, hi] intervals per period, d == 1 only

    def _merged_intervals(self):
        # Sorted-interval index for the d == 1 fast path; built on first use.
        if self._intervals is None:
            out = []
            for _, centers in self.centers_by_period:
                if centers.shape[0] == 0:
                    out.append((np.empty(0), np.empty(0)))
                    continue
                c = np.sort(centers[:, 0])
                lo, hi = c - self.epsilon, c + self.epsilon
                keep_lo, keep_hi = [lo[0]], [hi[0]]
                for a, b in zip(lo[1:], hi[1:]):
                    if a <= keep_hi[-1]:
                        keep_hi[-1] = max(keep_hi[-1], b)
                    else:
                        keep_lo.append(a)
                        keep_hi.append(b)
                out.append((np.asarray(keep_lo), np.asarray(keep_hi)))
            self._intervals = out
        return self._intervals

    def stop(self, t: int, y) -> bool:
        """Membership test for period t (1-based) and state y."""
        if not 1 <= t <= self.horizon:
            raise ParameterError(f"period {t} outside 1..{self.horizon}")
        y = np.asarray(y, dtype=np.float64).reshape(self.state_dim)
        _, centers = self.centers_by_period[t - 1]
        if centers.shape[0] == 0:
            return False
        return bool(
            (np.abs(centers - y[None, :]).max(axis=1) <= self.epsilon).any()
        )


@dataclass(frozen=True)
class IdentityReward:
    """g(t, x) = x_t for one-dimensional state processes."""


@dataclass(frozen=True)
class BarrierCallReward:
    """Discounted knock-out call on the max of the raw assets.

    g(t, xi) = exp(-rate*dt*t) * max(0, max_a xi[t,a] - strike) while
    max_a xi[s,a] <= barrier_base * exp(barrier_growth*dt*s) for every s <= t,
    and 0 forever after the first breach.  dt is the calendar time between
    consecutive exercise opportunities.
    """

    rate: float
    strike: float
    barrier_base: float
    barrier_growth: float
    dt: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ParameterError("rate must lie in [0, 1)")
        if self.strike < 0.0:
            raise ParameterError("strike must be nonnegative")
        if self.barrier_base <= 0.0:
            raise ParameterError("barrier_base must be positive")
        if self.dt <= 0.0:
            raise ParameterError("dt must be positive")

    def barrier(self, t) -> np.ndarray:
        """Barrier level at exercise opportunity t (1-based, vectorized)."""
        return self.barrier_base * np.exp(self.barrier_growth * self.dt * np.asarray(t))

    def knockout(self, raw: np.ndarray) -> np.ndarray:
        """Boolean (N, T) table: True once the running max has breached."""
        maxed = raw.max(axis=2)
        t_grid = np.arange(1, raw.shape[1] + 1)
        breached = maxed > self.barrier(t_grid)[None, :]
        return np.logical_or.accumulate(breached, axis=1)

    def evaluate(self, raw: np.ndarray) -> np.ndarray:
        maxed = raw.max(axis=2)
        t_grid = np.arange(1, raw.shape[1] + 1)
        payoff = np.exp(-self.rate * self.dt * t_grid)[None, :] * np.maximum(
            0.0, maxed - self.strike
        )
        payoff[self.knockout(raw)] = 0.0
        return payoff


@dataclass(frozen=True)
class TableReward:
    """Rewards supplied directly as an (N, T) matrix."""

    values: np.ndarray


RewardSpec = Union[IdentityReward, BarrierCallReward, TableReward,
                   Callable[[SamplePathSet], np.ndarray]]


def reward_matrix(paths: SamplePathSet, reward_spec: RewardSpec) -> RewardMatrix:
    """Evaluate a reward descriptor on every path and period.

    Accepts the built-in families (identity, barrier call, table) or, for
    in-process callers, a callable mapping the path set to an (N, T) array.
    """
    if isinstance(reward_spec, IdentityReward):
        if paths.state_dim != 1:
            raise ConfigError("identity reward requires a one-dimensional state")
        values = paths.states[:, :, 0]
    elif isinstance(reward_spec, BarrierCallReward):
        if paths.raw is None:
            raise ConfigError("barrier reward requires raw asset paths")
        values = reward_spec.evaluate(paths.raw)
    elif isinstance(reward_spec, TableReward):
        values = np.asarray(reward_spec.values, dtype=np.float64)
        if values.shape != (paths.n_paths, paths.horizon):
            raise ParameterError("reward table shape must match the path set")
    elif callable(reward_spec):
        values = np.asarray(reward_spec(paths), dtype=np.float64)
        if values.shape != (paths.n_paths, paths.horizon):
            raise ParameterError("reward hook must return an (N, T) array")
    else:
        raise ConfigError(f"unknown reward spec: {reward_spec!r}")
    if np.any(values < 0.0):
        raise ParameterError("reward spec produced a negative reward")
    return RewardMatrix(values)


def ip_objective(instance, policy: SigmaPolicy) -> float:
    """Objective of the finite-dimensional problem over sigma assignments.

    (1/N) * sum_i min over t in {1..sigma[i]} of { G[i][t] : some path j with
    sigma[j] = t has an intersecting box at t }.  The inner minimum is never
    empty: t = sigma[i] with j = i always qualifies.
    """
    sigma = policy.sigma
    n, t_len = instance.rewards.values.shape
    if sigma.shape[0] != n:
        raise ParameterError("policy and instance have different path counts")
    if np.any(sigma > t_len):
        raise ParameterError("sigma entries must be <= horizon")
    rewards = instance.rewards.values
    qualified = np.zeros((n, t_len), dtype=bool)
    for t in range(1, t_len + 1):
        members = sigma == t
        if members.any():
            qualified[:, t - 1] = instance.any_intersecting(t, members)
    t_grid = np.arange(1, t_len + 1)
    allowed = qualified & (t_grid[None, :] <= sigma[:, None])
    masked = np.where(allowed, rewards, np.inf)
    return float(masked.min(axis=1).mean())


def materialize_policy(instance, policy: SigmaPolicy) -> StoppingRule:
    """Turn a sigma assignment into its union-of-boxes stopping rule."""
    sigma = policy.sigma
    n, t_len, d = instance.states.shape
    if sigma.shape[0] != n:
        raise ParameterError("policy and instance have different path counts")
    if np.any(sigma > t_len):
        raise ParameterError("sigma entries must be <= horizon")
    centers = []
    for t in range(1, t_len + 1):
        idx = np.flatnonzero(sigma == t)
        centers.append((idx, instance.states[idx, t - 1, :]))
    return StoppingRule(instance.epsilon, t_len, d, centers)


def apply_policy(rule: StoppingRule, path: np.ndarray):
    """First period whose region contains the path's state; NEVER if none."""
    path = np.asarray(path, dtype=np.float64)
    if path.ndim == 1:
        path = path[:, None]
    if path.shape != (rule.horizon, rule.state_dim):
        raise ParameterError("path shape must be (horizon, state_dim)")
    for t in range(1, rule.horizon + 1):
        if rule.stop(t, path[t - 1]):
            return t
    return NEVER


def stop_times(rule: StoppingRule, states: np.ndarray) -> np.ndarray:
    """Vectorized apply_policy over a batch of paths.

    Returns int64 stop times with 0 encoding "never stopped".
    """
    states = np.asarray(states, dtype=np.float64)
    m, t_len, d = states.shape
    if t_len != rule.horizon or d != rule.state_dim:
        raise ParameterError("path batch shape must match the rule")
    out = np.zeros(m, dtype=np.int64)
    alive = np.arange(m)
    intervals = rule._merged_intervals() if d == 1 else None
    for t in range(1, t_len + 1):
        if alive.size == 0:
            break
        _, centers = rule.centers_by_period[t - 1]
        if centers.shape[0] == 0:
            continue
        y = states[alive, t - 1, :]
        if d == 1:
            lo, hi = intervals[t - 1]
            pos = np.searchsorted(lo, y[:, 0], side="right") - 1
            hit = (pos >= 0) & (y[:, 0] <= hi[np.maximum(pos, 0)])
        else:
            hit = np.zeros(alive.size, dtype=bool)
            for chunk in range(0, centers.shape[0], 512):
                block = centers[chunk:chunk + 512]
                dist = np.abs(y[:, None, :] - block[None, :, :]).max(axis=2)
                hit |= (dist <= rule.epsilon).any(axis=1)
        out[alive[hit]] = t
        alive = alive[~hit]
    return out


def evaluate_policy(rule: StoppingRule, test: SamplePathSet,
                    rewards: RewardMatrix) -> MeanEstimate:
    """Mean realized reward of the rule on a test set (0 when never stopped)."""
    if test.n_paths < 1:
        raise ParameterError("test set must be nonempty")
    if rewards.values.shape != (test.n_paths, test.horizon):
        raise ParameterError("rewards must correspond to the test set")
    taus = stop_times(rule, test.states)
    realized = np.where(taus > 0,
                        rewards.values[np.arange(test.n_paths), np.maximum(taus, 1) - 1],
                        0.0)
    n = test.n_paths
    mean = float(realized.mean())
    std_error = float(realized.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MeanEstimate(mean=mean, std_error=std_error, n=n)
