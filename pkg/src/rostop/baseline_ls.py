"""Longstaff-Schwartz regression baseline.

Fits continuation values by backward recursion on realized rewards (the
policy-iteration targets of Longstaff-Schwartz, not fitted-value recursion)
and stops greedily when the immediate payoff matches or beats the fitted
continuation.  The resulting rule is Markovian by construction: its period-t
decision depends only on the period-t features.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import BarrierCallReward, MeanEstimate, RewardMatrix, SamplePathSet
from .errors import ConfigError, ParameterError, RegressionError

__all__ = ["BasisSpec", "LSPolicy", "fit_ls", "apply_ls", "ls_stop_times",
           "evaluate_ls"]

_FAMILIES = ("one", "prices", "pricesKO", "KOind", "maxprice", "payoff")
_LAGUERRE_RE = re.compile(r"^laguerre\((\d+)\)$")
MAX_LAGUERRE_DEGREE = 15


def _laguerre_columns(x: np.ndarray, degree: int) -> np.ndarray:
    """Laguerre polynomials of degree 0..degree evaluated on a 1-D state."""
    cols = [np.ones_like(x)]
    for k in range(1, degree + 1):
        lk = np.zeros_like(x)
        for ell in range(k + 1):
            lk += math.comb(k, ell) * (-1.0) ** ell / math.factorial(ell) * x ** ell
        cols.append(lk)
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class BasisSpec:
    """Selected feature families for the continuation regression.

    families entries are drawn from {"one", "prices", "pricesKO", "KOind",
    "maxprice", "payoff", "laguerre(k)"}; laguerre(k) expands to the
    polynomials of degree 0..k (k <= 15).  The knock-out families need a
    barrier descriptor to derive the indicator from the raw asset paths.
    """

    families: Tuple[str, ...]
    barrier: Optional[BarrierCallReward] = None

    def __post_init__(self):
        if not self.families:
            raise ParameterError("at least one basis family must be selected")
        for fam in self.families:
            m = _LAGUERRE_RE.match(fam)
            if m:
                if int(m.group(1)) > MAX_LAGUERRE_DEGREE:
                    raise ParameterError(
                        f"laguerre degree capped at {MAX_LAGUERRE_DEGREE}"
                    )
            elif fam not in _FAMILIES:
                raise ParameterError(f"unknown basis family {fam!r}")
        needs_ko = {"pricesKO", "KOind"} & set(self.families)
        if needs_ko and self.barrier is None:
            raise ConfigError(f"families {sorted(needs_ko)} need a barrier descriptor")

    def feature_dim(self, state_dim: int, raw_dim: Optional[int]) -> int:
        total = 0
        price_dim = raw_dim if raw_dim else state_dim
        for fam in self.families:
            m = _LAGUERRE_RE.match(fam)
            if m:
                total += int(m.group(1)) + 1
            elif fam in ("one", "KOind", "maxprice", "payoff"):
                total += 1
            elif fam in ("prices", "pricesKO"):
                total += price_dim
        return total


def _features_at(basis: BasisSpec, t: int, states: np.ndarray,
                 raw: Optional[np.ndarray], payoff_t: np.ndarray,
                 knockout_t: Optional[np.ndarray]) -> np.ndarray:
    """Feature matrix at period t (1-based) for a batch of paths."""
    m = states.shape[0]
    xt = states[:, t - 1, :]
    prices = raw[:, t - 1, :] if raw is not None else xt
    cols = []
    for fam in basis.families:
        lag = _LAGUERRE_RE.match(fam)
        if lag:
            if xt.shape[1] != 1:
                raise ConfigError("laguerre basis needs a one-dimensional state")
            cols.append(_laguerre_columns(xt[:, 0], int(lag.group(1))))
        elif fam == "one":
            cols.append(np.ones((m, 1)))
        elif fam == "prices":
            cols.append(prices)
        elif fam == "maxprice":
            cols.append(prices.max(axis=1, keepdims=True))
        elif fam == "payoff":
            cols.append(payoff_t[:, None])
        elif fam == "KOind":
            cols.append(knockout_t[:, None].astype(np.float64))
        elif fam == "pricesKO":
            cols.append(prices * (~knockout_t)[:, None])
    return np.concatenate(cols, axis=1)


def _knockout_table(basis: BasisSpec, raw: Optional[np.ndarray]):
    if basis.barrier is None:
        return None
    if raw is None:
        raise ConfigError("knock-out features need raw asset paths")
    return basis.barrier.knockout(raw)


def _regress(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Normal equations with a ridge fallback on singularity."""
    xtx = x.T @ x
    xty = x.T @ y
    try:
        beta = np.linalg.solve(xtx, xty)
        if np.all(np.isfinite(beta)):
            return beta
    except np.linalg.LinAlgError:
        pass
    ridge = 1e-8 * np.trace(xtx) / xtx.shape[0]
    try:
        beta = np.linalg.solve(xtx + ridge * np.eye(xtx.shape[0]), xty)
    except np.linalg.LinAlgError as exc:
        raise RegressionError("design matrix singular even after ridge") from exc
    if not np.all(np.isfinite(beta)):
        raise RegressionError("regression produced non-finite coefficients")
    return beta


@dataclass(frozen=True, eq=False)
class LSPolicy:
    """Fitted continuation coefficients, one vector per period 1..T-1."""

    coefficients: Tuple[np.ndarray, ...]
    basis: BasisSpec
    train_rewards: RewardMatrix

    @property
    def horizon(self) -> int:
        return len(self.coefficients) + 1


def fit_ls(train: SamplePathSet, rewards: RewardMatrix, basis: BasisSpec,
           in_the_money_only: bool = False) -> LSPolicy:
    """Backward-recursion least-squares fit of the continuation values.

    At each period t < T the realized value of following the partially built
    rule from t+1 on is regressed on the period-t features; the rule stops at
    t wherever the immediate payoff is at least the fitted continuation.  At
    t = T the rule always stops.  With in_the_money_only, the classic
    restriction, only paths with positive payoff enter the regression and
    only they may stop early.
    """
    n, t_len = train.n_paths, train.horizon
    if rewards.values.shape != (n, t_len):
        raise ParameterError("rewards must correspond to the training set")
    g = rewards.values
    dim = basis.feature_dim(train.state_dim,
                            train.raw.shape[2] if train.raw is not None else None)
    if n <= dim:
        raise ParameterError("need more training paths than features")
    knockout = _knockout_table(basis, train.raw)

    cash = g[:, t_len - 1].copy()
    coeffs = []
    for t in range(t_len - 1, 0, -1):
        x = _features_at(basis, t, train.states, train.raw, g[:, t - 1],
                         knockout[:, t - 1] if knockout is not None else None)
        rows = np.flatnonzero(g[:, t - 1] > 0.0) if in_the_money_only \
            else np.arange(n)
        if rows.size <= dim:
            # too few usable rows to identify the fit: never stop here
            coeffs.append(np.full(dim, np.inf))
            continue
        beta = _regress(x[rows], cash[rows])
        cont = x @ beta
        stop = g[:, t - 1] >= cont
        if in_the_money_only:
            stop &= g[:, t - 1] > 0.0
        cash = np.where(stop, g[:, t - 1], cash)
        coeffs.append(beta)
    coeffs.reverse()
    return LSPolicy(coefficients=tuple(coeffs), basis=basis,
                    train_rewards=rewards)


def ls_stop_times(policy: LSPolicy, paths: SamplePathSet,
                  rewards: RewardMatrix) -> np.ndarray:
    """Vectorized first period with payoff >= fitted continuation; T if none."""
    n, t_len = paths.n_paths, paths.horizon
    if t_len != policy.horizon:
        raise ParameterError("paths horizon must match the fitted policy")
    g = rewards.values
    knockout = _knockout_table(policy.basis, paths.raw)
    out = np.full(n, t_len, dtype=np.int64)
    undecided = np.ones(n, dtype=bool)
    for t in range(1, t_len):
        beta = policy.coefficients[t - 1]
        if not np.all(np.isfinite(beta)):
            continue
        x = _features_at(policy.basis, t, paths.states, paths.raw, g[:, t - 1],
                         knockout[:, t - 1] if knockout is not None else None)
        stop = undecided & (g[:, t - 1] >= x @ beta)
        out[stop] = t
        undecided &= ~stop
    return out


def apply_ls(policy: LSPolicy, path: np.ndarray, path_rewards: np.ndarray,
             path_raw: Optional[np.ndarray] = None) -> int:
    """Stop time of the fitted rule on a single path (always <= T)."""
    path = np.asarray(path, dtype=np.float64)
    if path.ndim == 1:
        path = path[:, None]
    t_len = policy.horizon
    if path.shape[0] != t_len or len(path_rewards) != t_len:
        raise ParameterError("path and rewards must span the policy horizon")
    single = SamplePathSet(states=path[None, :, :],
                           raw=None if path_raw is None else path_raw[None])
    rewards = RewardMatrix(np.asarray(path_rewards, dtype=np.float64)[None, :])
    return int(ls_stop_times(policy, single, rewards)[0])


def evaluate_ls(policy: LSPolicy, test: SamplePathSet,
                rewards: RewardMatrix) -> MeanEstimate:
    """Mean realized reward of the fitted rule on a test set."""
    taus = ls_stop_times(policy, test, rewards)
    realized = rewards.values[np.arange(test.n_paths), taus - 1]
    n = test.n_paths
    std_error = float(realized.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MeanEstimate(mean=float(realized.mean()), std_error=std_error, n=n)
