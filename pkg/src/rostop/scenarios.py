"""Seeded path generators and CSV interchange for paths and rewards.

Every generator draws from a counter-based Philox stream keyed by (seed,
generator tag), laid out one row of raw draws per path, so regenerating with
the same seed and parameters is bit-identical and growing n extends the set
without reshuffling earlier paths.  Distinct tags (and therefore distinct
processes or roles) give statistically independent streams.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from typing import IO, Optional, Tuple, Union

import numpy as np

from .core import BarrierCallReward, RewardMatrix, SamplePathSet, reward_matrix
from .errors import ParameterError

__all__ = [
    "BumpParams",
    "GbmBarrierParams",
    "ThreePointParams",
    "UniformParams",
    "simulate_bump",
    "simulate_gbm_barrier",
    "simulate_threepoint",
    "simulate_uniform",
    "derive_seed",
    "write_paths_csv",
    "read_paths_csv",
    "write_rewards_csv",
    "read_rewards_csv",
]


def derive_seed(seed: int, role: str) -> int:
    """Stable 63-bit seed for a named substream of a master seed."""
    digest = hashlib.blake2b(f"{seed}/{role}".encode("utf-8"),
                             digest_size=8).digest()
    return int.from_bytes(digest, "little") & (2 ** 63 - 1)


def _stream(seed: int, tag: str) -> np.random.Generator:
    words = np.frombuffer(
        hashlib.blake2b(tag.encode("utf-8"), digest_size=16).digest(),
        dtype="<u4",
    )
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=tuple(int(w) for w in words))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class BumpParams:
    """Uniform noise plus an unobserved rectangular bump.

    One bump start theta ~ Uniform{1..horizon-duration} per path; while
    theta <= t <= theta+duration the state is shifted up by 2*theta/horizon.
    """

    horizon: int
    duration: int
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.duration <= self.horizon - 1:
            raise ParameterError("duration must lie in {1..horizon-1}")

    @property
    def tag(self) -> str:
        return f"bump(T={self.horizon},delta={self.duration})"


def simulate_bump(params: BumpParams, n: int) -> SamplePathSet:
    if n < 1:
        raise ParameterError("n must be >= 1")
    t_len, delta = params.horizon, params.duration
    draws = _stream(params.seed, params.tag).random((n, t_len + 1))
    theta = 1 + np.floor(draws[:, 0] * (t_len - delta)).astype(np.int64)
    t_grid = np.arange(1, t_len + 1)
    in_bump = (theta[:, None] <= t_grid) & (t_grid <= theta[:, None] + delta)
    states = draws[:, 1:] + (2.0 * theta[:, None] / t_len) * in_bump
    return SamplePathSet(states=states[:, :, None], seed=params.seed,
                         generator_tag=params.tag)


@dataclass(frozen=True)
class GbmBarrierParams:
    """Multi-asset geometric Brownian motion with a growing knock-out barrier.

    Each asset starts at initial_price with drift rate and volatility
    sigma[a]; exercise opportunities are evenly spaced over `years` calendar
    years (dt = years/horizon).  The exponent noise term is
    sigma_a * dt * W_{t,a} with unit-variance increments per period when
    noise_scaling == "lambda" (the default), or the Euler discretization
    sigma_a * sqrt(dt) * W_{t,a} when noise_scaling == "sqrt-lambda".
    Correlation across assets is applied through a Cholesky factor computed
    once (identity by default).
    """

    assets: int
    horizon: int
    years: float
    rate: float
    strike: float
    barrier_base: float
    barrier_growth: float
    initial_price: float
    sigma: Tuple[float, ...]
    correlation: Optional[np.ndarray] = None
    noise_scaling: str = "lambda"
    seed: int = 0

    def __post_init__(self):
        if self.assets < 1 or self.horizon < 1:
            raise ParameterError("assets and horizon must be >= 1")
        if self.years <= 0.0:
            raise ParameterError("years must be positive")
        if not 0.0 <= self.rate < 1.0:
            raise ParameterError("rate must lie in [0, 1)")
        if self.strike < 0.0 or self.barrier_base <= 0.0:
            raise ParameterError("strike must be >= 0 and barrier_base > 0")
        if self.initial_price <= 0.0:
            raise ParameterError("initial_price must be positive")
        sigma = tuple(float(s) for s in np.broadcast_to(
            np.asarray(self.sigma, dtype=np.float64), (self.assets,)))
        if any(s < 0.0 for s in sigma):
            raise ParameterError("volatilities must be nonnegative")
        object.__setattr__(self, "sigma", sigma)
        if self.noise_scaling not in ("lambda", "sqrt-lambda"):
            raise ParameterError("noise_scaling must be 'lambda' or 'sqrt-lambda'")
        if self.correlation is not None:
            rho = np.asarray(self.correlation, dtype=np.float64)
            if rho.shape != (self.assets, self.assets):
                raise ParameterError("correlation must be assets x assets")
            if not np.allclose(rho, rho.T) or not np.allclose(np.diag(rho), 1.0):
                raise ParameterError("correlation must be symmetric with unit diagonal")
            object.__setattr__(self, "correlation", rho)

    @property
    def dt(self) -> float:
        return self.years / self.horizon

    @property
    def tag(self) -> str:
        return (f"gbm(d={self.assets},T={self.horizon},Y={self.years},"
                f"scaling={self.noise_scaling})")

    def reward_spec(self) -> BarrierCallReward:
        return BarrierCallReward(rate=self.rate, strike=self.strike,
                                 barrier_base=self.barrier_base,
                                 barrier_growth=self.barrier_growth,
                                 dt=self.dt)


def simulate_gbm_barrier(params: GbmBarrierParams,
                         n: int) -> Tuple[SamplePathSet, RewardMatrix]:
    """Raw asset paths, their 1-D max-asset projection, and barrier rewards."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    d, t_len = params.assets, params.horizon
    z = _stream(params.seed, params.tag).standard_normal((n, t_len, d))
    if params.correlation is not None:
        try:
            chol = np.linalg.cholesky(params.correlation)
        except np.linalg.LinAlgError as exc:
            raise ParameterError("correlation matrix is not positive "
                                 "semidefinite") from exc
        z = z @ chol.T
    w = np.cumsum(z, axis=1)
    dt = params.dt
    scale = dt if params.noise_scaling == "lambda" else np.sqrt(dt)
    sigma = np.asarray(params.sigma)
    t_grid = np.arange(1, t_len + 1)
    drift = (params.rate - 0.5 * sigma[None, :] ** 2) * dt * t_grid[:, None]
    raw = params.initial_price * np.exp(drift[None, :, :]
                                        + sigma[None, None, :] * scale * w)
    states = raw.max(axis=2)[:, :, None]
    paths = SamplePathSet(states=states, raw=raw, seed=params.seed,
                          generator_tag=params.tag)
    return paths, reward_matrix(paths, params.reward_spec())


@dataclass(frozen=True)
class ThreePointParams:
    """Two-atom three-period process: (3,2,1) w.p. 2/3 and (1,2,3) w.p. 1/3."""

    seed: int = 0

    @property
    def tag(self) -> str:
        return "threepoint"


_THREEPOINT_ATOMS = np.array([[3.0, 2.0, 1.0], [1.0, 2.0, 3.0]])


def simulate_threepoint(params: ThreePointParams, n: int) -> SamplePathSet:
    if n < 1:
        raise ParameterError("n must be >= 1")
    draws = _stream(params.seed, params.tag).random((n, 1))
    which = (draws[:, 0] >= 2.0 / 3.0).astype(np.int64)
    states = _THREEPOINT_ATOMS[which]
    return SamplePathSet(states=states[:, :, None], seed=params.seed,
                         generator_tag=params.tag)


@dataclass(frozen=True)
class UniformParams:
    """States i.i.d. Uniform[0,1] across paths and periods."""

    horizon: int
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ParameterError("horizon must be >= 1")

    @property
    def tag(self) -> str:
        return f"uniform(T={self.horizon})"


def simulate_uniform(params: UniformParams, n: int) -> SamplePathSet:
    if n < 1:
        raise ParameterError("n must be >= 1")
    states = _stream(params.seed, params.tag).random((n, params.horizon))
    return SamplePathSet(states=states[:, :, None], seed=params.seed,
                         generator_tag=params.tag)


# --- CSV interchange -------------------------------------------------------
# Headers are mandatory; identifiers are 1-based; floats are written with
# repr so a write/read round trip is bit-exact.


def _open_for(sink, mode):
    if hasattr(sink, "write") or hasattr(sink, "read"):
        return sink, False
    return open(sink, mode, encoding="utf-8", newline=""), True


def write_paths_csv(paths: SamplePathSet, sink: Union[str, IO[str]]) -> None:
    fh, owned = _open_for(sink, "w")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path_id", "t", "dim", "value"])
        states = paths.states
        for i in range(paths.n_paths):
            for t in range(paths.horizon):
                for k in range(paths.state_dim):
                    writer.writerow([i + 1, t + 1, k + 1,
                                     repr(float(states[i, t, k]))])
    finally:
        if owned:
            fh.close()


def read_paths_csv(source: Union[str, IO[str]]) -> SamplePathSet:
    fh, owned = _open_for(source, "r")
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path_id", "t", "dim", "value"]:
            raise ParameterError("paths CSV must start with path_id,t,dim,value")
        rows = [(int(r[0]), int(r[1]), int(r[2]), float(r[3])) for r in reader]
    finally:
        if owned:
            fh.close()
    if not rows:
        raise ParameterError("paths CSV has no data rows")
    n = max(r[0] for r in rows)
    t_len = max(r[1] for r in rows)
    d = max(r[2] for r in rows)
    states = np.full((n, t_len, d), np.nan)
    for i, t, k, v in rows:
        states[i - 1, t - 1, k - 1] = v
    if np.isnan(states).any():
        raise ParameterError("paths CSV is missing entries")
    return SamplePathSet(states=states)


def write_rewards_csv(rewards: RewardMatrix, sink: Union[str, IO[str]]) -> None:
    fh, owned = _open_for(sink, "w")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path_id", "t", "reward"])
        values = rewards.values
        for i in range(rewards.n_paths):
            for t in range(rewards.horizon):
                writer.writerow([i + 1, t + 1, repr(float(values[i, t]))])
    finally:
        if owned:
            fh.close()


def read_rewards_csv(source: Union[str, IO[str]]) -> RewardMatrix:
    fh, owned = _open_for(source, "r")
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path_id", "t", "reward"]:
            raise ParameterError("rewards CSV must start with path_id,t,reward")
        rows = [(int(r[0]), int(r[1]), float(r[2])) for r in reader]
    finally:
        if owned:
            fh.close()
    if not rows:
        raise ParameterError("rewards CSV has no data rows")
    n = max(r[0] for r in rows)
    t_len = max(r[1] for r in rows)
    values = np.full((n, t_len), np.nan)
    for i, t, v in rows:
        values[i - 1, t - 1] = v
    if np.isnan(values).any():
        raise ParameterError("rewards CSV is missing entries")
    return RewardMatrix(values)
