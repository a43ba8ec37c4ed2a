"""Robust problem instances: intersection table, reward levels, argmax periods.

build_instance precomputes everything the solvers read repeatedly:

* the pairwise box-intersection table over (i, j, t), stored bit-packed by
  (t, i, j) since it is the largest structure (N^2*T bits) and is read-hot;
* per-path sorted distinct reward levels with 0 prepended (kappa) and the
  1-based level index of each reward within them;
* the earliest period of maximum reward per path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Union

import numpy as np

from .core import RewardMatrix, _freeze
from .errors import ParameterError

__all__ = [
    "KappaTable",
    "RobustInstance",
    "build_instance",
    "intersects",
    "save_instance",
    "load_instance",
]

_MAGIC = b"RSTI"
_VERSION = 1


@dataclass(frozen=True, eq=False)
class KappaTable:
    """Distinct reward levels per path and the level index of each period.

    levels[i] is strictly increasing with levels[i][0] == 0.0 and contains
    exactly the distinct values among {G[i][1..T]} and 0.  level_of[i, t-1] is
    the 1-based index L with G[i][t] == levels[i][L-1].  Duplicate rewards are
    deduplicated by exact bit equality; strict monotonicity of the levels is
    what makes consecutive-level differences well defined downstream.
    """

    levels: tuple
    level_of: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(_freeze(lv) for lv in self.levels))
        object.__setattr__(self, "level_of",
                           _freeze(np.asarray(self.level_of, dtype=np.int64)))

    def n_levels(self, i: int) -> int:
        return self.levels[i].shape[0]


class RobustInstance:
    """Immutable, precomputed robust stopping instance."""

    def __init__(self, states: np.ndarray, rewards: RewardMatrix, epsilon: float,
                 packed_intersect: np.ndarray, kappa: KappaTable,
                 t_star: np.ndarray):
        self.states = _freeze(states)
        self.rewards = rewards
        self.epsilon = float(epsilon)
        self._packed = _freeze(packed_intersect)
        self.kappa = kappa
        self.t_star = _freeze(np.asarray(t_star, dtype=np.int64))

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    @property
    def state_dim(self) -> int:
        return self.states.shape[2]

    def intersects(self, i: int, j: int, t: int) -> bool:
        """Table lookup of ||x^i_t - x^j_t||_inf <= 2*epsilon (t 1-based)."""
        n, t_len = self.n_paths, self.horizon
        if not (0 <= i < n and 0 <= j < n and 1 <= t <= t_len):
            raise IndexError(f"(i={i}, j={j}, t={t}) out of range")
        byte = self._packed[t - 1, i, j >> 3]
        return bool((byte >> (7 - (j & 7))) & 1)

    def intersect_row(self, t: int, i: int) -> np.ndarray:
        """Boolean row {j : boxes of i and j intersect at period t}."""
        return np.unpackbits(self._packed[t - 1, i], count=self.n_paths).astype(bool)

    def any_intersecting(self, t: int, members: np.ndarray) -> np.ndarray:
        """For every i, whether some j with members[j] intersects i at t."""
        packed_members = np.packbits(members)
        return (self._packed[t - 1] & packed_members[None, :]).any(axis=1)


def _pack_intersections(states: np.ndarray, epsilon: float) -> np.ndarray:
    n, t_len, d = states.shape
    width = (n + 7) // 8
    packed = np.empty((t_len, n, width), dtype=np.uint8)
    # Chunk rows so the (rows, n, d) difference tensor stays modest.
    chunk = max(1, int(4_000_000 // max(1, n * d)))
    threshold = 2.0 * epsilon
    for t in range(t_len):
        xt = states[:, t, :]
        for lo in range(0, n, chunk):
            hi = min(n, lo + chunk)
            diff = np.abs(xt[lo:hi, None, :] - xt[None, :, :]).max(axis=2)
            packed[t, lo:hi] = np.packbits(diff <= threshold, axis=1)
    return packed


def build_instance(states: np.ndarray, rewards: RewardMatrix,
                   epsilon: float) -> RobustInstance:
    """Assemble a RobustInstance from states, rewards and the box radius.

    The intersection table costs O(N^2*T*d); everything else is O(N*T log T).
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 3:
        raise ParameterError("states must have shape (n_paths, horizon, state_dim)")
    if epsilon < 0.0:
        raise ParameterError("epsilon must be nonnegative")
    n, t_len, _ = states.shape
    if rewards.values.shape != (n, t_len):
        raise ParameterError("reward shape must match the states")

    packed = _pack_intersections(states, epsilon)

    g = rewards.values
    levels: List[np.ndarray] = []
    level_of = np.empty((n, t_len), dtype=np.int64)
    for i in range(n):
        lv = np.unique(np.concatenate((g[i], [0.0])))
        levels.append(lv)
        level_of[i] = np.searchsorted(lv, g[i]) + 1
    kappa = KappaTable(levels=tuple(levels), level_of=level_of)
    t_star = np.argmax(g, axis=1) + 1  # argmax returns the first maximizer
    return RobustInstance(states, rewards, epsilon, packed, kappa, t_star)


def intersects(instance: RobustInstance, i: int, j: int, t: int) -> bool:
    """Whether the boxes of paths i and j intersect at period t (1-based)."""
    return instance.intersects(i, j, t)


def save_instance(instance: RobustInstance, sink: Union[str, "os.PathLike"]) -> None:
    """Write (states, rewards, epsilon) as a small versioned binary file.

    Derived tables are rebuilt on load, so the file pins exactly the inputs
    needed for a reproducible solver run.
    """
    n, t_len, d = instance.states.shape
    header = _MAGIC + struct.pack("<BQQQd", _VERSION, n, t_len, d, instance.epsilon)
    with open(sink, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(instance.states, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(instance.rewards.values, dtype="<f8").tobytes())


def load_instance(source: Union[str, "os.PathLike"]) -> RobustInstance:
    with open(source, "rb") as fh:
        blob = fh.read()
    head = len(_MAGIC) + struct.calcsize("<BQQQd")
    if blob[: len(_MAGIC)] != _MAGIC or len(blob) < head:
        raise ParameterError("not a rostop instance file")
    version, n, t_len, d, epsilon = struct.unpack("<BQQQd", blob[len(_MAGIC):head])
    if version != _VERSION:
        raise ParameterError(f"unsupported instance file version {version}")
    need = head + 8 * n * t_len * (d + 1)
    if len(blob) != need:
        raise ParameterError("instance file is truncated or oversized")
    states = np.frombuffer(blob, dtype="<f8", count=n * t_len * d,
                           offset=head).reshape(n, t_len, d)
    rewards = np.frombuffer(blob, dtype="<f8", count=n * t_len,
                            offset=head + 8 * n * t_len * d).reshape(n, t_len)
    return build_instance(states.copy(), RewardMatrix(rewards.copy()), epsilon)
