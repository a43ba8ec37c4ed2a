import numpy as np
import pytest
from hypothesis import given, strategies as st

from rostop import (ParameterError, RewardMatrix, build_instance, intersects,
                    load_instance, save_instance)


class TestFigure1:
    def test_intersection_rows(self, figure1):
        assert [intersects(figure1, 0, 1, t) for t in (1, 2, 3)] == \
            [False, True, True]

    def test_self_intersection(self, figure1):
        for i in range(2):
            for t in (1, 2, 3):
                assert intersects(figure1, i, i, t)

    def test_kappa_tables(self, figure1):
        assert figure1.kappa.levels[0].tolist() == [0.0, 6.0, 7.0, 8.0]
        assert figure1.kappa.level_of[0].tolist() == [4, 3, 2]
        assert figure1.kappa.levels[1].tolist() == [0.0, 3.0, 4.0]
        assert figure1.kappa.level_of[1].tolist() == [2, 3, 2]

    def test_t_star(self, figure1):
        assert figure1.t_star.tolist() == [1, 2]

    def test_index_errors(self, figure1):
        with pytest.raises(IndexError):
            figure1.intersects(0, 2, 1)
        with pytest.raises(IndexError):
            figure1.intersects(0, 0, 4)


def test_zero_epsilon_distinct_states():
    rng = np.random.default_rng(0)
    states = rng.random((5, 3, 2))
    inst = build_instance(states, RewardMatrix(rng.random((5, 3))), 0.0)
    for t in (1, 2, 3):
        for i in range(5):
            for j in range(5):
                assert inst.intersects(i, j, t) == (i == j)


def test_parameter_validation():
    states = np.ones((2, 2, 1))
    rewards = RewardMatrix(np.ones((2, 2)))
    with pytest.raises(ParameterError):
        build_instance(states, rewards, -0.5)
    with pytest.raises(ParameterError):
        RewardMatrix(-np.ones((2, 2)))
    with pytest.raises(ParameterError):
        build_instance(states, RewardMatrix(np.ones((3, 2))), 0.1)


@given(st.integers(0, 2 ** 32 - 1),
       st.sampled_from([0.0, 0.05, 0.3, 1.0]))
def test_table_matches_direct_recomputation(seed, eps):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    t_len = int(rng.integers(1, 6))
    d = int(rng.integers(1, 4))
    states = rng.random((n, t_len, d)) * 3
    inst = build_instance(states, RewardMatrix(rng.random((n, t_len))), eps)
    for t in range(1, t_len + 1):
        direct = (np.abs(states[:, None, t - 1, :] - states[None, :, t - 1, :])
                  .max(axis=2) <= 2 * eps)
        table = np.array([[inst.intersects(i, j, t) for j in range(n)]
                          for i in range(n)])
        assert np.array_equal(direct, table)
        assert np.array_equal(table, table.T)


@given(st.integers(0, 2 ** 32 - 1))
def test_kappa_invariants(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    t_len = int(rng.integers(1, 6))
    # coarse values force duplicated rewards
    rewards = RewardMatrix(rng.integers(0, 4, size=(n, t_len)).astype(float))
    inst = build_instance(rng.random((n, t_len, 1)), rewards, 0.1)
    g = rewards.values
    for i in range(n):
        levels = inst.kappa.levels[i]
        assert levels[0] == 0.0
        assert np.all(np.diff(levels) > 0)
        assert levels.shape[0] <= t_len + 1
        assert set(levels.tolist()) == set(g[i].tolist()) | {0.0}
        for t in range(t_len):
            assert g[i, t] == levels[inst.kappa.level_of[i, t] - 1]
        # earliest argmax
        assert g[i, inst.t_star[i] - 1] == g[i].max()
        assert np.all(g[i, :inst.t_star[i] - 1] < g[i].max())


def test_all_zero_reward_row():
    states = np.array([[1.0, 2.0, 3.0], [9.0, 9.0, 9.0]])[:, :, None]
    rewards = RewardMatrix(np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]))
    inst = build_instance(states, rewards, 0.1)
    assert inst.kappa.levels[0].tolist() == [0.0]
    assert inst.kappa.level_of[0].tolist() == [1, 1, 1]
    assert inst.t_star[0] == 1


def test_epsilon_monotonicity():
    rng = np.random.default_rng(12)
    states = rng.random((6, 4, 2))
    rewards = RewardMatrix(rng.random((6, 4)))
    small = build_instance(states, rewards, 0.1)
    large = build_instance(states, rewards, 0.4)
    for t in range(1, 5):
        for i in range(6):
            for j in range(6):
                if small.intersects(i, j, t):
                    assert large.intersects(i, j, t)


def test_binary_round_trip(tmp_path, figure1):
    target = tmp_path / "instance.bin"
    save_instance(figure1, target)
    loaded = load_instance(target)
    assert np.array_equal(loaded.states, figure1.states)
    assert np.array_equal(loaded.rewards.values, figure1.rewards.values)
    assert loaded.epsilon == figure1.epsilon
    assert np.array_equal(loaded.t_star, figure1.t_star)
    # identical bytes on re-save
    second = tmp_path / "instance2.bin"
    save_instance(loaded, second)
    assert target.read_bytes() == second.read_bytes()


def test_binary_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not an instance")
    with pytest.raises(ParameterError):
        load_instance(bad)
