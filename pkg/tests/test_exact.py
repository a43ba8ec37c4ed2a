import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rostop import (EnumerationCapError, RewardMatrix, SigmaPolicy,
                    build_instance, export_milp, ip_objective, solve_bnb,
                    solve_enumeration, solve_heuristic)

from conftest import (bp_objective, brute_force_ip, minimal_feasible_w,
                      random_instance, sigma_from_b)


class TestEnumeration:
    def test_figure1(self, figure1):
        sol = solve_enumeration(figure1)
        assert sol.sigma.sigma.tolist() == [1, 2]
        assert sol.value == 6.0
        assert sol.proved_optimal
        assert sol.nodes_explored == 9

    def test_single_path_reduces_to_max_reward(self):
        rng = np.random.default_rng(1)
        states = rng.random((1, 4, 1))
        rewards = RewardMatrix(np.array([[2.0, 7.0, 3.0, 5.0]]))
        inst = build_instance(states, rewards, 0.3)
        sol = solve_enumeration(inst)
        assert sol.value == 7.0
        assert sol.sigma.sigma.tolist() == [2]

    def test_lexicographic_tie_break(self):
        # two identical paths, constant rewards: every sigma is optimal
        states = np.ones((2, 2, 1))
        inst = build_instance(states, RewardMatrix(np.ones((2, 2))), 0.0)
        sol = solve_enumeration(inst)
        assert sol.sigma.sigma.tolist() == [1, 1]

    def test_cap_refusal(self, figure1):
        with pytest.raises(EnumerationCapError, match="solve_bnb"):
            solve_enumeration(figure1, cap=8)

    def test_matches_independent_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            inst = random_instance(rng, n_max=4, t_max=3)
            best, _ = brute_force_ip(inst)
            assert solve_enumeration(inst).value == pytest.approx(best,
                                                                  abs=1e-12)

    def test_all_boxes_overlapping_covers_argmax_assignment(self):
        rng = np.random.default_rng(8)
        inst = random_instance(rng, n_max=5, t_max=4, eps_choices=(50.0,))
        sol = solve_enumeration(inst)
        argmax_policy = SigmaPolicy(inst.t_star)
        assert sol.value >= ip_objective(inst, argmax_policy) - 1e-12


class TestBranchAndBound:
    def test_figure1_root_prune(self, figure1):
        sol = solve_bnb(figure1)
        assert sol.sigma.sigma.tolist() == [1, 2]
        assert sol.value == 6.0
        assert sol.proved_optimal
        # the root bound (8+4)/2 = 6.0 already matches the warm start
        assert sol.nodes_explored == 1

    def test_budget_zero_returns_warm_start(self, figure1):
        warm = solve_heuristic(figure1)
        sol = solve_bnb(figure1, budget=0)
        assert not sol.proved_optimal
        assert sol.nodes_explored == 0
        assert sol.sigma.sigma.tolist() == warm.sigma.sigma.tolist()
        assert sol.value == warm.ip_value

    def test_budget_exhaustion_keeps_best_incumbent(self):
        rng = np.random.default_rng(9)
        inst = random_instance(rng, n_max=6, t_max=4)
        full = solve_bnb(inst)
        capped = solve_bnb(inst, budget=2)
        assert capped.value <= full.value + 1e-12
        assert capped.value >= solve_heuristic(inst).ip_value - 1e-12

    @given(st.integers(0, 2 ** 32 - 1))
    def test_oracle_equivalence(self, seed):
        rng = np.random.default_rng(seed)
        inst = random_instance(rng)
        exact = solve_enumeration(inst)
        bnb = solve_bnb(inst)
        assert bnb.proved_optimal
        assert bnb.value == pytest.approx(exact.value, abs=1e-9)
        assert bnb.value == pytest.approx(ip_objective(inst, bnb.sigma),
                                          abs=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_bilinear_solution_transform_never_loses_value(seed):
    """Derived sigma assignments dominate the bilinear objective they came from."""
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n_max=5, t_max=4)
    n, t_len = inst.n_paths, inst.horizon
    b = (rng.random((n, t_len)) < 0.4)
    ws = minimal_feasible_w(inst, b)
    obj = bp_objective(inst, b, ws)
    sigma = sigma_from_b(b, t_len)
    assert ip_objective(inst, SigmaPolicy(sigma)) >= obj - 1e-9


class TestMilpExport:
    def test_figure1_variable_counts(self, figure1):
        buf = io.StringIO()
        export_milp(figure1, buf)
        text = buf.getvalue()
        b_vars = {tok for tok in text.split() if tok.startswith("b_")}
        w_vars = {tok for tok in text.split() if tok.startswith("w_")}
        f_vars = {tok for tok in text.split() if tok.startswith("f_")}
        assert len(b_vars) == 6    # N * T
        assert len(w_vars) == 21   # sum_i T * |levels_i| = 12 + 9
        assert len(f_vars) == 10   # sum_{i,t} (L_it - 1) = 6 + 4
        assert text.startswith("Maximize")
        assert text.rstrip().endswith("End")
        for section in ("Subject To", "Bounds", "Binary"):
            assert section in text
        # the three valid-equality families
        assert " start_1: w_1_1_1 = 0" in text
        assert " step_1_1: b_1_1 + w_1_1_1 - w_1_2_1 = 0" in text
        assert " final_1: b_1_3 + w_1_3_1 = 1" in text

    def test_export_is_deterministic(self, figure1, tmp_path):
        a, b = tmp_path / "a.lp", tmp_path / "b.lp"
        export_milp(figure1, str(a))
        export_milp(figure1, str(b))
        assert a.read_bytes() == b.read_bytes()

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=12)
    def test_linearized_formulation_matches_enumeration(self, seed):
        """Independent MILP assembly of the linearization agrees with the oracle.

        Builds the linearized bilinear model directly from the instance (not
        through the text exporter) and solves it with scipy's MILP solver.
        """
        milp = pytest.importorskip("scipy.optimize")
        from scipy.optimize import Bounds, LinearConstraint
        from scipy.optimize import milp as scipy_milp

        rng = np.random.default_rng(seed)
        inst = random_instance(rng, n_max=4, t_max=3, d_max=1)
        n, t_len = inst.n_paths, inst.horizon
        level_of = inst.kappa.level_of
        levels = inst.kappa.levels

        index = {}

        def var(kind, *key):
            return index.setdefault((kind,) + key, len(index))

        for i in range(n):
            for t in range(1, t_len + 1):
                var("b", i, t)
                for l in range(1, levels[i].shape[0] + 1):
                    var("w", i, t, l)
                for l in range(1, level_of[i, t - 1]):
                    var("f", i, t, l)
        nv = len(index)
        c = np.zeros(nv)
        for i in range(n):
            for t in range(1, t_len + 1):
                for l in range(1, level_of[i, t - 1]):
                    c[index[("f", i, t, l)]] = -(levels[i][l] -
                                                 levels[i][l - 1]) / n
        rows, lb, ub = [], [], []

        def add(coeffs, low, high):
            row = np.zeros(nv)
            for key, val in coeffs:
                row[index[key]] += val
            rows.append(row)
            lb.append(low)
            ub.append(high)

        for i in range(n):
            k = levels[i].shape[0]
            for t in range(1, t_len + 1):
                for l in range(1, level_of[i, t - 1]):
                    add([(("f", i, t, l), 1), (("b", i, t), -1)], -np.inf, 0)
                    add([(("f", i, t, l), 1), (("w", i, t, l), 1)], -np.inf, 1)
            for t in range(1, t_len):
                for l in range(1, k + 1):
                    add([(("w", i, t, l), 1), (("w", i, t + 1, l), -1)],
                        -np.inf, 0)
                add([(("b", i, t), 1), (("w", i, t + 1, 1), -1)], -np.inf, 0)
            for t in range(1, t_len + 1):
                for l in range(1, k):
                    add([(("w", i, t, l), 1), (("w", i, t, l + 1), -1)],
                        -np.inf, 0)
            for t in range(1, t_len + 1):
                lvl = level_of[i, t - 1]
                for j in range(n):
                    if inst.intersects(i, j, t):
                        add([(("b", j, t), 1), (("w", i, t, lvl), -1)],
                            -np.inf, 0)
        integrality = np.zeros(nv)
        lo = np.zeros(nv)
        hi = np.ones(nv)
        for (kind, *key), v in index.items():
            if kind == "b":
                integrality[v] = 1
        res = scipy_milp(c=c, constraints=LinearConstraint(np.array(rows),
                                                           np.array(lb),
                                                           np.array(ub)),
                         integrality=integrality, bounds=Bounds(lo, hi))
        assert res.success
        assert -res.fun == pytest.approx(solve_enumeration(inst).value,
                                         abs=1e-7)
