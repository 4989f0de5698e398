import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from diattack.attack import (
    GaussianAttack,
    NonConvexAtSolution,
    check_mean_condition,
    exhaustive_sparse_attack,
    feasibility_report,
    full_attack,
    greedy_sparse_attack,
    scalar_step_cost,
    single_measurement_attack,
    single_measurement_windows,
    single_variance,
    step_variance,
)
from diattack.divergence import attack_cost, cost_gradient
from diattack.errors import (
    InfeasibleLambda,
    InfeasibleLambdaAtStep,
    NoFeasibleMeasurement,
    TooManySubsets,
)
from diattack.plant import AttackContext

from helpers import random_feasible_contexts, random_windowed_context


def quiet_full_attack(ctx):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvexAtSolution)
        return full_attack(ctx)


class TestGaussianAttack:
    def test_support(self):
        a = GaussianAttack.diagonal(4, {1: 0.5, 3: 2.0})
        assert a.support == (1, 3)
        assert not a.is_zero

    def test_zero(self):
        assert GaussianAttack.zero(3).is_zero


class TestFullAttack:
    def test_scalar(self):
        attack, report = quiet_full_attack(AttackContext([[1.0]], [[2.0]], 3.0))
        assert attack.Sigma_aa[0, 0] == pytest.approx(0.5, abs=1e-12)
        assert report.eig_condition_1 and report.eig_condition_2

    def test_scalar_grid_oracle(self):
        ctx = AttackContext([[1.0]], [[2.0]], 3.0)
        grid = np.linspace(0.01, 3.0, 300_001)
        costs = [3 * (s - np.log1p(s)) - 2 * s + np.log1p(2 * s) for s in grid]
        assert grid[int(np.argmin(costs))] == pytest.approx(0.5, abs=1e-5)
        assert attack_cost(ctx, [[0.5]]) <= min(costs) + 1e-12

    def test_condition_three_flagged(self):
        with pytest.warns(NonConvexAtSolution):
            _, report = full_attack(AttackContext([[1.0]], [[2.0]], 3.0))
        assert report.status == "stationary point, convexity unverified"

    def test_infeasible_lambda(self):
        with pytest.raises(InfeasibleLambda) as info:
            full_attack(AttackContext([[1.0]], [[2.0]], 1.0))
        assert info.value.report.status == "infeasible"

    def test_gradient_vanishes(self, rng):
        for ctx in random_feasible_contexts(rng, 10):
            attack, report = quiet_full_attack(ctx)
            G = cost_gradient(ctx, attack.Sigma_aa)
            assert np.abs(G).max() <= 1e-8 * max(1.0, np.abs(ctx.M2).max())
            assert report.stationarity_residual <= 1e-8

    def test_positive_definite(self, rng):
        for ctx in random_feasible_contexts(rng, 10):
            attack, _ = quiet_full_attack(ctx)
            assert np.linalg.eigvalsh(attack.Sigma_aa).min() > 0

    def test_mean_condition(self):
        assert check_mean_condition(AttackContext([[1.0]], [[2.0]], 3.0))
        assert not check_mean_condition(AttackContext([[1.0]], [[2.0]], 1.5))


class TestSingleAttack:
    def test_closed_form_scalar(self):
        # a = 1, b = 2, lambda = 3: v = (4 - 3) / (1 * 2) = 0.5
        assert single_variance(1.0, 2.0, 3.0) == pytest.approx(0.5, rel=1e-15)

    @pytest.mark.parametrize("lam", [2.0, 4.0, 1.0, 10.0])
    def test_window_edges_infeasible(self, lam):
        assert single_variance(1.0, 2.0, lam) is None

    def test_golden_section_oracle(self, rng):
        for _ in range(30):
            ctx = random_windowed_context(rng, 3)
            a, b = np.diag(ctx.M1), np.diag(ctx.M2)
            for j in range(3):
                v = single_variance(a[j], b[j], ctx.lam)
                if v is None:
                    continue
                obj = lambda s: scalar_step_cost(s, a[j], b[j], a[j], b[j], ctx.lam)  # noqa: E731
                grid = np.geomspace(1e-8, 1e6, 2000)
                i = int(np.argmin([obj(s) for s in grid]))
                res = minimize_scalar(obj, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden",
                                      tol=1e-12)
                assert v == pytest.approx(res.x, rel=1e-6)

    def test_picks_lowest_cost(self, rng):
        ctx = random_windowed_context(rng, 4)
        attack, j = single_measurement_attack(ctx)
        a, b = np.diag(ctx.M1), np.diag(ctx.M2)
        for i in range(4):
            v = single_variance(a[i], b[i], ctx.lam)
            if v is not None:
                assert attack_cost(ctx, attack.Sigma_aa) <= attack_cost(ctx, np.diag(np.eye(4)[i] * v))
        assert attack.support == (j,)

    def test_no_feasible_measurement(self):
        with pytest.raises(NoFeasibleMeasurement):
            single_measurement_attack(AttackContext(np.eye(2), np.eye(2), 2.0))

    def test_windows(self):
        w = single_measurement_windows(AttackContext(np.diag([1.0, 2.0]), np.diag([2.0, 3.0]), 1.0))
        assert w == [(0, 2.0, 4.0), (1, 1.5, 2.25)]

    def test_report(self):
        rep = feasibility_report(AttackContext(np.diag([1.0, 2.0]), np.diag([2.0, 3.0]), 3.0))
        assert len(rep.per_measurement_lambda_windows) == 2


class TestGreedy:
    def test_step_reduces_to_single(self):
        for lam in (2.5, 3.0, 3.9):
            v, failed = step_variance(1.0, 2.0, 1.0, 2.0, lam)
            assert failed == ()
            assert v == pytest.approx(single_variance(1.0, 2.0, lam), rel=1e-12)

    def test_failed_conditions_reported(self):
        assert step_variance(1.0, 2.0, 1.0, 2.0, 1.0)[1] == (1,)
        assert 3 in step_variance(1.0, 2.0, 1.0, 2.0, 5.0)[1]

    def test_k1_equals_single(self, rng):
        for _ in range(20):
            ctx = random_windowed_context(rng, 4)
            single, j = single_measurement_attack(ctx)
            greedy, trace = greedy_sparse_attack(ctx, 1)
            assert trace[0].index == j
            assert np.array_equal(single.Sigma_aa, greedy.Sigma_aa)

    def test_each_step_is_stationary(self, rng):
        ctx = random_windowed_context(rng, 4)
        try:
            attack, trace = greedy_sparse_attack(ctx, 2)
        except InfeasibleLambdaAtStep:
            pytest.skip("second step infeasible for this draw")
        j = trace[1].index
        G = cost_gradient(ctx, attack.Sigma_aa)
        assert abs(G[j, j]) <= 1e-9 * max(np.abs(ctx.M1).max() * ctx.lam, np.abs(ctx.M2).max())

    def test_costs_decrease(self, rng):
        ctx = AttackContext(np.diag([1.0, 1.0, 1.0]), np.diag([2.0, 2.2, 2.4]), 3.5)
        _, trace = greedy_sparse_attack(ctx, 3)
        costs = [s.cost_after for s in trace]
        assert all(c1 < c0 for c0, c1 in zip([0.0] + costs, costs))

    def test_infeasible_step(self):
        with pytest.raises(InfeasibleLambdaAtStep) as info:
            greedy_sparse_attack(AttackContext(np.eye(2), np.eye(2), 2.0), 1)
        assert info.value.step == 1
        assert set(info.value.failures) == {0, 1}

    def test_bad_k(self):
        with pytest.raises(ValueError):
            greedy_sparse_attack(AttackContext(np.eye(2), 2 * np.eye(2), 3.0), 3)

    def test_candidates(self):
        ctx = AttackContext(np.diag([1.0, 1.0, 1.0]), np.diag([2.0, 2.2, 2.4]), 3.5)
        attack, _ = greedy_sparse_attack(ctx, 1, candidates=[0])
        assert attack.support == (0,)


class TestExhaustive:
    def test_not_worse_than_greedy(self, rng):
        for _ in range(10):
            ctx = random_windowed_context(rng, 4)
            for k in (2, 3):
                try:
                    greedy, _ = greedy_sparse_attack(ctx, k)
                except InfeasibleLambdaAtStep:
                    continue
                oracle = exhaustive_sparse_attack(ctx, k)
                assert attack_cost(ctx, oracle.Sigma_aa) <= attack_cost(ctx, greedy.Sigma_aa) + 1e-9

    def test_k1_matches_single(self, rng):
        ctx = random_windowed_context(rng, 4)
        single, _ = single_measurement_attack(ctx)
        assert np.array_equal(exhaustive_sparse_attack(ctx, 1).Sigma_aa, single.Sigma_aa)

    def test_too_many_subsets(self):
        ctx = AttackContext(np.eye(20), 2 * np.eye(20), 3.0)
        with pytest.raises(TooManySubsets):
            exhaustive_sparse_attack(ctx, 10)

    def test_infeasible(self):
        with pytest.raises(InfeasibleLambda):
            exhaustive_sparse_attack(AttackContext(np.eye(3), np.eye(3), 2.0), 2)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(1.05, 4.0), st.floats(0.02, 0.98))
def test_single_variance_is_minimiser(a, ratio, pos):
    b = a * ratio
    lo, hi = ratio, ratio * ratio
    lam = lo + pos * (hi - lo)
    v = single_variance(a, b, lam)
    assert v is not None and v > 0
    f0 = scalar_step_cost(v, a, b, a, b, lam)
    assert f0 < 0
    for s in (0.5, 0.9, 1.1, 2.0):
        assert scalar_step_cost(v * s, a, b, a, b, lam) >= f0 - 1e-12
