import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diattack.attack import GaussianAttack
from diattack.divergence import (
    GaussianSpec,
    attack_cost,
    cost_gradient,
    detection_kl,
    disruption_kl,
    estimate_kl,
    gaussian_kl,
    incremental_cost,
    logdet_i_plus,
    shifted_precision,
)
from diattack.errors import DimensionMismatch, NonPsdInput, SingularReference
from diattack.plant import AttackContext, PlantModel, build_closed_loop, make_context

from helpers import random_closed_loop, random_spd


def naive_kl(m0, S0, m1, S1):
    inv = np.linalg.inv(S1)
    d = m1 - m0
    return 0.5 * (np.trace(inv @ S0) + d @ inv @ d - len(m0)
                  + np.log(np.linalg.det(S1) / np.linalg.det(S0)))


def static_loop():
    # A = 0, K = 0 and L C = 0, so the augmented matrix vanishes
    plant = PlantModel([[0.0]], [[1.0]], [[1.0], [-1.0]], [[1.0]], np.eye(2))
    cl = build_closed_loop(plant, [[0.0]], [[1.0, 1.0]])
    assert not np.any(cl.F)
    return cl


class TestGaussianKl:
    def test_scalar_closed_form(self):
        p = GaussianSpec([1.0], [[2.0]])
        q = GaussianSpec([0.0], [[1.0]])
        assert gaussian_kl(p, q) == pytest.approx(0.5 * (2.0 + 1.0 - 1.0 - np.log(2.0)), rel=1e-14)

    def test_identical_is_zero(self, rng):
        S = random_spd(rng, 4)
        p = GaussianSpec(rng.normal(size=4), S)
        assert gaussian_kl(p, p) < 1e-10

    def test_matches_naive(self, rng):
        for _ in range(10):
            d = int(rng.integers(1, 5))
            m0, m1 = rng.normal(size=d), rng.normal(size=d)
            S0, S1 = random_spd(rng, d), random_spd(rng, d)
            assert gaussian_kl(GaussianSpec(m0, S0), GaussianSpec(m1, S1)) == pytest.approx(
                naive_kl(m0, S0, m1, S1), rel=1e-9)

    def test_singular_reference(self):
        with pytest.raises(SingularReference):
            gaussian_kl(GaussianSpec([0, 0], np.eye(2)), GaussianSpec([0, 0], np.diag([1.0, 0.0])))

    def test_singular_argument_is_infinite(self):
        assert gaussian_kl(GaussianSpec([0, 0], np.diag([1.0, 0.0])), GaussianSpec([0, 0], np.eye(2))) == np.inf

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            gaussian_kl(GaussianSpec([0], [[1]]), GaussianSpec([0, 0], np.eye(2)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_non_negative(self, d, seed):
        rng = np.random.default_rng(seed)
        p = GaussianSpec(rng.normal(size=d), random_spd(rng, d, 0.01))
        q = GaussianSpec(rng.normal(size=d), random_spd(rng, d, 0.01))
        assert gaussian_kl(p, q) >= 0.0


class TestLoopDivergences:
    def test_zero_attack(self, rng):
        cl = random_closed_loop(rng)
        a = GaussianAttack.zero(2)
        assert disruption_kl(cl, a) == 0.0
        assert detection_kl(cl, a) == 0.0
        assert estimate_kl(cl, a) == 0.0

    def test_estimate_is_marginal(self, rng):
        cl = random_closed_loop(rng)
        a = GaussianAttack(np.zeros(2), random_spd(rng, 2))
        # data processing: a marginal never diverges more than the joint
        assert estimate_kl(cl, a) <= disruption_kl(cl, a) + 1e-12

    def test_detection_closed_form(self, rng):
        cl = random_closed_loop(rng)
        Saa = random_spd(rng, 2)
        mu = rng.normal(size=2)
        ref = naive_kl(mu, cl.Sigma_yy + Saa, np.zeros(2), cl.Sigma_yy)
        assert detection_kl(cl, GaussianAttack(mu, Saa)) == pytest.approx(ref, rel=1e-10)

    def test_cost_decomposition_static_loop(self, rng):
        cl = static_loop()
        for lam in (0.5, 3.0):
            ctx = make_context(cl, lam)
            Saa = random_spd(rng, 2)
            mu = rng.normal(size=2)
            a = GaussianAttack(mu, Saa)
            expected = 2 * lam * detection_kl(cl, a) - 2 * disruption_kl(cl, a)
            assert attack_cost(ctx, Saa, mu) == pytest.approx(expected, rel=1e-12, abs=1e-12)


class TestAttackCost:
    def test_zero_attack_zero_cost(self):
        ctx = AttackContext(np.eye(2), 2 * np.eye(2), 3.0)
        assert attack_cost(ctx, np.zeros((2, 2))) == 0.0

    def test_scalar(self):
        ctx = AttackContext([[1.0]], [[2.0]], 3.0)
        s = 0.5
        ref = 3 * (s - np.log1p(s)) - 2 * s + np.log1p(2 * s)
        assert attack_cost(ctx, [[s]]) == pytest.approx(ref, rel=1e-14)

    def test_rejects_non_psd(self):
        ctx = AttackContext(np.eye(2), np.eye(2), 1.0)
        with pytest.raises(NonPsdInput):
            attack_cost(ctx, -np.eye(2))

    def test_logdet_matches_det(self, rng):
        M, S = random_spd(rng, 3), random_spd(rng, 3)
        assert logdet_i_plus(M, S) == pytest.approx(np.log(np.linalg.det(np.eye(3) + M @ S)), rel=1e-12)

    def test_gradient_finite_difference(self, rng):
        ctx = AttackContext(random_spd(rng, 3), random_spd(rng, 3), 1.7)
        S = random_spd(rng, 3)
        G = cost_gradient(ctx, S)
        h = 1e-6
        for _ in range(5):
            D = rng.normal(size=(3, 3))
            D = D + D.T
            fd = (attack_cost(ctx, S + h * D) - attack_cost(ctx, S - h * D)) / (2 * h)
            assert fd == pytest.approx(np.sum(G * D), rel=1e-6, abs=1e-8)

    def test_shifted_precision(self, rng):
        M, S = random_spd(rng, 3), random_spd(rng, 3)
        np.testing.assert_allclose(shifted_precision(M, S), np.linalg.inv(np.linalg.inv(M) + S), rtol=1e-10)

    def test_incremental_cost(self, rng):
        ctx = AttackContext(random_spd(rng, 3), random_spd(rng, 3), 2.0)
        S = random_spd(rng, 3)
        D = np.diag([0.3, 0.0, 0.1])
        ref = attack_cost(ctx, S + D) - attack_cost(ctx, S)
        assert incremental_cost(ctx, S, D) == pytest.approx(ref, rel=1e-10)
