import numpy as np
import pytest

from qvialm.augmented import (
    complementarity_bound,
    eval_aug_lagrangian,
    eval_V,
    feasibility,
    kkt_residual,
    normality_sup,
    penalty_update,
    safeguard,
    update_multiplier,
)
from qvialm.problem import BoxSet, ContractError, QviProblem, project_polar_cone
from qvialm.problems import build_analytic_moving_set


def scalar_problem(K: BoxSet, shift=0.0):
    """F(x) = x - 2, G(x, y) = y + shift, DyG* = identity."""
    one = np.ones(1)
    return QviProblem(
        n=1, m=1,
        eval_F=lambda x: x - 2.0,
        eval_G=lambda x, y: y + shift,
        apply_DyG=lambda x, y, d: d,
        apply_DyG_adj=lambda x, y, mu: mu,
        apply_DxG=lambda x, y, d: 0 * d,
        set_C=BoxSet.whole_space(1), set_K=K,
        x_weights=one, h_weights=one,
        jac_F=lambda x: np.eye(1),
    )


def up_to(b):
    return BoxSet(np.array([-np.inf]), np.array([float(b)]))


class TestAugLagrangian:
    def test_interior_constraint_gives_F(self):
        p = scalar_problem(up_to(10.0))
        x = np.array([3.0])
        np.testing.assert_array_equal(eval_aug_lagrangian(p, x, np.zeros(1), 5.0), p.F(x))

    def test_hand_value(self):
        # (2 - 2) + 10 * (2 - 1)
        p = scalar_problem(up_to(1.0))
        assert eval_aug_lagrangian(p, np.array([2.0]), np.zeros(1), 10.0)[0] == pytest.approx(10.0)

    @pytest.mark.parametrize("x,w,rho", [(-1.0, 0.5, 1.0), (0.3, -2.0, 7.0), (4.0, 0.0, 0.1)])
    def test_moreau_shortcut_for_cones(self, x, w, rho):
        K = BoxSet.nonnegative(1)
        p = scalar_problem(K)
        xa, wa = np.array([x]), np.array([w])
        direct = eval_aug_lagrangian(p, xa, wa, rho)
        short = p.F(xa) + project_polar_cone(wa + rho * p.G(xa, xa), K)
        np.testing.assert_allclose(direct, short, rtol=0, atol=1e-14)

    def test_rejects_nonpositive_rho(self):
        with pytest.raises(ContractError):
            eval_aug_lagrangian(scalar_problem(up_to(1.0)), np.zeros(1), np.zeros(1), 0.0)


class TestUtility:
    def test_feasible_zero(self):
        p = scalar_problem(up_to(5.0))
        assert eval_V(p, np.array([1.0]), np.zeros(1), 1.0) == 0.0

    def test_violation(self):
        p = scalar_problem(up_to(0.0))
        assert eval_V(p, np.array([1.0]), np.zeros(1), 1.0) == pytest.approx(1.0)

    def test_shifted_multiplier(self):
        # g = -0.5, z = g + w/rho = 0, P_K(0) = 0
        p = scalar_problem(BoxSet.nonnegative(1))
        assert eval_V(p, np.array([-0.5]), np.ones(1), 2.0) == pytest.approx(0.5)


class TestMultiplier:
    def test_no_violation(self):
        p = scalar_problem(up_to(5.0))
        assert update_multiplier(p, np.array([1.0]), np.zeros(1), 3.0)[0] == 0.0

    def test_lower_bound_violation(self):
        p = scalar_problem(BoxSet.nonnegative(1))
        lam = update_multiplier(p, np.array([-0.2]), np.zeros(1), 10.0)
        assert lam[0] == pytest.approx(-2.0)

    def test_with_shift(self):
        p = scalar_problem(up_to(1.0))
        assert update_multiplier(p, np.array([2.0]), np.array([3.0]), 1.0)[0] == pytest.approx(4.0)


class TestSafeguard:
    B = BoxSet.uniform(1, -1e6, 1e6)

    def test_inside(self):
        assert safeguard(np.array([12.5]), self.B)[0] == 12.5

    def test_clamped(self):
        assert safeguard(np.array([2e6]), self.B)[0] == 1e6

    def test_zero(self):
        assert safeguard(np.zeros(1), self.B)[0] == 0.0


class TestPenalty:
    def test_first_iteration_keeps_rho(self):
        assert penalty_update(123.0, None, 1.0, 10.0, 0.1, 0) == 1.0

    def test_sufficient_decrease(self):
        assert penalty_update(0.05, 1.0, 1.0, 10.0, 0.1, 3) == 1.0

    def test_insufficient_decrease(self):
        assert penalty_update(0.5, 1.0, 1.0, 10.0, 0.1, 3) == 10.0

    def test_boundary_of_test_is_kept(self):
        assert penalty_update(0.1, 1.0, 4.0, 10.0, 0.1, 2) == 4.0


class TestComplementarityBound:
    def test_zero_multiplier(self):
        assert complementarity_bound(np.zeros(1), np.ones(1), 1.0, np.ones(1)) == 0.0

    def test_equal_multipliers_cancel(self):
        assert complementarity_bound(np.ones(1), np.ones(1), 2.0, np.ones(1)) == 0.0

    def test_hand_value(self):
        assert complementarity_bound(np.ones(1), np.array([3.0]), 1.0, np.ones(1)) == pytest.approx(2.0)


class TestNormalitySup:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        K = BoxSet(np.array([-1.0, 0.0, -2.0]), np.array([1.0, 3.0, 0.5]))
        for _ in range(50):
            lam = rng.normal(size=3)
            g = rng.normal(size=3)
            wts = rng.uniform(0.5, 2, size=3)
            corners = np.array(np.meshgrid(*zip(K.lower, K.upper))).reshape(3, -1).T
            brute = max(np.dot(wts * lam, c - g) for c in corners)
            assert normality_sup(lam, g, K, wts) == pytest.approx(brute, abs=1e-12)

    def test_unbounded_direction(self):
        assert normality_sup(np.array([1.0]), np.zeros(1), BoxSet.nonnegative(1), np.ones(1)) == np.inf

    def test_polar_multiplier_bounded(self):
        # lam in the polar of K = [0, inf): sup is attained at y = 0
        val = normality_sup(np.array([-2.0]), np.array([0.5]), BoxSet.nonnegative(1), np.ones(1))
        assert val == pytest.approx(1.0)


class TestKkt:
    p = build_analytic_moving_set()

    def test_exact_point(self):
        assert kkt_residual(self.p, np.array([1.0]), np.array([1.0])) <= 1e-12

    def test_unconstrained_zero(self):
        # F(2) = 0, but G(2, 2) = 0.5 violates the constraint
        assert kkt_residual(self.p, np.array([2.0]), np.zeros(1)) == pytest.approx(0.5)

    def test_interior_zero_of_F(self):
        p = scalar_problem(up_to(10.0))
        assert kkt_residual(p, np.array([2.0]), np.zeros(1)) == 0.0

    def test_feasibility(self):
        assert feasibility(self.p, np.array([2.0])) == pytest.approx(0.5)
        assert feasibility(self.p, np.array([1.0])) == 0.0
