import numpy as np
import pytest

from oracles import brute_force_assignment, min_snap_collocation
from swarmshow import (
    RotationSpec,
    TransitionSpec,
    assign,
    build_cost_matrix,
    from_coefficients,
    from_rotation,
    hungarian,
)
from swarmshow.assignment import assignment_cost, boundary_conditions


def hover_grid(points, t0, tf):
    """Static primitive holding each drone at a fixed point."""
    points = np.atleast_2d(points)
    n, m = len(points), 1
    return from_coefficients(t0, tf, [1.0], points,
                             np.zeros((n, m, 3)), np.zeros((n, m, 3)))


def hover_pair(p1_points, p2_points, t_s=10.0, t_e=13.0):
    mp1 = hover_grid(p1_points, 0.0, t_s)
    mp2 = hover_grid(p2_points, t_e, t_e + 10.0)
    return TransitionSpec(mp1, mp2, t_s, t_e)


class TestTransitionSpec:
    def test_validates_window_against_primitives(self):
        mp1 = hover_grid([[0, 0, 1]], 0.0, 10.0)
        mp2 = hover_grid([[1, 0, 1]], 13.0, 20.0)
        TransitionSpec(mp1, mp2, 10.0, 13.0)  # ok
        with pytest.raises(ValueError, match="eps1"):
            TransitionSpec(mp1, mp2, 9.0, 13.0)
        with pytest.raises(ValueError, match="eps2"):
            TransitionSpec(mp1, mp2, 10.0, 14.0)

    def test_rejects_inverted_window(self):
        mp1 = hover_grid([[0, 0, 1]], 0.0, 10.0)
        mp2 = hover_grid([[1, 0, 1]], 5.0, 20.0)
        with pytest.raises(ValueError, match="t_s < t_e"):
            TransitionSpec(mp1, mp2, 10.0, 5.0, eps1=1.0, eps2=1.0)


class TestAssignmentCost:
    def test_same_point_is_free(self):
        spec = hover_pair([[1, 2, 1]], [[1, 2, 1]])
        assert assignment_cost(spec, 0, 0) == pytest.approx(0.0, abs=1e-9)

    def test_quadratic_in_distance(self):
        spec1 = hover_pair([[0, 0, 1]], [[1, 0, 1]])
        spec2 = hover_pair([[0, 0, 1]], [[2, 0, 1]])
        c1 = assignment_cost(spec1, 0, 0)
        c2 = assignment_cost(spec2, 0, 0)
        assert c2 == pytest.approx(4 * c1, rel=1e-9)
        assert c2 > c1 > 0

    def test_rotation_pair_matches_collocation_oracle(self):
        spec1 = RotationSpec(rho_o=[0, 0, 1], R_IBo=np.eye(3), omega_z=1.0,
                             body_points=[[1.0, 0, 0], [0, 1.0, 0]])
        spec2 = RotationSpec(rho_o=[0.5, 0, 1.2], R_IBo=np.eye(3), omega_z=1.3,
                             body_points=[[0.8, 0, 0.2], [0, 0.8, 0.2]])
        mp1 = from_rotation(spec1, 0.0, 10.0)
        mp2 = from_rotation(spec2, 13.0, 20.0)
        spec = TransitionSpec(mp1, mp2, 10.0, 13.0)
        cost = assignment_cost(spec, 0, 1, degree=14)
        bc = boundary_conditions(spec, 0, 1)
        oracle = min_snap_collocation(bc.start_state, bc.end_state, 14, 10.0, 13.0)
        assert abs(cost - oracle) / oracle < 0.01

    def test_index_errors(self):
        spec = hover_pair([[0, 0, 1]], [[1, 0, 1]])
        with pytest.raises(IndexError):
            assignment_cost(spec, 1, 0)


class TestCostMatrix:
    def test_single_drone(self):
        spec = hover_pair([[0, 0, 1]], [[1, 0, 1]])
        costs = build_cost_matrix(spec)
        assert costs.shape == (1, 1)
        assert costs[0, 0] > 0

    def test_swapping_drones_permutes_rows(self):
        p1 = [[0, 0, 1], [1, 0, 1], [2, 0, 1]]
        p2 = [[0, 1, 1], [1, 1, 1], [2, 1, 1]]
        base = build_cost_matrix(hover_pair(p1, p2))
        swapped = build_cost_matrix(hover_pair([p1[1], p1[0], p1[2]], p2))
        np.testing.assert_allclose(swapped, base[[1, 0, 2]], rtol=1e-12)

    def test_identical_hover_grids_zero_diagonal(self):
        pts = [[0, 0, 1], [1, 0, 1], [0, 1, 1]]
        costs = build_cost_matrix(hover_pair(pts, pts))
        np.testing.assert_allclose(np.diag(costs), 0.0, atol=1e-9)

    def test_size_mismatch(self):
        mp1 = hover_grid([[0, 0, 1], [1, 0, 1]], 0.0, 10.0)
        mp2 = hover_grid([[1, 0, 1]], 13.0, 20.0)
        spec = TransitionSpec(mp1, mp2, 10.0, 13.0)
        with pytest.raises(ValueError, match="fleet sizes"):
            build_cost_matrix(spec)

    def test_distance_mode(self):
        spec = hover_pair([[0, 0, 1]], [[3, 4, 1]])
        costs = build_cost_matrix(spec, mode="distance")
        assert costs[0, 0] == pytest.approx(5.0, rel=1e-12)


class TestHungarian:
    def test_two_by_two(self):
        a = hungarian(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert a.perm == (0, 1)
        assert a.total_cost == pytest.approx(2.0)

    def test_selects_zeros_of_permutation_matrix(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = int(rng.integers(2, 8))
            perm = rng.permutation(n)
            costs = np.ones((n, n))
            costs[np.arange(n), perm] = 0.0
            a = hungarian(costs)
            assert a.total_cost == 0.0
            assert np.array_equal(a.perm, perm)

    def test_matches_brute_force_on_random_matrices(self):
        rng = np.random.default_rng(123)
        for _ in range(40):
            n = int(rng.integers(2, 8))
            costs = rng.uniform(0, 10, size=(n, n))
            a = hungarian(costs)
            _, best = brute_force_assignment(costs)
            assert costs[np.arange(n), a.perm].sum() == best

    def test_input_validation(self):
        with pytest.raises(ValueError, match="square"):
            hungarian(np.ones((2, 3)))
        with pytest.raises(ValueError, match="finite"):
            hungarian(np.array([[1.0, np.inf], [1.0, 1.0]]))

    def test_scaling_leaves_permutation(self):
        rng = np.random.default_rng(5)
        costs = rng.uniform(0, 1, size=(6, 6))
        a = hungarian(costs)
        for lam in (3.0, 0.25):
            b = hungarian(lam * costs)
            assert b.perm == a.perm
            assert b.total_cost == pytest.approx(lam * a.total_cost, rel=1e-12)

    def test_ties_break_lexicographically(self):
        a = hungarian(np.zeros((4, 4)))
        assert a.perm == (0, 1, 2, 3)
        # two optimal choices: (0,1) and (1,0) both cost 2
        b = hungarian(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert b.perm == (0, 1)


class TestAssign:
    def test_single_drone_identity(self):
        spec = hover_pair([[0, 0, 1]], [[1, 0, 1]])
        assert assign(spec).perm == (0,)

    def test_identical_grids_cost_zero(self):
        pts = [[0, 0, 1], [1, 0, 1], [0, 1, 1]]
        a = assign(hover_pair(pts, pts))
        assert a.total_cost == pytest.approx(0.0, abs=1e-9)
        assert a.perm == (0, 1, 2)  # identity among the optima, by tie-break

    def test_beats_random_permutations(self):
        rng = np.random.default_rng(17)
        p1 = rng.uniform(0, 4, size=(5, 3))
        p2 = rng.uniform(0, 4, size=(5, 3))
        spec = hover_pair(p1, p2)
        costs = build_cost_matrix(spec)
        a = assign(spec)
        rows = np.arange(5)
        for _ in range(1000):
            perm = rng.permutation(5)
            assert a.total_cost <= costs[rows, perm].sum() + 1e-9

    def test_external_permutation_costed(self):
        pts1 = [[0, 0, 1], [1, 0, 1]]
        pts2 = [[0, 1, 1], [1, 1, 1]]
        spec = hover_pair(pts1, pts2)
        costs = build_cost_matrix(spec)
        a = assign(spec, permutation=[1, 0])
        assert a.perm == (1, 0)
        assert a.total_cost == pytest.approx(costs[0, 1] + costs[1, 0], rel=1e-9)

    def test_external_permutation_validated(self):
        spec = hover_pair([[0, 0, 1], [1, 0, 1]], [[0, 1, 1], [1, 1, 1]])
        with pytest.raises(ValueError, match="bijection"):
            assign(spec, permutation=[0, 0])

    def test_deterministic(self):
        rng = np.random.default_rng(23)
        p1 = rng.uniform(0, 4, size=(6, 3))
        p2 = rng.uniform(0, 4, size=(6, 3))
        spec = hover_pair(p1, p2)
        assert assign(spec).perm == assign(spec).perm
