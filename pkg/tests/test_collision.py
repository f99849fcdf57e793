import numpy as np
import pytest

from swarmshow import (
    BoundaryConditions,
    CollisionEllipsoid,
    DeviationWeight,
    StateBounds,
    build_graph,
    generate_candidate,
    pair_separation,
    resolve_all,
    resolve_one,
    solve_min_snap,
)
from swarmshow.trajopt import ReducedTransitionProblem


def rest(point):
    return np.vstack([point] + [[0, 0, 0]] * 4)


def straight_line(p0, p1, t_s=0.0, t_e=3.0, degree=14):
    traj, _ = solve_min_snap(BoundaryConditions(rest(p0), rest(p1)), degree, t_s, t_e)
    return traj


def wide_bounds(K=10):
    return StateBounds(pos_min=[-20, -20, -20], pos_max=[20, 20, 20],
                       vel_max=[3.5] * 3, acc_norm_max=10.0, jerk_max=[80.0] * 3, K=K)


def head_on_instance(offset=1.0, height=1.0):
    bcs = [BoundaryConditions(rest([-offset, 0, height]), rest([offset, 0, height])),
           BoundaryConditions(rest([offset, 0, height]), rest([-offset, 0, height]))]
    bounds = wide_bounds()
    probs = [ReducedTransitionProblem(bc, 14, 0.0, 3.0) for bc in bcs]
    cands = [generate_candidate(bc, bounds, 14, 0.0, 3.0, problem=p)
             for bc, p in zip(bcs, probs)]
    return bcs, cands, probs, bounds


class TestEllipsoid:
    def test_validation(self):
        with pytest.raises(ValueError):
            CollisionEllipsoid(np.diag([0.1, -0.1, 0.1]))
        with pytest.raises(ValueError):
            CollisionEllipsoid(np.zeros((3, 3)))
        CollisionEllipsoid([0.14, 0.14, 0.35])  # radii vector form

    def test_presets(self):
        np.testing.assert_allclose(np.diag(CollisionEllipsoid.compact().E),
                                   [0.14, 0.14, 0.35])
        np.testing.assert_allclose(np.diag(CollisionEllipsoid.aggressive().E),
                                   [0.28, 0.28, 0.85])


class TestPairSeparation:
    def test_coincident_points(self):
        a = straight_line([0, 0, 1], [1, 0, 1])
        assert pair_separation(a, a, 1.5, CollisionEllipsoid(np.eye(3))) == 0.0

    def test_unit_ellipsoid_on_boundary(self):
        a = straight_line([0, 0, 0], [0, 0, 0.0001])
        b = straight_line([1, 1, 0], [1, 1, 0.0001])
        sep = pair_separation(a, b, 0.0, CollisionEllipsoid(np.eye(3)))
        assert sep == pytest.approx(2.0, rel=1e-9)

    def test_compact_radii_contact(self):
        a = straight_line([0, 0, 1], [0, 0, 1.0001])
        b = straight_line([0.14, 0, 1], [0.14, 0, 1.0001])
        sep = pair_separation(a, b, 0.0, CollisionEllipsoid.compact())
        assert sep == pytest.approx(1.0, rel=1e-9)


class TestBuildGraph:
    def test_distant_lines_no_edges(self):
        cands = [straight_line([0, 0, 1], [3, 0, 1]),
                 straight_line([0, 10, 1], [3, 10, 1])]
        g = build_graph(cands, CollisionEllipsoid.compact())
        assert g.edges == frozenset()

    def test_swap_creates_one_edge_higher_to_lower(self):
        cands = [straight_line([-1, 0, 1], [1, 0, 1]),
                 straight_line([1, 0, 1], [-1, 0, 1])]
        g = build_graph(cands, CollisionEllipsoid.compact())
        assert g.edges == frozenset({(1, 0)})
        assert g.out_degree(1) == 1
        assert g.out_degree(0) == 0

    def test_matches_dense_sampling_oracle(self):
        rng = np.random.default_rng(21)
        e = CollisionEllipsoid.compact()
        starts = rng.uniform(0, 4, size=(9, 3)) * [1, 1, 0.4] + [0, 0, 0.5]
        ends = rng.uniform(0, 4, size=(9, 3)) * [1, 1, 0.4] + [0, 0, 0.5]
        cands = [straight_line(s, t) for s, t in zip(starts, ends)]
        g = build_graph(cands, e, sample_dt=0.01)

        dense_t = np.arange(0.0, 3.0 + 5e-4, 0.001)
        pos = np.array([c.sample(dense_t) for c in cands])
        gram = e.gram
        oracle_edges = set()
        for n in range(1, 9):
            for m in range(n):
                d = pos[n] - pos[m]
                if np.einsum("ti,ij,tj->t", d, gram, d).min() < 2.0:
                    oracle_edges.add((n, m))
        assert g.edges == frozenset(oracle_edges)

    def test_requires_shared_window(self):
        a = straight_line([0, 0, 1], [1, 0, 1], 0.0, 3.0)
        b = straight_line([0, 1, 1], [1, 1, 1], 0.0, 4.0)
        with pytest.raises(ValueError, match="share"):
            build_graph([a, b], CollisionEllipsoid.compact())

    def test_edge_direction_validated(self):
        from swarmshow.collision import CollisionGraph
        with pytest.raises(ValueError, match="higher to lower"):
            CollisionGraph(3, frozenset({(0, 1)}))


class TestResolveOne:
    def test_no_conflict_returns_candidate(self):
        bcs = [BoundaryConditions(rest([0, 0, 1]), rest([3, 0, 1])),
               BoundaryConditions(rest([0, 8, 1]), rest([3, 8, 1]))]
        bounds = wide_bounds()
        cands = [generate_candidate(bc, bounds, 14, 0.0, 3.0) for bc in bcs]
        out = resolve_one(1, cands, list(cands), bcs[1], bounds,
                          CollisionEllipsoid.compact(), DeviationWeight.identity())
        assert out.trajectory is not None
        ts = np.linspace(0, 3, 61)
        np.testing.assert_allclose(out.trajectory.sample(ts), cands[1].sample(ts),
                                   atol=1e-6)

    def test_head_on_resolves_higher_index_only(self):
        bcs, cands, probs, bounds = head_on_instance()
        e = CollisionEllipsoid.compact()
        out = resolve_one(1, cands, list(cands), bcs[1], bounds.with_steps(40), e,
                          DeviationWeight.identity(), problem=probs[1],
                          rng=np.random.default_rng(0))
        assert out.trajectory is not None
        dense_t = np.arange(0.0, 3.0 + 5e-4, 0.001)
        d = out.trajectory.sample(dense_t) - cands[0].sample(dense_t)
        sep = np.einsum("ti,ij,tj->t", d, e.gram, d)
        assert sep.min() >= 1.0

    def test_z_cheap_weight_moves_avoidance_out_of_plane(self):
        bcs, cands, probs, bounds = head_on_instance()
        e = CollisionEllipsoid.compact()
        outs = {}
        for name, w in (("iso", DeviationWeight.identity()),
                        ("zcheap", DeviationWeight(np.array([1.0, 1.0, 1e-3])))):
            out = resolve_one(1, cands, list(cands), bcs[1], bounds.with_steps(40), e,
                              w, problem=probs[1], rng=np.random.default_rng(0))
            assert out.trajectory is not None
            times = probs[1].constraint_times(40)
            dev = out.trajectory.sample(times) - cands[1].sample(times)
            outs[name] = (dev[:, :2] ** 2).sum()
        assert outs["zcheap"] < outs["iso"]


class TestResolveAll:
    def test_clean_candidates_pass_through(self):
        bcs = [BoundaryConditions(rest([0, 0, 1]), rest([3, 0, 1])),
               BoundaryConditions(rest([0, 5, 1]), rest([3, 5, 1]))]
        bounds = wide_bounds()
        cands = [generate_candidate(bc, bounds, 14, 0.0, 3.0) for bc in bcs]
        plan = resolve_all(cands, bcs, bounds, CollisionEllipsoid.compact())
        assert plan.feasible
        assert plan.sweeps == 0
        for final, cand in zip(plan.trajectories, plan.candidates):
            np.testing.assert_array_equal(final.coeffs, cand.coeffs)

    def test_head_on_feasible_with_contact_free_fine_sampling(self):
        bcs, cands, probs, bounds = head_on_instance()
        plan = resolve_all(cands, bcs, bounds, CollisionEllipsoid.compact(),
                           problems=probs)
        assert plan.feasible
        assert plan.min_step_separation >= 2.0 - 1e-6
        assert plan.min_fine_separation >= 1.0
        # lower-indexed drone keeps its candidate
        np.testing.assert_array_equal(plan.trajectories[0].coeffs, cands[0].coeffs)

    def test_boundary_continuity_preserved(self):
        bcs, cands, probs, bounds = head_on_instance()
        plan = resolve_all(cands, bcs, bounds, CollisionEllipsoid.compact(),
                           problems=probs)
        for bc, traj in zip(bcs, plan.trajectories):
            for p in range(5):
                for t, ref in ((0.0, bc.start_state[p]), (3.0, bc.end_state[p])):
                    err = np.abs(traj.evaluate(t, p) - ref).max()
                    assert err / max(1.0, np.abs(ref).max()) < 1e-5

    def test_deterministic(self):
        bcs, cands, probs, bounds = head_on_instance()
        p1 = resolve_all(cands, bcs, bounds, CollisionEllipsoid.compact(),
                         problems=probs, seed=3)
        p2 = resolve_all(cands, bcs, bounds, CollisionEllipsoid.compact(),
                         problems=probs, seed=3)
        assert p1.log == p2.log
        for a, b in zip(p1.trajectories, p2.trajectories):
            np.testing.assert_array_equal(a.coeffs, b.coeffs)

    def test_structural_endpoint_conflict_detected(self):
        # targets closer than the separation bound: no trajectory can fix this
        bcs = [BoundaryConditions(rest([-1, 0, 1]), rest([0, 0, 1])),
               BoundaryConditions(rest([1, 0, 1]), rest([0.1, 0, 1]))]
        bounds = wide_bounds()
        cands = [generate_candidate(bc, bounds, 14, 0.0, 3.0) for bc in bcs]
        plan = resolve_all(cands, bcs, bounds, CollisionEllipsoid.compact())
        assert not plan.feasible
        assert plan.sweeps == 0
        assert plan.residual_conflicts
        assert any("endpoint_conflicts" in line for line in plan.log)

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            DeviationWeight(np.array([1.0, 0.0, 1.0]))


class TestAdversarialAssignments:
    def test_crossing_random_pairs_resolve(self):
        # rotated assignments force many simultaneous crossings; much harder
        # than the optimal assignments the sweep produces
        from swarmshow.assignment import boundary_conditions
        from swarmshow.sweep import SweepConfig, random_primitive_pair

        cfg = SweepConfig(n_drones=12, seed=0)
        bounds = cfg.state_bounds()
        e = cfg.ellipsoid()
        import swarmshow as ss

        for trial in range(3):
            rng = np.random.default_rng(500 + trial)
            mp1, mp2, t_s, t_e = random_primitive_pair(rng, cfg)
            spec = ss.TransitionSpec(mp1, mp2, t_s, t_e)
            perm = [(d + 5) % 12 for d in range(12)]
            assignment = ss.assign(spec, degree=14, permutation=perm)
            bcs, cands, probs = [], [], []
            for d, role in enumerate(assignment.perm):
                bc = boundary_conditions(spec, d, role)
                prob = ReducedTransitionProblem(bc, 14, t_s, t_e)
                bcs.append(bc)
                probs.append(prob)
                cands.append(generate_candidate(bc, bounds, 14, t_s, t_e,
                                                problem=prob))
            plan = resolve_all(cands, bcs, bounds, e, problems=probs, seed=trial)
            assert plan.feasible, plan.log
            assert plan.min_fine_separation >= 1.0
            assert plan.min_step_separation >= 2.0 - 1e-6


class TestNineDroneInstance:
    def test_crossing_assignment_resolves(self):
        import swarmshow as ss

        sites = [(x, y) for x in (1.0, 2.5, 4.0) for y in (1.0, 2.5, 4.0)]
        wave = ss.WaveSpec(a=5, b=5, h=1.0, c_speed=1.0,
                           modes=(ss.WaveMode(1, 1, [0, 0, 0.4], [0, 0, 0.0]),),
                           sites=np.array(sites))
        mp1 = ss.from_wave(wave, 0.0, 10.0)
        pts = ss.helix_on_cone(9, [0, 0, 0], base_radius=1.4, height=1.0,
                               turns=1.2, top_radius=0.45)
        rot = ss.RotationSpec(rho_o=[2.5, 2.5, 0.4], R_IBo=np.eye(3), omega_z=1.0,
                              body_points=pts)
        mp2 = ss.from_rotation(rot, 13.0, 23.0)
        spec = ss.TransitionSpec(mp1, mp2, t_s=10.0, t_e=13.0)
        # a deliberately crossing assignment (strategic input) to force conflicts
        assignment = ss.assign(spec, permutation=[(d + 5) % 9 for d in range(9)])
        bounds = StateBounds(pos_min=[0, 0, 0], pos_max=[5, 5, 2], vel_max=[3.5] * 3,
                             acc_norm_max=10.0, jerk_max=[80.0] * 3, K=10)
        e = CollisionEllipsoid.compact()
        bcs, cands, probs = [], [], []
        from swarmshow.assignment import boundary_conditions

        for d, role in enumerate(assignment.perm):
            bc = boundary_conditions(spec, d, role)
            prob = ReducedTransitionProblem(bc, 14, spec.t_s, spec.t_e)
            bcs.append(bc)
            probs.append(prob)
            cands.append(generate_candidate(bc, bounds, 14, spec.t_s, spec.t_e,
                                            problem=prob))
        graph = build_graph(cands, e)
        assert len(graph.edges) >= 3  # several colliding candidates
        plan = resolve_all(cands, bcs, bounds, e, problems=probs,
                           assignment=assignment)
        assert plan.feasible
        assert plan.min_fine_separation >= 1.0
        assert plan.min_step_separation >= 2.0 - 1e-6
        for n, m in graph.edges:
            assert n > m
