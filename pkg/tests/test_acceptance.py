"""End-to-end acceptance checks.

Each test prints one PASS/FAIL line (run with ``pytest -s`` to see them on
success).  The collision-safety and continuity criteria run over every
transition planned anywhere in this module, re-verifying the trajectories
from scratch rather than trusting the planner's own bookkeeping.
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import swarmshow as ss
from oracles import brute_force_assignment, min_snap_collocation
from swarmshow.assignment import boundary_conditions
from swarmshow.sweep import SweepConfig, run_sweep
from swarmshow.trajopt import ReducedTransitionProblem

REPO = Path(__file__).resolve().parent.parent
DEMO_SHOW = REPO / "shows" / "demo_9drone.json"


def report(num, name, ok, detail=""):
    print(f"\nACCEPTANCE {num} {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    return ok


def rest(point):
    return np.vstack([point] + [[0, 0, 0]] * 4)


def default_bounds(K=10):
    return ss.StateBounds(pos_min=[0, 0, 0], pos_max=[5, 5, 2], vel_max=[3.5] * 3,
                          acc_norm_max=10.0, jerk_max=[80.0] * 3, K=K)


def plan_instance(spec, permutation=None, bounds=None, ellipsoid=None, weight=None):
    """Assignment + candidates + resolution for one transition instance."""
    bounds = bounds or default_bounds()
    ellipsoid = ellipsoid or ss.CollisionEllipsoid.compact()
    assignment = ss.assign(spec, degree=14, permutation=permutation)
    bcs, cands, probs = [], [], []
    for d, role in enumerate(assignment.perm):
        bc = boundary_conditions(spec, d, role)
        prob = ReducedTransitionProblem(bc, 14, spec.t_s, spec.t_e)
        bcs.append(bc)
        probs.append(prob)
        cands.append(ss.generate_candidate(bc, bounds, 14, spec.t_s, spec.t_e,
                                           problem=prob))
    plan = ss.resolve_all(cands, bcs, bounds, ellipsoid, weight=weight,
                          problems=probs, assignment=assignment)
    return plan, bcs, spec, ellipsoid


def wave_to_rotation_spec():
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
    return ss.TransitionSpec(mp1, mp2, t_s=10.0, t_e=13.0)


def head_on_instance():
    mp1 = ss.from_coefficients(0.0, 10.0, [1.0],
                               [[1.5, 2.5, 1.0], [3.5, 2.5, 1.0]],
                               np.zeros((2, 1, 3)), np.zeros((2, 1, 3)))
    mp2 = ss.from_coefficients(13.0, 23.0, [1.0],
                               [[3.5, 2.5, 1.0], [1.5, 2.5, 1.0]],
                               np.zeros((2, 1, 3)), np.zeros((2, 1, 3)))
    return ss.TransitionSpec(mp1, mp2, t_s=10.0, t_e=13.0)


@pytest.fixture(scope="module")
def planned_instances():
    """Every transition plan exercised by the acceptance suite."""
    instances = []
    # conflict-rich strategic assignment, wave to rotation
    instances.append(plan_instance(wave_to_rotation_spec(),
                                   permutation=[(d + 5) % 9 for d in range(9)]))
    # optimal assignment on the same pair
    instances.append(plan_instance(wave_to_rotation_spec()))
    # two-drone head-on swap (crossing assignment pinned)
    instances.append(plan_instance(head_on_instance(), permutation=[0, 1]))
    # a couple of randomized sweep trials, re-planned with plans kept
    cfg = SweepConfig(trials=2, seed=11, n_drones=25)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.trials)
    for trial in range(cfg.trials):
        rng = np.random.default_rng(seeds[trial])
        from swarmshow.sweep import random_primitive_pair

        mp1, mp2, t_s, t_e = random_primitive_pair(rng, cfg)
        spec = ss.TransitionSpec(mp1, mp2, t_s, t_e)
        instances.append(plan_instance(spec, bounds=cfg.state_bounds(),
                                       ellipsoid=cfg.ellipsoid()))
    return instances


def test_acceptance_1_hungarian_exact():
    rng = np.random.default_rng(2024)
    started = time.perf_counter()
    checked = 0
    exact = True
    for _ in range(200):
        n = int(rng.integers(2, 8))
        costs = rng.uniform(0.0, 10.0, size=(n, n))
        a = ss.hungarian(costs)
        ours = costs[np.arange(n), a.perm].sum()
        _, best = brute_force_assignment(costs)
        exact = exact and (ours == best)
        checked += 1
    elapsed = time.perf_counter() - started
    ok = exact and elapsed < 10.0
    assert report(1, "hungarian exact vs exhaustive search", ok,
                  f"({checked} matrices, {elapsed:.1f}s)")


def test_acceptance_2_min_snap_qp():
    rng = np.random.default_rng(7)
    mags = np.array([1.5, 1.0, 2.0, 4.0, 8.0])
    started = time.perf_counter()
    worst_res, worst_rel = 0.0, 0.0
    for _ in range(50):
        bc = ss.BoundaryConditions(mags[:, None] * rng.normal(size=(5, 3)),
                                   mags[:, None] * rng.normal(size=(5, 3)))
        traj, cost = ss.solve_min_snap(bc, 14, 0.0, 1.0)
        worst_res = max(worst_res, ss.kkt_residual(traj, bc))
        oracle = min_snap_collocation(bc.start_state, bc.end_state, 14, 0.0, 1.0)
        worst_rel = max(worst_rel, abs(cost - oracle) / max(oracle, 1e-12))
    elapsed = time.perf_counter() - started
    ok = worst_res <= 1e-8 and worst_rel < 0.01 and elapsed < 30.0
    assert report(2, "min-snap QP vs collocation oracle", ok,
                  f"(residual {worst_res:.2e}, cost dev {worst_rel:.2e}, {elapsed:.1f}s)")


def test_acceptance_3_boundary_continuity(planned_instances):
    worst = 0.0
    for plan, bcs, spec, _ in planned_instances:
        for bc, traj in zip(bcs, plan.trajectories):
            for p in range(5):
                for t, ref in ((spec.t_s, bc.start_state[p]),
                               (spec.t_e, bc.end_state[p])):
                    err = np.abs(traj.evaluate(t, p) - ref).max()
                    worst = max(worst, err / max(1.0, np.abs(ref).max()))
    ok = worst <= 1e-5
    assert report(3, "boundary continuity of planned transitions", ok,
                  f"(worst relative mismatch {worst:.2e})")


def test_acceptance_4_collision_safety(planned_instances):
    worst_step, worst_fine = np.inf, np.inf
    n_feasible = 0
    for plan, _, spec, ellipsoid in planned_instances:
        if not plan.feasible:
            continue
        n_feasible += 1
        gram = ellipsoid.gram
        k = plan.k_final
        t_steps = spec.t_s + np.arange(1, k + 1) * (spec.t_e - spec.t_s) / k
        t_fine = np.arange(spec.t_s, spec.t_e + 5e-4, 0.001)
        for times, kind in ((t_steps, "step"), (t_fine, "fine")):
            pos = np.array([tr.sample(times) for tr in plan.trajectories])
            for i in range(1, len(pos)):
                d = pos[:i] - pos[i]
                q = np.einsum("mti,ij,mtj->mt", d, gram, d).min()
                if kind == "step":
                    worst_step = min(worst_step, q)
                else:
                    worst_fine = min(worst_fine, q)
    ok = n_feasible > 0 and worst_step >= 2.0 - 1e-6 and worst_fine >= 1.0
    assert report(4, "collision safety of feasible plans", ok,
                  f"({n_feasible} plans, min step sep {worst_step:.3f}, "
                  f"min fine sep {worst_fine:.3f})")


def test_acceptance_5_feasibility_sweep():
    cfg = SweepConfig(n_drones=25, trials=100, seed=0,
                      volume_max=(5.0, 5.0, 2.0),
                      ellipsoid_radii=(0.14, 0.14, 0.35),
                      degree=14, k0=10)
    started = time.perf_counter()
    result = run_sweep(cfg)
    elapsed = time.perf_counter() - started
    frac = result.feasible_fraction
    conflicts = sum(r.initial_edges > 0 for r in result.records)
    ok = frac >= 0.80 and elapsed < 3600.0
    assert report(5, "25-drone random-pair feasibility sweep", ok,
                  f"({frac:.0%} feasible, {conflicts} trials with conflicts, "
                  f"{elapsed:.0f}s)")


def test_acceptance_6_sync_round_trip():
    mp = ss.from_coefficients(
        0.0, 60.0, [1.0, 2.5],
        centers=[[0.5, -0.5, 1.0]],
        a_coeffs=[[[0.4, 0.0, 0.0], [0.0, 0.0, 0.2]]],
        b_coeffs=[[[0.0, 0.3, 0.0], [0.1, 0.0, 0.0]]],
    )
    model = ss.VehicleModel.default()  # second order plus delay
    table = ss.synthetic_bode(model, np.asarray(mp.frequencies), amplitude=0.4)
    comp = ss.compensate(mp, table)
    run_c = ss.run_choreography([ss.PrimitivePhase(comp)], model)
    run_u = ss.run_choreography([ss.PrimitivePhase(mp)], model)

    settled = run_c.times >= run_c.times[0] + run_c.transient_cut
    worst_amp, worst_phase = 0.0, 0.0
    dt = model.sample_period
    for ax in range(3):
        des = ss.fit_phasors(run_c.desired[0][settled, ax], dt, mp.frequencies)
        resp = ss.fit_phasors(run_c.response[0][settled, ax], dt, mp.frequencies)
        for m in range(len(mp.frequencies)):
            if abs(des[m]) < 1e-9:
                continue
            ratio = resp[m] / des[m]
            worst_amp = max(worst_amp, abs(abs(ratio) - 1.0))
            worst_phase = max(worst_phase, abs(np.angle(ratio)))
    rms_ratio = run_c.rms_error.max() / run_u.rms_error.max()
    ok = worst_amp <= 0.01 and worst_phase <= 0.02 and rms_ratio <= 0.2
    assert report(6, "compensation round trip on simulated plant", ok,
                  f"(amp err {worst_amp:.2%}, phase err {worst_phase:.4f} rad, "
                  f"RMS ratio {rms_ratio:.3g})")


def test_acceptance_7_primitive_invariants():
    rng = np.random.default_rng(99)
    cases = 0
    h = 1e-5

    # wave boundary-zero over randomized specs
    for _ in range(250):
        a, b = rng.uniform(2, 6, size=2)
        mu1, mu2 = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        mode = ss.WaveMode(mu1, mu2, rng.normal(size=3) * 0.4, rng.normal(size=3) * 0.4)
        edge_site = [[0.0, rng.uniform(0, b)], [rng.uniform(0.1, a), b]]
        spec = ss.WaveSpec(a=a, b=b, h=1.0, c_speed=rng.uniform(0.5, 2.0),
                           modes=(mode,), sites=np.array(edge_site))
        mp = ss.from_wave(spec, 0.0, 20.0)
        for n in range(2):
            equil = np.append(spec.sites[n], 1.0)
            for t in rng.uniform(0, 20, size=2):
                assert np.abs(mp.evaluate(n, t) - equil).max() < 1e-12
        cases += 1

    # rotation isometry
    for _ in range(250):
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        pts = rng.uniform(-1.5, 1.5, size=(4, 3))
        spec = ss.RotationSpec(rho_o=rng.uniform(-2, 2, size=3), R_IBo=q,
                               omega_z=rng.uniform(0.2, 3.0), body_points=pts)
        mp = ss.from_rotation(spec, 0.0, 30.0)
        t1, t2 = rng.uniform(0, 30, size=2)
        p1 = np.array([mp.evaluate(i, t1) for i in range(4)])
        p2 = np.array([mp.evaluate(i, t2) for i in range(4)])
        for i in range(4):
            for j in range(i):
                d1 = np.linalg.norm(p1[i] - p1[j])
                d2 = np.linalg.norm(p2[i] - p2[j])
                assert abs(d1 - d2) < 1e-9
        cases += 1

    # derivative vs finite difference and periodicity on random coefficients
    for _ in range(500):
        n_modes = int(rng.integers(1, 4))
        base = rng.uniform(0.3, 2.0)
        multiples = rng.integers(1, 5, size=n_modes)
        freqs = np.sort(base * np.unique(multiples))
        m = len(freqs)
        centers = rng.uniform(-2, 2, size=(1, 3))
        a = rng.normal(size=(1, m, 3)) * 0.4
        b = rng.normal(size=(1, m, 3)) * 0.4
        mp = ss.from_coefficients(0.0, 100.0, freqs, centers, a, b)
        t = rng.uniform(1, 40)
        for order in (1, 2, 3, 4):
            fd = (mp.evaluate(0, t + h, order - 1) - mp.evaluate(0, t - h, order - 1)) / (2 * h)
            exact = mp.evaluate(0, t, order)
            scale = max(1.0, np.abs(exact).max())
            assert np.abs(fd - exact).max() / scale < 1e-6
        period = 2 * np.pi / base
        if t + period <= 100.0:
            for order in range(5):
                d = mp.evaluate(0, t, order) - mp.evaluate(0, t + period, order)
                assert np.abs(d).max() < 1e-9
        cases += 1

    ok = cases >= 1000
    assert report(7, "primitive invariant battery", ok, f"({cases} randomized cases)")


def test_acceptance_8_deviation_weighting():
    spec = head_on_instance()
    deviations = {}
    feasible = {}
    for name, w in (("isotropic", None),
                    ("z_cheap", ss.DeviationWeight(np.array([1.0, 1.0, 1e-3])))):
        # pin the crossing assignment; the optimal one would dissolve the swap
        plan, bcs, spec_i, _ = plan_instance(head_on_instance(),
                                             permutation=[0, 1], weight=w)
        feasible[name] = plan.feasible
        k = plan.k_final
        times = spec_i.t_s + np.arange(1, k + 1) * (spec_i.t_e - spec_i.t_s) / k
        dev = 0.0
        for cand, final in zip(plan.candidates, plan.trajectories):
            e = final.sample(times) - cand.sample(times)
            dev += float((e[:, :2] ** 2).sum())
        deviations[name] = dev
    ok = (feasible["isotropic"] and feasible["z_cheap"]
          and deviations["z_cheap"] < deviations["isotropic"])
    assert report(8, "z-cheap deviation weight shrinks x-y deviation", ok,
                  f"(x-y deviation {deviations['z_cheap']:.3g} < "
                  f"{deviations['isotropic']:.3g})")


def test_acceptance_9_determinism(tmp_path):
    def run(cmd_args, out):
        proc = subprocess.run(
            [sys.executable, "-m", "swarmshow.cli", *cmd_args, "--out", str(out)],
            capture_output=True, text=True, cwd=REPO,
        )
        assert proc.returncode == 0, proc.stderr
        return {p.relative_to(out): p.read_bytes()
                for p in sorted(out.rglob("*")) if p.is_file()}

    plan_args = ["plan", "--input", str(DEMO_SHOW), "--seed", "0"]
    sweep_args = ["sweep", "--trials", "4", "--n-drones", "9", "--seed", "3"]
    identical = True
    for args, stem in ((plan_args, "plan"), (sweep_args, "sweep")):
        a = run(args, tmp_path / f"{stem}_a")
        b = run(args, tmp_path / f"{stem}_b")
        identical = identical and (a == b)
    assert report(9, "byte-identical plan and sweep artifacts", identical)
