"""Randomized feasibility sweeps over primitive-pair transitions.

The pair generator is harness policy, tuned so instances are physically
plausible rather than adversarial: wave primitives sit on a uniform site grid
with random modes and amplitude vectors rescaled to keep peak positions inside
the flight volume and boundary states inside the state limits; rotations use
helices on randomly tilted cones sized to fit the volume.  Generated endpoint
configurations are kept clear of the separation bound (a pinned endpoint
conflict is unfixable by any planner), matching how a choreographer would lay
out consecutive patterns.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assignment import TransitionSpec, assign, boundary_conditions
from .collision import CollisionEllipsoid, TransitionPlan, build_graph, resolve_all
from .primitives import (
    MotionPrimitive,
    RotationSpec,
    WaveMode,
    WaveSpec,
    from_rotation,
    from_wave,
    helix_on_cone,
)
from .trajopt import (
    InfeasibleTransitionError,
    ReducedTransitionProblem,
    StateBounds,
    generate_candidate,
)

__all__ = ["SweepConfig", "TrialRecord", "SweepResult", "random_primitive_pair", "run_sweep"]

ENDPOINT_MARGIN = 2.5  # required squared separation of generated endpoint configs


@dataclass(frozen=True)
class SweepConfig:
    n_drones: int = 25
    volume_min: tuple[float, float, float] = (0.0, 0.0, 0.0)
    volume_max: tuple[float, float, float] = (5.0, 5.0, 2.0)
    ellipsoid_radii: tuple[float, float, float] = (0.14, 0.14, 0.35)
    trials: int = 100
    seed: int = 0
    duration: float = 3.0
    degree: int = 14
    k0: int = 10
    max_iters: int = 10
    vel_max: float = 3.5
    acc_norm_max: float = 10.0
    jerk_max: float = 80.0

    def ellipsoid(self) -> CollisionEllipsoid:
        return CollisionEllipsoid.from_radii(*self.ellipsoid_radii)

    def state_bounds(self) -> StateBounds:
        return StateBounds(
            pos_min=np.array(self.volume_min),
            pos_max=np.array(self.volume_max),
            vel_max=np.full(3, self.vel_max),
            acc_norm_max=self.acc_norm_max,
            jerk_max=np.full(3, self.jerk_max),
            K=self.k0,
        )


def _site_grid(n: int, a: float, b: float) -> np.ndarray:
    """First n cells of a centered uniform grid on [0,a] x [0,b]."""
    side = math.ceil(math.sqrt(n))
    pts = [((i + 0.5) * a / side, (j + 0.5) * b / side)
           for j in range(side) for i in range(side)]
    return np.array(pts[:n])


def _min_pair_separation(positions: np.ndarray, gram: np.ndarray) -> float:
    worst = np.inf
    for i in range(1, len(positions)):
        d = positions[:i] - positions[i]
        worst = min(worst, float(np.einsum("mi,ij,mj->m", d, gram, d).min()))
    return worst


def _amplitude_caps(cfg: SweepConfig, h: float) -> np.ndarray:
    """Per-axis bound on the total oscillation amplitude."""
    vmin, vmax = np.array(cfg.volume_min), np.array(cfg.volume_max)
    side = math.ceil(math.sqrt(cfg.n_drones))
    margin_xy = 0.5 * min((vmax[0] - vmin[0]) / side, (vmax[1] - vmin[1]) / side)
    cap_z = 0.92 * min(h - vmin[2], vmax[2] - h)
    return np.array([0.92 * margin_xy, 0.92 * margin_xy, max(cap_z, 1e-3)])


def _random_wave(rng: np.random.Generator, cfg: SweepConfig, t0: float, tf: float) -> MotionPrimitive:
    vmin, vmax = np.array(cfg.volume_min), np.array(cfg.volume_max)
    a, b = vmax[0] - vmin[0], vmax[1] - vmin[1]
    h = rng.uniform(0.4, 0.6) * (vmax[2] - vmin[2]) + vmin[2]
    sites = _site_grid(cfg.n_drones, a, b)
    n_modes = int(rng.integers(1, 3))
    caps = _amplitude_caps(cfg, h)
    spec = None
    for _ in range(10):
        modes = []
        speed = rng.uniform(0.7, 1.5)
        for _ in range(n_modes):
            mu1, mu2 = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            a_amp = rng.normal(size=3) * rng.uniform(0.1, 0.6)
            b_amp = rng.normal(size=3) * rng.uniform(0.1, 0.6)
            modes.append(WaveMode(mu1, mu2, a_amp, b_amp))
        spec = WaveSpec(a=a, b=b, h=h, c_speed=speed, modes=tuple(modes),
                        sites=sites, origin=np.array([vmin[0], vmin[1], 0.0]))
        spec = _rescale_wave(spec, caps, cfg)
        mp = from_wave(spec, t0, tf)
        gram = cfg.ellipsoid().gram
        if _min_pair_separation(mp.positions(tf, slack=1e-9), gram) >= ENDPOINT_MARGIN and \
           _min_pair_separation(mp.positions(t0, slack=1e-9), gram) >= ENDPOINT_MARGIN:
            return mp
        # shrink and retry deterministically
        modes = [WaveMode(m.mu1, m.mu2, 0.7 * m.a_amp, 0.7 * m.b_amp) for m in spec.modes]
        spec = WaveSpec(a=a, b=b, h=h, c_speed=speed, modes=tuple(modes),
                        sites=sites, origin=spec.origin)
        mp = from_wave(spec, t0, tf)
        if _min_pair_separation(mp.positions(tf, slack=1e-9), gram) >= ENDPOINT_MARGIN and \
           _min_pair_separation(mp.positions(t0, slack=1e-9), gram) >= ENDPOINT_MARGIN:
            return mp
    return from_wave(spec, t0, tf)  # equilibrium-dominated; final fallback


def _rescale_wave(spec: WaveSpec, caps: np.ndarray, cfg: SweepConfig) -> WaveSpec:
    """Scale mode amplitudes so position, velocity, acceleration and jerk
    envelopes stay inside their budgets."""
    freqs = np.array([
        spec.c_speed * math.pi * math.hypot(m.mu1 / spec.a, m.mu2 / spec.b)
        for m in spec.modes
    ])
    env = np.array([np.hypot(m.a_amp, m.b_amp) for m in spec.modes])  # (M, 3)
    scale = 1.0
    pos_total = env.sum(axis=0)
    with np.errstate(divide="ignore"):
        scale = min(scale, float(np.min(caps / np.maximum(pos_total, 1e-12))))
        for budget, power in (
            (0.55 * cfg.vel_max, 1),
            (0.55 * cfg.acc_norm_max / math.sqrt(3.0), 2),
            (0.55 * cfg.jerk_max, 3),
        ):
            total = (env * freqs[:, None] ** power).sum(axis=0)
            scale = min(scale, float(np.min(budget / np.maximum(total, 1e-12))))
    modes = [WaveMode(m.mu1, m.mu2, scale * m.a_amp, scale * m.b_amp) for m in spec.modes]
    return WaveSpec(a=spec.a, b=spec.b, h=spec.h, c_speed=spec.c_speed,
                    modes=tuple(modes), sites=spec.sites, origin=spec.origin)


def _rotation_matrix(tilt: float, azimuth: float) -> np.ndarray:
    ct, st = math.cos(tilt), math.sin(tilt)
    ca, sa = math.cos(azimuth), math.sin(azimuth)
    rz = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[ct, 0.0, st], [0.0, 1.0, 0.0], [-st, 0.0, ct]])
    return rz @ ry


def _random_rotation(rng: np.random.Generator, cfg: SweepConfig, t0: float, tf: float) -> MotionPrimitive:
    vmin, vmax = np.array(cfg.volume_min), np.array(cfg.volume_max)
    center = (vmin + vmax) / 2.0
    gram = cfg.ellipsoid().gram
    mp = None
    for _ in range(20):
        tilt = rng.uniform(0.0, math.radians(30.0))
        azimuth = rng.uniform(0.0, 2 * math.pi)
        base_radius = rng.uniform(1.1, 1.6)
        top_ratio = rng.uniform(0.55, 0.8)
        height = rng.uniform(0.8, 1.3)
        turns = rng.uniform(1.1, 1.6)
        phase = rng.uniform(0.0, 2 * math.pi)
        omega_z = rng.uniform(0.4, 1.2)
        rho = np.array([
            center[0] + rng.uniform(-0.3, 0.3),
            center[1] + rng.uniform(-0.3, 0.3),
            rng.uniform(0.35, 0.5) * (vmax[2] - vmin[2]) + vmin[2],
        ])
        pts = helix_on_cone(cfg.n_drones, [0.0, 0.0, -height / 2.0], base_radius,
                            height, turns, top_radius=top_ratio * base_radius, phase=phase)
        spec = RotationSpec(rho_o=rho, R_IBo=_rotation_matrix(tilt, azimuth),
                            omega_z=omega_z, body_points=pts)
        mp = from_rotation(spec, t0, tf)
        mp = _fit_rotation(mp, spec, cfg, t0, tf)
        if mp is None:
            continue
        # check all phases the show can reach (one period, clamped to the window)
        t_hi = min(t0 + 2 * math.pi / max(float(mp.frequencies[0]), 1e-6), tf)
        sep_ok = all(
            _min_pair_separation(mp.positions(t, slack=1e-9), gram) >= ENDPOINT_MARGIN
            for t in np.linspace(t0, t_hi, 17)
        )
        if sep_ok:
            return mp
    raise RuntimeError("rotation generator failed to produce a separated configuration")


def _fit_rotation(mp, spec: RotationSpec, cfg: SweepConfig, t0, tf):
    """Shrink the body and slow the spin until envelopes fit the budgets."""
    vmin, vmax = np.array(cfg.volume_min), np.array(cfg.volume_max)
    env = mp.amplitude_envelope()  # (N, 3)
    centers = np.array([d.c for d in mp.drones])
    lo, hi = centers - env, centers + env
    margin = 0.04 * (vmax - vmin)
    over_lo = np.max((vmin + margin) - lo, initial=0.0)
    over_hi = np.max(hi - (vmax - margin), initial=0.0)
    if max(over_lo, over_hi) > 0:
        # scale body points toward the body origin
        shrink = 0.85 ** (1 + int(max(over_lo, over_hi) / 0.2))
        pts = spec.body_points * shrink
        spec = RotationSpec(spec.rho_o, spec.R_IBo, spec.omega_z, pts)
        mp = from_rotation(spec, t0, tf)
        env = mp.amplitude_envelope()
        centers = np.array([d.c for d in mp.drones])
        if np.any(centers - env < vmin) or np.any(centers + env > vmax):
            return None
    omega = spec.omega_z
    peak_amp = float(np.hypot(env[:, 0], env[:, 1]).max())
    vel_cap = 0.55 * cfg.vel_max
    acc_cap = 0.55 * cfg.acc_norm_max
    if peak_amp > 1e-9:
        omega = min(omega, vel_cap / peak_amp, math.sqrt(acc_cap / peak_amp))
    if omega != spec.omega_z:
        mp = from_rotation(
            RotationSpec(spec.rho_o, spec.R_IBo, omega, spec.body_points), t0, tf
        )
    return mp


def random_primitive_pair(
    rng: np.random.Generator, cfg: SweepConfig
) -> tuple[MotionPrimitive, MotionPrimitive, float, float]:
    """One random transition instance: outgoing and incoming primitives plus
    the shared transition window."""
    t_s = 8.0
    t_e = t_s + cfg.duration
    makers = (_random_wave, _random_rotation)
    mp1 = makers[int(rng.integers(2))](rng, cfg, 0.0, t_s)
    mp2 = makers[int(rng.integers(2))](rng, cfg, t_e, t_e + 8.0)
    return mp1, mp2, t_s, t_e


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    feasible: bool
    initial_edges: int
    sweeps: int
    k_final: int
    min_step_separation: float
    min_fine_separation: float
    assignment_cost: float
    elapsed_s: float
    detail: str = ""


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    records: tuple[TrialRecord, ...]
    plans: tuple[TransitionPlan | None, ...] = field(repr=False, default=())

    @property
    def feasible_fraction(self) -> float:
        return sum(r.feasible for r in self.records) / max(len(self.records), 1)

    def timing_percentiles(self) -> dict:
        times = np.array([r.elapsed_s for r in self.records])
        return {
            "p50_s": float(np.percentile(times, 50)),
            "p90_s": float(np.percentile(times, 90)),
            "max_s": float(times.max()),
        }


def run_trial(cfg: SweepConfig, trial: int, rng: np.random.Generator,
              keep_plan: bool = False) -> tuple[TrialRecord, TransitionPlan | None]:
    started = time.perf_counter()
    mp1, mp2, t_s, t_e = random_primitive_pair(rng, cfg)
    spec = TransitionSpec(mp1, mp2, t_s, t_e)
    assignment = assign(spec, degree=cfg.degree)
    bounds = cfg.state_bounds()
    ellipsoid = cfg.ellipsoid()
    bcs, cands, probs = [], [], []
    try:
        for d in range(cfg.n_drones):
            bc = boundary_conditions(spec, d, assignment.perm[d])
            prob = ReducedTransitionProblem(bc, cfg.degree, t_s, t_e)
            bcs.append(bc)
            probs.append(prob)
            cands.append(generate_candidate(bc, bounds, cfg.degree, t_s, t_e, problem=prob))
    except InfeasibleTransitionError as exc:
        record = TrialRecord(
            trial=trial, feasible=False, initial_edges=-1, sweeps=0, k_final=cfg.k0,
            min_step_separation=float("nan"), min_fine_separation=float("nan"),
            assignment_cost=assignment.total_cost,
            elapsed_s=time.perf_counter() - started, detail=f"candidate: {exc}",
        )
        return record, None
    graph = build_graph(cands, ellipsoid)
    plan = resolve_all(
        cands, bcs, bounds, ellipsoid,
        k0=cfg.k0, max_iters=cfg.max_iters,
        problems=probs, assignment=assignment, seed=cfg.seed * 1_000_003 + trial,
    )
    record = TrialRecord(
        trial=trial,
        feasible=plan.feasible,
        initial_edges=len(graph.edges),
        sweeps=plan.sweeps,
        k_final=plan.k_final,
        min_step_separation=plan.min_step_separation,
        min_fine_separation=plan.min_fine_separation,
        assignment_cost=assignment.total_cost,
        elapsed_s=time.perf_counter() - started,
    )
    return record, (plan if keep_plan else None)


def run_sweep(cfg: SweepConfig, progress=None) -> SweepResult:
    """Plan ``cfg.trials`` random primitive pairs and collect statistics."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.trials)
    records = []
    for trial in range(cfg.trials):
        record, _ = run_trial(cfg, trial, np.random.default_rng(seeds[trial]))
        records.append(record)
        if progress is not None:
            progress(record)
    return SweepResult(config=cfg, records=tuple(records))
