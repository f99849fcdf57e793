"""Collision graph over candidate transitions and sequential repair.

Conflicts are measured in an ellipsoid-scaled metric: two drones at positions
p and q are in conflict when ||E^-1 (p - q)||^2 drops below 2.  Squared norm 1
is physical contact; the planning bound of 2 at the discrete constraint times
leaves a buffer for the excursions between them.

Resolution walks the drones in decreasing order of outbound conflict edges and
re-optimizes one trajectory at a time: minimize the weighted deviation from
that drone's candidate subject to its boundary equalities, state bounds and
separation from every other drone's latest committed trajectory at the K
constraint times.  If a re-optimized trajectory is step-feasible but still
crosses another drone between steps, the number of constraint times is doubled
for the next sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize

from .assignment import Assignment
from .trajopt import (
    FEASIBILITY_TOL,
    BoundaryConditions,
    PolynomialTrajectory,
    ReducedTransitionProblem,
    StateBounds,
    _AccNormConstraint,
    _linear_bound_constraints,
    _restore,
)

__all__ = [
    "CollisionEllipsoid",
    "CollisionGraph",
    "DeviationWeight",
    "TransitionPlan",
    "ResolveOutcome",
    "pair_separation",
    "build_graph",
    "resolve_one",
    "resolve_all",
]

CONFLICT_BOUND = 2.0  # planning bound on the squared ellipsoid separation
CONTACT_BOUND = 1.0  # physical-overlap threshold
SEPARATION_TOL = 1e-6


@dataclass(frozen=True)
class CollisionEllipsoid:
    """Axis scaling of the inter-drone separation metric."""

    E: NDArray[np.float64]

    def __post_init__(self):
        E = np.asarray(self.E, dtype=float)
        if E.ndim == 1:
            E = np.diag(E)
        if E.shape != (3, 3):
            raise ValueError("E must be a 3x3 matrix or a 3-vector of radii")
        diag_only = np.allclose(E, np.diag(np.diag(E)))
        if diag_only and np.any(np.diag(E) <= 0):
            raise ValueError("diagonal ellipsoid entries must be positive")
        if abs(np.linalg.det(E)) < 1e-12:
            raise ValueError("E must be invertible")
        E.setflags(write=False)
        object.__setattr__(self, "E", E)

    @classmethod
    def from_radii(cls, rx: float, ry: float, rz: float) -> "CollisionEllipsoid":
        return cls(np.diag([rx, ry, rz]))

    @classmethod
    def compact(cls) -> "CollisionEllipsoid":
        """Tight spacing for moderate motions (0.14 m in x-y, 0.35 m in z)."""
        return cls.from_radii(0.14, 0.14, 0.35)

    @classmethod
    def aggressive(cls) -> "CollisionEllipsoid":
        """Wide margins for fast primitives (0.28 m in x-y, 0.85 m in z)."""
        return cls.from_radii(0.28, 0.28, 0.85)

    @property
    def gram(self) -> NDArray[np.float64]:
        """E^-T E^-1; separation is d.T @ gram @ d."""
        inv = np.linalg.inv(self.E)
        return inv.T @ inv


@dataclass(frozen=True)
class DeviationWeight:
    """Positive diagonal weights trading off per-axis deviation."""

    diag: NDArray[np.float64]

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float).reshape(3)
        if np.any(d <= 0):
            raise ValueError("deviation weights must be positive")
        d.setflags(write=False)
        object.__setattr__(self, "diag", d)

    @classmethod
    def identity(cls) -> "DeviationWeight":
        return cls(np.ones(3))


@dataclass(frozen=True)
class CollisionGraph:
    """Directed conflict edges; (n, m) with n > m means n must avoid m."""

    n_vertices: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        for n, m in self.edges:
            if not (0 <= m < n < self.n_vertices):
                raise ValueError(f"edge ({n}, {m}) must point from higher to lower index")

    def out_degree(self, n: int) -> int:
        return sum(1 for a, _ in self.edges if a == n)

    def outbound(self, n: int) -> list[int]:
        return sorted(m for a, m in self.edges if a == n)


def pair_separation(
    traj_a: PolynomialTrajectory,
    traj_b: PolynomialTrajectory,
    t: float,
    ellipsoid: CollisionEllipsoid,
) -> float:
    """Squared ellipsoid-scaled distance between the two drones at time t."""
    d = traj_a.evaluate(t) - traj_b.evaluate(t)
    return float(d @ ellipsoid.gram @ d)


def _pairwise_min_against(
    positions: NDArray, pos_n: NDArray, gram: NDArray
) -> NDArray[np.float64]:
    """Min over time of squared separation of one drone against many.

    positions: (M, T, 3), pos_n: (T, 3); returns (M,)."""
    d = positions - pos_n[None, :, :]
    q = np.einsum("mti,ij,mtj->mt", d, gram, d)
    return q.min(axis=1)


def build_graph(
    candidates: list[PolynomialTrajectory],
    ellipsoid: CollisionEllipsoid,
    sample_dt: float = 0.01,
) -> CollisionGraph:
    """Conflict edges between candidates: sampled squared separation below 2."""
    if not candidates:
        return CollisionGraph(0, frozenset())
    t_s, t_e = candidates[0].t_start, candidates[0].t_end
    for c in candidates:
        if abs(c.t_start - t_s) > 1e-9 or abs(c.t_end - t_e) > 1e-9:
            raise ValueError("all candidates must share the transition window")
    times = np.arange(t_s, t_e + sample_dt / 2, sample_dt)
    pos = np.array([c.sample(times) for c in candidates])
    gram = ellipsoid.gram
    edges = set()
    for n in range(1, len(candidates)):
        mins = _pairwise_min_against(pos[:n], pos[n], gram)
        for m in np.nonzero(mins < CONFLICT_BOUND)[0]:
            edges.add((n, int(m)))
    return CollisionGraph(len(candidates), frozenset(edges))


@dataclass(frozen=True)
class ResolveOutcome:
    """Result of one drone's re-optimization; trajectory None means skip."""

    trajectory: PolynomialTrajectory | None
    status: str
    detail: str = ""


class _SeparationConstraint:
    """Active separation constraints sep(y) - 2 >= 0 for pairs (other, step)."""

    def __init__(self, V0, off0, other_pos, gram, nz):
        self.V0 = V0
        self.off0 = off0
        self.other_pos = other_pos  # (n_other, K, 3)
        self.gram = gram
        self.nz = nz
        self.rows: list[tuple[int, int]] = []

    def activate(self, rows) -> None:
        self.rows = list(rows)

    def _positions(self, y):
        y = y.reshape(3, self.nz)
        return self.off0 + self.V0 @ y.T

    def all_separations(self, y) -> NDArray[np.float64]:
        d = self._positions(y)[None, :, :] - self.other_pos
        return np.einsum("mki,ij,mkj->mk", d, self.gram, d)

    def fun(self, y):
        pos = self._positions(y)
        d = np.array([pos[k] - self.other_pos[m, k] for m, k in self.rows])
        return np.einsum("ri,ij,rj->r", d, self.gram, d) - CONFLICT_BOUND

    def jac(self, y):
        pos = self._positions(y)
        J = np.zeros((len(self.rows), 3 * self.nz))
        for r, (m, k) in enumerate(self.rows):
            g = 2.0 * self.gram @ (pos[k] - self.other_pos[m, k])
            for ax in range(3):
                J[r, ax * self.nz:(ax + 1) * self.nz] = g[ax] * self.V0[k]
        return J


def resolve_one(
    n: int,
    candidates: list[PolynomialTrajectory],
    committed: list[PolynomialTrajectory],
    bc_n: BoundaryConditions,
    bounds: StateBounds,
    ellipsoid: CollisionEllipsoid,
    weight: DeviationWeight,
    *,
    problem: ReducedTransitionProblem | None = None,
    rng: np.random.Generator | None = None,
    prune_threshold: float = 32.0,
) -> ResolveOutcome:
    """Re-optimize drone n against the latest committed trajectories.

    Minimizes the weighted squared deviation from its candidate at the K
    constraint times, subject to state bounds and separation >= 2 from every
    other drone.  Separation constraints enter lazily: only pairs closer than
    ``prune_threshold`` at the warm start are active at first, and any
    constraint found violated after a solve is added and the solve repeated.
    Non-convergence yields a skip outcome (one perturbed restart is tried).
    """
    cand = candidates[n]
    prob = problem if problem is not None else ReducedTransitionProblem(
        bc_n, cand.degree, cand.t_start, cand.t_end
    )
    times = prob.constraint_times(bounds.K)
    G, h, _ = _linear_bound_constraints(prob, bounds, times)
    acc = _AccNormConstraint(prob, bounds.acc_norm_max, times)
    V0, off0 = prob.state_maps(0, times)
    nz = prob.nz

    cand_pos = cand.sample(times)
    d0 = off0 - cand_pos
    M_base = V0.T @ V0
    g_axes = V0.T @ d0  # (nz, 3)
    w = weight.diag

    def objective(y):
        y3 = y.reshape(3, nz)
        dev = d0 + V0 @ y3.T
        return float(np.sum(w * dev**2))

    def objective_grad(y):
        y3 = y.reshape(3, nz)
        return (2.0 * w * (M_base @ y3.T + g_axes)).T.reshape(-1)

    others = [m for m in range(len(committed)) if m != n]
    other_pos = np.array([committed[m].sample(times) for m in others])
    sep = _SeparationConstraint(V0, off0, other_pos, ellipsoid.gram, nz)

    def project(traj):
        return ((traj.coeffs - prob.c0) @ prob.Z).reshape(-1)

    def solve_from(y_start):
        seps0 = sep.all_separations(y_start)
        active = {
            (int(m), int(k)) for m, k in zip(*np.nonzero(seps0 < prune_threshold))
        }
        y = y_start
        for _ in range(4):
            sep.activate(sorted(active))
            groups = [(lambda y: G @ y + h, lambda y: G), (acc.fun, acc.jac)]
            if sep.rows:
                groups.append((sep.fun, sep.jac))
            y = _restore(y, groups)
            cons = [{"type": "ineq", "fun": f, "jac": j} for f, j in groups]
            res = minimize(objective, y, jac=objective_grad, method="SLSQP",
                           constraints=cons, options={"maxiter": 400, "ftol": 1e-10})
            y = res.x
            seps = sep.all_separations(y)
            violated = {
                (int(m), int(k))
                for m, k in zip(*np.nonzero(seps < CONFLICT_BOUND - SEPARATION_TOL))
            } - active
            bound_ok = (G @ y + h).min() >= -FEASIBILITY_TOL and acc.fun(y).min() >= -FEASIBILITY_TOL
            if not violated:
                if bound_ok and seps.min() >= CONFLICT_BOUND - SEPARATION_TOL:
                    return y, True, ""
                return y, False, f"residual violation (bounds ok: {bound_ok})"
            active |= violated
        return y, False, "constraint generation did not close"

    if rng is None:
        rng = np.random.default_rng(n)
    y_warm = project(committed[n])
    # The avoidance problem is nonconvex; which side a drone dodges to is
    # decided early in the solve, before the deviation weights can speak.
    # Explore a second start nudged preferentially along the cheap axes and
    # keep the feasible solution with the lower weighted deviation.
    nudge_scale = np.repeat(np.minimum(0.3 / np.sqrt(w), 2.0), nz)
    starts = [y_warm, y_warm + nudge_scale * rng.standard_normal(y_warm.size)]
    best, best_obj, detail = None, np.inf, ""
    for y0 in starts:
        y, ok, why = solve_from(y0)
        if ok and objective(y) < best_obj:
            best, best_obj = y, objective(y)
        elif not ok:
            detail = why
    if best is None:
        y_retry = y_warm + 0.05 * rng.standard_normal(y_warm.size)
        y, ok, why = solve_from(y_retry)
        if ok:
            best = y
        else:
            return ResolveOutcome(None, "skip", why or detail)
    return ResolveOutcome(prob.trajectory(best), "resolved")


@dataclass(frozen=True)
class TransitionPlan:
    """Outcome of sequential collision resolution for one transition."""

    assignment: Assignment | None
    candidates: tuple[PolynomialTrajectory, ...]
    trajectories: tuple[PolynomialTrajectory, ...]
    feasible: bool
    k_final: int
    sweeps: int
    min_step_separation: float
    min_fine_separation: float
    residual_conflicts: tuple[tuple[int, int], ...]
    log: tuple[str, ...] = field(default=())


class _SeparationTracker:
    """Pairwise separation minima over several time grids, updated per commit."""

    def __init__(self, trajs, gram, grids: dict[str, NDArray]):
        self.gram = gram
        self.grids = dict(grids)
        self.n = len(trajs)
        self.pos = {g: np.array([t.sample(ts) for t in trajs]) for g, ts in self.grids.items()}
        self.mins = {g: np.full((self.n, self.n), np.inf) for g in self.grids}
        for g in self.grids:
            for i in range(1, self.n):
                m = _pairwise_min_against(self.pos[g][:i], self.pos[g][i], self.gram)
                self.mins[g][i, :i] = m
                self.mins[g][:i, i] = m

    def update(self, i, traj):
        for g, ts in self.grids.items():
            self.pos[g][i] = traj.sample(ts)
            others = [j for j in range(self.n) if j != i]
            m = _pairwise_min_against(self.pos[g][others], self.pos[g][i], self.gram)
            self.mins[g][i, others] = m
            self.mins[g][others, i] = m

    def set_grid(self, name, times, trajs):
        self.grids[name] = times
        self.pos[name] = np.array([t.sample(times) for t in trajs])
        for i in range(1, self.n):
            m = _pairwise_min_against(self.pos[name][:i], self.pos[name][i], self.gram)
            self.mins[name][i, :i] = m
            self.mins[name][:i, i] = m

    def pair_min(self, g, i, j):
        return self.mins[g][i, j]

    def worst(self, g) -> float:
        if self.n < 2:
            return np.inf
        iu = np.triu_indices(self.n, k=1)
        return float(self.mins[g][iu].min())


def _endpoint_conflicts(trajs, gram, t_s: float, t_e: float) -> set[tuple[int, int]]:
    edges = set()
    for t, bound in ((t_e, CONFLICT_BOUND - SEPARATION_TOL), (t_s, CONTACT_BOUND)):
        pos = np.array([tr.sample([t])[0] for tr in trajs])
        for n in range(1, len(trajs)):
            d = pos[:n] - pos[n]
            q = np.einsum("mi,ij,mj->m", d, gram, d)
            for m in np.nonzero(q < bound)[0]:
                edges.add((n, int(m)))
    return edges


def _conflict_edges(tracker: _SeparationTracker, modified: set[int]) -> set[tuple[int, int]]:
    edges = set()
    for n in range(1, tracker.n):
        for m in range(n):
            if tracker.pair_min("step", n, m) < CONFLICT_BOUND - SEPARATION_TOL:
                edges.add((n, m))
            elif tracker.pair_min("fine", n, m) < CONTACT_BOUND:
                edges.add((n, m))
            elif (
                n not in modified
                and m not in modified
                and tracker.pair_min("coarse", n, m) < CONFLICT_BOUND
            ):
                edges.add((n, m))
    return edges


def resolve_all(
    candidates: list[PolynomialTrajectory],
    bcs: list[BoundaryConditions],
    bounds: StateBounds,
    ellipsoid: CollisionEllipsoid,
    weight: DeviationWeight | None = None,
    k0: int = 10,
    max_iters: int = 10,
    sample_dt: float = 0.01,
    fine_dt: float = 0.001,
    *,
    problems: list[ReducedTransitionProblem] | None = None,
    assignment: Assignment | None = None,
    seed: int = 0,
) -> TransitionPlan:
    """Iteratively remove all conflicts from a set of candidate transitions.

    Each sweep handles drones in decreasing order of outbound conflict edges,
    committing re-optimized trajectories as it goes and rebuilding the
    conflict set after every commit.  A step-feasible solution that still
    collides between constraint times triggers a doubling of K for the next
    sweep.  The returned plan is feasible iff no conflicts remain: separation
    >= 2 at every constraint time and no fine-sampled physical contact.
    """
    n_drones = len(candidates)
    weight = weight or DeviationWeight.identity()
    rng = np.random.default_rng(seed)
    log: list[str] = []

    t_s, t_e = candidates[0].t_start, candidates[0].t_end
    duration = t_e - t_s
    K = k0
    committed = list(candidates)
    modified: set[int] = set()

    def step_times(k):
        return t_s + np.arange(1, k + 1) * duration / k

    grids = {
        "step": step_times(K),
        "coarse": np.arange(t_s, t_e + sample_dt / 2, sample_dt),
        "fine": np.arange(t_s, t_e + fine_dt / 2, fine_dt),
    }
    tracker = _SeparationTracker(committed, ellipsoid.gram, grids)
    edges = _conflict_edges(tracker, modified)
    log.append(f"init N={n_drones} K={K} edges={len(edges)}")

    # Endpoint configurations are pinned by the boundary conditions: a pair
    # closer than the bound at t_e (a constraint time) or in contact at t_s
    # can never be separated by re-optimizing trajectories.
    structural = _endpoint_conflicts(committed, ellipsoid.gram, t_s, t_e)
    if structural:
        log.append(
            "endpoint_conflicts "
            + " ".join(f"({n},{m})" for n, m in sorted(structural))
        )
        log.append("final feasible=0 sweeps=0 structural=1")
        return TransitionPlan(
            assignment=assignment,
            candidates=tuple(candidates),
            trajectories=tuple(committed),
            feasible=False,
            k_final=K,
            sweeps=0,
            min_step_separation=tracker.worst("step"),
            min_fine_separation=tracker.worst("fine"),
            residual_conflicts=tuple(sorted(structural | edges)),
            log=tuple(log),
        )

    sweeps = 0
    for sweep in range(1, max_iters + 1):
        if not edges:
            break
        sweeps = sweep
        log.append(f"sweep={sweep} K={K} edges={len(edges)}")
        out_deg = {n: sum(1 for a, _ in edges if a == n) for n in range(n_drones)}
        order = sorted((n for n in range(n_drones) if out_deg[n] > 0),
                       key=lambda n: (-out_deg[n], n))
        interstep = False
        for n in order:
            if not any(a == n for a, _ in edges):
                continue  # edges removed by an earlier commit this sweep
            outcome = resolve_one(
                n, candidates, committed, bcs[n], bounds.with_steps(K),
                ellipsoid, weight,
                problem=problems[n] if problems else None, rng=rng,
            )
            if outcome.trajectory is None:
                log.append(f"resolve sweep={sweep} drone={n} status=skip detail={outcome.detail!r}")
                continue
            old = committed[n]
            committed[n] = outcome.trajectory
            tracker.update(n, outcome.trajectory)
            fine_ok = all(
                tracker.pair_min("fine", n, m) >= CONTACT_BOUND
                for m in range(n_drones) if m != n
            )
            if not fine_ok:
                committed[n] = old
                tracker.update(n, old)
                interstep = True
                log.append(f"resolve sweep={sweep} drone={n} status=interstep_collision")
                continue
            modified.add(n)
            edges = _conflict_edges(tracker, modified)
            log.append(f"resolve sweep={sweep} drone={n} status=committed edges_left={len(edges)}")
        edges = _conflict_edges(tracker, modified)
        log.append(f"sweep_end={sweep} edges={len(edges)} interstep={int(interstep)}")
        if edges and interstep:
            K *= 2
            tracker.set_grid("step", step_times(K), committed)
            log.append(f"double_K K={K}")

    feasible = not edges
    log.append(
        f"final feasible={int(feasible)} sweeps={sweeps} K={K} "
        f"min_step={tracker.worst('step'):.6g} min_fine={tracker.worst('fine'):.6g}"
    )
    return TransitionPlan(
        assignment=assignment,
        candidates=tuple(candidates),
        trajectories=tuple(committed),
        feasible=feasible,
        k_final=K,
        sweeps=sweeps,
        min_step_separation=tracker.worst("step"),
        min_fine_separation=tracker.worst("fine"),
        residual_conflicts=tuple(sorted(edges)),
        log=tuple(log),
    )
