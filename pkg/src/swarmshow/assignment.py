"""Goal assignment between two motion primitives.

The cost of sending drone alpha of the outgoing primitive to role beta of the
incoming one is the optimal value of the boundary-constrained minimum-snap
problem for that pair, so the assignment directly maximizes the smoothness of
the transition trajectories generated afterwards.  The N x N cost matrix is
fed to a linear-assignment solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linear_sum_assignment

from .primitives import MotionPrimitive
from .trajopt import BoundaryConditions, solve_min_snap

__all__ = [
    "TransitionSpec",
    "Assignment",
    "boundary_conditions",
    "assignment_cost",
    "build_cost_matrix",
    "hungarian",
    "assign",
]


@dataclass(frozen=True)
class TransitionSpec:
    """A transition window between two consecutive primitives."""

    mp1: MotionPrimitive
    mp2: MotionPrimitive
    t_s: float
    t_e: float
    eps1: float = 1e-6
    eps2: float = 1e-6

    def __post_init__(self):
        if abs(self.t_s - self.mp1.tf) > self.eps1:
            raise ValueError(
                f"t_s={self.t_s} is more than eps1={self.eps1} away from the "
                f"outgoing primitive's end {self.mp1.tf}"
            )
        if abs(self.t_e - self.mp2.t0) > self.eps2:
            raise ValueError(
                f"t_e={self.t_e} is more than eps2={self.eps2} away from the "
                f"incoming primitive's start {self.mp2.t0}"
            )
        if not self.t_s < self.t_e:
            raise ValueError("need t_s < t_e")

    @property
    def n_drones(self) -> int:
        return self.mp1.n_drones


@dataclass(frozen=True)
class Assignment:
    """Bijection from outgoing-primitive drone index to incoming role index."""

    perm: tuple[int, ...]
    total_cost: float

    def __post_init__(self):
        if sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError("perm must be a permutation of 0..N-1")
        object.__setattr__(self, "perm", tuple(int(p) for p in self.perm))


def boundary_conditions(
    spec: TransitionSpec, alpha: int, beta: int
) -> BoundaryConditions:
    """Derivatives 0..4 of the two primitives at the transition endpoints."""
    start = spec.mp1.states(alpha, spec.t_s, slack=spec.eps1 + 1e-9)
    end = spec.mp2.states(beta, spec.t_e, slack=spec.eps2 + 1e-9)
    return BoundaryConditions(start_state=start, end_state=end)


def assignment_cost(spec: TransitionSpec, alpha: int, beta: int, degree: int = 14) -> float:
    """Optimal boundary-constrained min-snap cost for the pair (alpha, beta)."""
    if not (0 <= alpha < spec.mp1.n_drones and 0 <= beta < spec.mp2.n_drones):
        raise IndexError("drone/role index out of range")
    bc = boundary_conditions(spec, alpha, beta)
    _, cost = solve_min_snap(bc, degree, spec.t_s, spec.t_e)
    return cost


def build_cost_matrix(
    spec: TransitionSpec, degree: int = 14, mode: str = "snap"
) -> NDArray[np.float64]:
    """N x N matrix of assignment costs.

    ``mode="snap"`` uses the min-snap optimum (the planner default);
    ``mode="distance"`` uses plain start/end Euclidean distance, provided for
    benchmarking against distance-based assignment.
    Identical endpoint-state pairs share cached solves.
    """
    if spec.mp1.n_drones != spec.mp2.n_drones:
        raise ValueError(
            f"primitives have different fleet sizes: "
            f"{spec.mp1.n_drones} vs {spec.mp2.n_drones}"
        )
    n = spec.n_drones
    costs = np.empty((n, n))
    if mode == "distance":
        p1 = np.array([spec.mp1.evaluate(a, spec.t_s, 0, slack=spec.eps1 + 1e-9) for a in range(n)])
        p2 = np.array([spec.mp2.evaluate(b, spec.t_e, 0, slack=spec.eps2 + 1e-9) for b in range(n)])
        for a in range(n):
            costs[a] = np.linalg.norm(p2 - p1[a], axis=1)
        return costs
    if mode != "snap":
        raise ValueError(f"unknown cost mode {mode!r}")
    cache: dict[tuple[bytes, bytes], float] = {}
    starts = [spec.mp1.states(a, spec.t_s, slack=spec.eps1 + 1e-9) for a in range(n)]
    ends = [spec.mp2.states(b, spec.t_e, slack=spec.eps2 + 1e-9) for b in range(n)]
    for a in range(n):
        ka = starts[a].tobytes()
        for b in range(n):
            key = (ka, ends[b].tobytes())
            if key not in cache:
                bc = BoundaryConditions(starts[a], ends[b])
                cache[key] = solve_min_snap(bc, degree, spec.t_s, spec.t_e)[1]
            costs[a, b] = cache[key]
    return costs


def hungarian(costs: NDArray) -> Assignment:
    """Minimum-total-cost perfect matching on a square cost matrix.

    Among equal-cost optima (within a tiny relative tolerance) the
    lexicographically smallest permutation is returned, for reproducibility.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2 or costs.shape[0] != costs.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {costs.shape}")
    if not np.all(np.isfinite(costs)):
        raise ValueError("cost matrix entries must be finite")
    n = costs.shape[0]
    rows, cols = linear_sum_assignment(costs)
    optimal = float(costs[rows, cols].sum())
    tol = 1e-9 * max(1.0, abs(optimal))
    perm = _lexicographic_refine(costs, optimal, tol)
    return Assignment(perm=tuple(perm), total_cost=float(costs[np.arange(n), perm].sum()))


def _lexicographic_refine(costs: NDArray, optimal: float, tol: float) -> list[int]:
    """Greedy row-by-row selection of the smallest column that still admits
    an optimal completion."""
    n = costs.shape[0]
    remaining = list(range(n))
    perm: list[int] = []
    prefix = 0.0
    for row in range(n):
        for beta in remaining:
            rest_cols = [c for c in remaining if c != beta]
            rest = costs[np.ix_(range(row + 1, n), rest_cols)]
            completion = 0.0
            if rest.size:
                rr, cc = linear_sum_assignment(rest)
                completion = float(rest[rr, cc].sum())
            if prefix + costs[row, beta] + completion <= optimal + tol:
                perm.append(beta)
                prefix += costs[row, beta]
                remaining.remove(beta)
                break
        else:  # numerically impossible, but fail loudly rather than silently
            raise RuntimeError("no optimal completion found during tie-breaking")
    return perm


def assign(
    spec: TransitionSpec,
    degree: int = 14,
    permutation=None,
    mode: str = "snap",
) -> Assignment:
    """Optimal assignment, or validation/costing of an externally chosen one.

    A supplied ``permutation`` (e.g. a human-designed strategic assignment) is
    checked for bijectivity and costed without running the matching.
    """
    if permutation is not None:
        perm = tuple(int(p) for p in permutation)
        if sorted(perm) != list(range(spec.n_drones)):
            raise ValueError("external permutation is not a bijection on 0..N-1")
        if mode == "distance":
            total = sum(
                float(np.linalg.norm(
                    spec.mp2.evaluate(b, spec.t_e, 0, slack=spec.eps2 + 1e-9)
                    - spec.mp1.evaluate(a, spec.t_s, 0, slack=spec.eps1 + 1e-9)
                ))
                for a, b in enumerate(perm)
            )
        else:
            total = sum(assignment_cost(spec, a, b, degree) for a, b in enumerate(perm))
        return Assignment(perm=perm, total_cost=total)
    return hungarian(build_cost_matrix(spec, degree, mode))
