"""Polynomial transition trajectories: snap cost, KKT solve, bounded candidates.

Transitions are one degree-P polynomial per axis over [t_start, t_end].  To
keep a degree-14 snap Hessian numerically sane, everything internal works in
normalized time u = (t - t_start) / (t_end - t_start); coefficients are stored
in that basis and costs are reported in physical units (a duration T scales
the minimal snap cost by T**-7).

The boundary equalities (position through snap at both ends) are eliminated
once by a null-space factorization, so every trajectory this module produces
satisfies them to machine precision; inequality-constrained solves run in the
reduced variable space with SLSQP, warm-started from the equality-only
optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Legendre, Polynomial
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as npoly
from numpy.typing import NDArray
from scipy.linalg import null_space
from scipy.optimize import minimize

__all__ = [
    "PolynomialTrajectory",
    "BoundaryConditions",
    "StateBounds",
    "InfeasibleTransitionError",
    "NumericalError",
    "snap_hessian",
    "solve_min_snap",
    "generate_candidate",
    "eval_poly",
    "snap_cost",
    "kkt_residual",
    "ReducedTransitionProblem",
]

FEASIBILITY_TOL = 1e-6


class NumericalError(RuntimeError):
    """Raised when a linear solve breaks down unexpectedly."""


class InfeasibleTransitionError(RuntimeError):
    """No trajectory satisfies the requested state bounds.

    Carries the most-violated constraint for diagnostics.
    """

    def __init__(self, constraint: str, violation: float):
        super().__init__(
            f"transition infeasible: constraint '{constraint}' violated by {violation:.3g}"
        )
        self.constraint = constraint
        self.violation = violation


@dataclass(frozen=True)
class PolynomialTrajectory:
    """Degree-P polynomial per axis over [t_start, t_end].

    ``coeffs`` has shape (3, P+1) in the normalized-time basis:
    x_axis(t) = sum_p coeffs[axis, p] * u**p with u = (t - t_start) / duration.
    """

    t_start: float
    t_end: float
    degree: int
    coeffs: NDArray[np.float64]

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("need t_start < t_end")
        if self.degree < 9:
            raise ValueError("degree must be >= 9 (ten boundary constraints per axis)")
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (3, self.degree + 1):
            raise ValueError(f"coeffs must have shape (3, {self.degree + 1})")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def evaluate(self, t: float, order: int = 0) -> NDArray[np.float64]:
        return eval_poly(self, t, order)

    def sample(self, times, order: int = 0) -> NDArray[np.float64]:
        """Evaluate at many times at once; returns (len(times), 3)."""
        times = np.asarray(times, dtype=float)
        u = (times - self.t_start) / self.duration
        out = np.empty((times.size, 3))
        for ax in range(3):
            c = self.coeffs[ax] if order == 0 else npoly.polyder(self.coeffs[ax], m=order)
            out[:, ax] = npoly.polyval(u, c)
        return out / self.duration**order


def eval_poly(traj: PolynomialTrajectory, t: float, order: int = 0) -> NDArray[np.float64]:
    """Value (order 0) or time derivative (order 1..4) at a single time."""
    if not 0 <= order <= 4:
        raise ValueError(f"derivative order must be 0..4, got {order}")
    if not (traj.t_start - 1e-9 <= t <= traj.t_end + 1e-9):
        raise ValueError(f"time {t} outside trajectory window [{traj.t_start}, {traj.t_end}]")
    return traj.sample([t], order)[0]


@dataclass(frozen=True)
class BoundaryConditions:
    """States (position..snap, rows 0..4) at the transition start and end."""

    start_state: NDArray[np.float64]
    end_state: NDArray[np.float64]

    def __post_init__(self):
        for name in ("start_state", "end_state"):
            s = np.asarray(getattr(self, name), dtype=float)
            if s.shape != (5, 3):
                raise ValueError(f"{name} must have shape (5, 3)")
            if not np.all(np.isfinite(s)):
                raise ValueError(f"{name} must be finite")
            s.setflags(write=False)
            object.__setattr__(self, name, s)


@dataclass(frozen=True)
class StateBounds:
    """Box/norm limits enforced at K equispaced times inside the transition."""

    pos_min: NDArray[np.float64]
    pos_max: NDArray[np.float64]
    vel_max: NDArray[np.float64]
    acc_norm_max: float
    jerk_max: NDArray[np.float64]
    K: int = 10

    def __post_init__(self):
        for name in ("pos_min", "pos_max", "vel_max", "jerk_max"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(3)
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if np.any(self.pos_min >= self.pos_max):
            raise ValueError("pos_min must be componentwise below pos_max")
        if np.any(self.vel_max <= 0) or np.any(self.jerk_max <= 0) or self.acc_norm_max <= 0:
            raise ValueError("velocity/acceleration/jerk limits must be positive")
        if self.K < 2:
            raise ValueError("need K >= 2 constraint time steps")

    def with_steps(self, K: int) -> "StateBounds":
        return StateBounds(self.pos_min, self.pos_max, self.vel_max,
                           self.acc_norm_max, self.jerk_max, K)


def _falling(j: int, q: int) -> float:
    return float(math.perm(j, q))


def _deriv_basis(degree: int, order: int, u) -> NDArray[np.float64]:
    """Rows of d^order/du^order [1, u, ..., u^P] at the given u values."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    B = np.zeros((u.size, degree + 1))
    for j in range(order, degree + 1):
        B[:, j] = _falling(j, order) * u ** (j - order)
    return B


def _axis_snap_hessian(degree: int, t_s: float, t_e: float) -> NDArray[np.float64]:
    n = degree + 1
    H = np.zeros((n, n))
    for i in range(4, n):
        for j in range(4, n):
            p = i + j - 7
            H[i, j] = _falling(i, 4) * _falling(j, 4) * (t_e**p - t_s**p) / p
    return H


def snap_hessian(degree: int, t_s: float, t_e: float) -> NDArray[np.float64]:
    """Hessian of the snap integral over [t_s, t_e], block diagonal per axis.

    The quadratic form c.T @ H @ c equals the integral of the squared fourth
    derivative for monomial coefficients c in physical time.
    """
    if degree < 4:
        raise ValueError("degree must be >= 4 for a nonzero snap cost")
    Hax = _axis_snap_hessian(degree, t_s, t_e)
    n = degree + 1
    H = np.zeros((3 * n, 3 * n))
    for ax in range(3):
        H[ax * n:(ax + 1) * n, ax * n:(ax + 1) * n] = Hax
    return H


def _constraint_matrix(degree: int) -> NDArray[np.float64]:
    """Boundary equality rows: derivatives 0..4 at u=0, then at u=1."""
    rows = [_deriv_basis(degree, p, [0.0])[0] for p in range(5)]
    rows += [_deriv_basis(degree, p, [1.0])[0] for p in range(5)]
    return np.array(rows)


@lru_cache(maxsize=8)
def _unit_system(degree: int):
    """Nondimensional monomial-basis constraint rows and snap Hessian.

    This is the system the KKT residual check is evaluated on; the solve
    itself runs in the better-conditioned basis of :func:`_stable_system`."""
    return _constraint_matrix(degree), _axis_snap_hessian(degree, 0.0, 1.0)


@lru_cache(maxsize=8)
def _stable_system(degree: int):
    """Shifted-Legendre formulation of the same QP.

    The monomial KKT system has condition numbers around 1e14 at degree 14,
    which wrecks the last seven digits of the solution; in the orthogonal
    basis the reduced Hessian is conditioned like 1e3, and the result is
    converted to monomial coefficients only at the end.
    """
    n = degree + 1

    def deriv_rows(order, u_pts):
        rows = np.zeros((len(u_pts), n))
        for j in range(n):
            cj = np.zeros(j + 1)
            cj[j] = 1.0
            dj = npleg.legder(cj, order, scl=2.0) if order else cj
            rows[:, j] = npleg.legval(2.0 * np.asarray(u_pts) - 1.0, dj)
        return rows

    A = np.vstack([deriv_rows(p, [0.0]) for p in range(5)]
                  + [deriv_rows(p, [1.0]) for p in range(5)])
    Z = null_space(A)
    # Gauss-Legendre nodes make the snap Gram matrix exact for this degree.
    nodes, weights = npleg.leggauss(degree)
    u = (nodes + 1.0) / 2.0
    w = weights / 2.0
    B4 = deriv_rows(4, u)
    ZMZ = Z.T @ (B4.T @ (w[:, None] * B4)) @ Z
    to_monomial = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        col = Legendre(e, domain=[0.0, 1.0]).convert(kind=Polynomial).coef
        to_monomial[: col.size, j] = col
    return A, Z, ZMZ, B4, w, to_monomial


def _solve_axis_stable(degree: int, b: NDArray) -> tuple[NDArray, float]:
    """Minimize the unit-interval snap integral subject to the boundary rows.

    Returns monomial-basis coefficients and the (nonnegative) integral value,
    computed as a weighted sum of squared snap samples so no cancellation
    enters the cost."""
    A, Z, ZMZ, B4, w, to_monomial = _stable_system(degree)
    c = np.linalg.lstsq(A, b, rcond=None)[0]
    c += np.linalg.lstsq(A, b - A @ c, rcond=None)[0]
    g = Z.T @ (B4.T @ (w * (B4 @ c)))
    try:
        y = np.linalg.solve(ZMZ, -g)
        y += np.linalg.solve(ZMZ, -(g + ZMZ @ y))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular reduced snap system: {exc}") from exc
    c = c + Z @ y
    snap = B4 @ c
    return to_monomial @ c, float(np.sum(w * snap**2))


def _scaled_rhs(bc: BoundaryConditions, T: float) -> NDArray[np.float64]:
    """Per-axis boundary values in normalized time, shape (10, 3)."""
    scale = T ** np.arange(5)
    return np.vstack([bc.start_state * scale[:, None], bc.end_state * scale[:, None]])


def solve_min_snap(
    bc: BoundaryConditions, degree: int, t_s: float, t_e: float
) -> tuple[PolynomialTrajectory, float]:
    """Exact minimizer of the snap integral under the 30 boundary equalities.

    Returns the trajectory and the optimal cost 0.5 * integral of squared
    snap, in physical units.  The solve is carried out in a frame centered at
    the start position, which makes the cost exactly translation invariant
    and keeps the boundary residual proportional to the displacement rather
    than to the absolute world position.
    """
    if degree < 9:
        raise ValueError("degree must be >= 9")
    if not t_s < t_e:
        raise ValueError("need t_s < t_e")
    n = degree + 1
    T = t_e - t_s
    origin = bc.start_state[0]
    rhs_axes = _scaled_rhs(bc, T)
    rhs_axes[0] -= origin
    rhs_axes[5] -= origin
    coeffs = np.empty((3, n))
    cost = 0.0
    for ax in range(3):
        c, snap_integral = _solve_axis_stable(degree, rhs_axes[:, ax])
        if not np.all(np.isfinite(c)):
            raise NumericalError("snap solve produced non-finite coefficients")
        cost += snap_integral
        coeffs[ax] = c
        coeffs[ax, 0] += origin[ax]
    cost = 0.5 * cost * T**-7
    return PolynomialTrajectory(t_s, t_e, degree, coeffs), cost


def snap_cost(traj: PolynomialTrajectory) -> float:
    """0.5 * integral of squared snap of an existing trajectory (physical units).

    Evaluated as a Gauss quadrature of the squared snap samples, which keeps
    every summand nonnegative (the equivalent monomial quadratic form cancels
    catastrophically for high-degree coefficients)."""
    nodes, weights = npleg.leggauss(max(traj.degree, 4))
    u = (nodes + 1.0) / 2.0
    w = weights / 2.0
    B4 = _deriv_basis(traj.degree, 4, u)
    snap = traj.coeffs @ B4.T
    return 0.5 * float(np.sum(w * snap**2)) * traj.duration**-7


def kkt_residual(traj: PolynomialTrajectory, bc: BoundaryConditions) -> float:
    """Relative KKT residual of a min-snap solution (nondimensional units).

    Primal feasibility is the componentwise backward error of the boundary
    rows, |A c - b| / (1 + |A||c| + |b|), the standard measure that stays
    meaningful when high-degree monomial rows sum large cancelling products.
    Stationarity is the cost gradient projected onto the feasible directions
    (the best achievable ||H c + A' lambda|| over all multipliers), scaled by
    the gradient magnitude.  Both are evaluated on the monomial-basis system,
    independent of the orthogonal basis the solver uses internally.
    """
    A, H = _unit_system(traj.degree)
    Z = _null_basis(traj.degree)
    rhs_axes = _scaled_rhs(bc, traj.duration)
    origin = bc.start_state[0]
    rhs_axes[0] -= origin
    rhs_axes[5] -= origin
    res = 0.0
    for ax in range(3):
        c = traj.coeffs[ax].copy()
        c[0] -= origin[ax]
        g = H @ c
        stat = np.linalg.norm(Z.T @ g, np.inf) / (1.0 + np.linalg.norm(g, np.inf))
        b = rhs_axes[:, ax]
        denom = 1.0 + np.abs(A) @ np.abs(c) + np.abs(b)
        prim = (np.abs(A @ c - b) / denom).max()
        res = max(res, stat, prim)
    return res


class ReducedTransitionProblem:
    """Boundary-equality-free coordinates for one drone's transition.

    Trajectories are parameterized as c = c0 + Z y per axis, where c0 is the
    equality-only minimum-snap solution and Z spans the null space of the
    boundary constraint rows, so any y satisfies the boundary equalities
    exactly.  y = 0 is the warm start.
    """

    def __init__(self, bc: BoundaryConditions, degree: int, t_s: float, t_e: float):
        self.bc = bc
        self.degree = degree
        self.t_s = t_s
        self.t_e = t_e
        self.T = t_e - t_s
        A, H = _unit_system(degree)
        self.Z = _null_basis(degree)
        self.nz = self.Z.shape[1]
        traj0, self.cost0 = solve_min_snap(bc, degree, t_s, t_e)
        self.c0 = np.array(traj0.coeffs)
        self.H = H
        self.HZ = H @ self.Z
        self.ZHZ = self.Z.T @ self.HZ

    @property
    def n_vars(self) -> int:
        return 3 * self.nz

    def coeffs(self, y: NDArray) -> NDArray[np.float64]:
        y = np.asarray(y, dtype=float).reshape(3, self.nz)
        return self.c0 + y @ self.Z.T

    def trajectory(self, y: NDArray) -> PolynomialTrajectory:
        return PolynomialTrajectory(self.t_s, self.t_e, self.degree, self.coeffs(y))

    def snap_cost(self, y: NDArray) -> float:
        c = self.coeffs(y)
        return 0.5 * sum(ci @ self.H @ ci for ci in c) * self.T**-7

    def snap_cost_grad(self, y: NDArray) -> NDArray[np.float64]:
        c = self.coeffs(y)
        return (c @ self.HZ).reshape(-1) * self.T**-7

    def constraint_times(self, K: int) -> NDArray[np.float64]:
        """Interior step times t_k = t_s + k (t_e - t_s) / K, k = 1..K."""
        return self.t_s + np.arange(1, K + 1) * self.T / K

    def state_maps(self, order: int, times: NDArray) -> tuple[NDArray, NDArray]:
        """(V, offset): derivative of given order at the times is V @ y_axis
        + offset[:, axis], in physical units."""
        u = (np.asarray(times, dtype=float) - self.t_s) / self.T
        B = _deriv_basis(self.degree, order, u) / self.T**order
        return B @ self.Z, B @ self.c0.T


@lru_cache(maxsize=8)
def _null_basis(degree: int) -> NDArray[np.float64]:
    return null_space(_constraint_matrix(degree))


def _linear_bound_constraints(prob: ReducedTransitionProblem, bounds: StateBounds, times):
    """Stack position/velocity/jerk box constraints as G y + h >= 0."""
    K = len(times)
    nz, nv = prob.nz, prob.n_vars
    blocks_G, blocks_h, labels = [], [], []
    specs = [
        (0, bounds.pos_min, bounds.pos_max, "pos"),
        (1, -bounds.vel_max, bounds.vel_max, "vel"),
        (3, -bounds.jerk_max, bounds.jerk_max, "jerk"),
    ]
    for order, lo, hi, name in specs:
        V, off = prob.state_maps(order, times)
        for ax in range(3):
            G_ax = np.zeros((K, nv))
            G_ax[:, ax * nz:(ax + 1) * nz] = V
            # value - lo >= 0
            blocks_G.append(G_ax)
            blocks_h.append(off[:, ax] - lo[ax])
            labels += [f"{name}_min[{'xyz'[ax]}] t={t:.4g}" for t in times]
            # hi - value >= 0
            blocks_G.append(-G_ax)
            blocks_h.append(hi[ax] - off[:, ax])
            labels += [f"{name}_max[{'xyz'[ax]}] t={t:.4g}" for t in times]
    return np.vstack(blocks_G), np.concatenate(blocks_h), labels


class _AccNormConstraint:
    """acc_norm_max**2 - ||acc(t_k)||**2 >= 0 at each step, with analytic jacobian."""

    def __init__(self, prob: ReducedTransitionProblem, acc_max: float, times):
        self.V, self.off = prob.state_maps(2, times)
        self.nz = prob.nz
        self.limit_sq = acc_max**2
        self.K = len(times)
        self.labels = [f"acc_norm t={t:.4g}" for t in times]

    def _acc(self, y):
        y = y.reshape(3, self.nz)
        return self.off + (self.V @ y.T)

    def fun(self, y):
        acc = self._acc(y)
        return self.limit_sq - np.sum(acc**2, axis=1)

    def jac(self, y):
        acc = self._acc(y)
        J = np.zeros((self.K, 3 * self.nz))
        for ax in range(3):
            J[:, ax * self.nz:(ax + 1) * self.nz] = -2.0 * acc[:, ax:ax + 1] * self.V
        return J


def _verify(funs_and_labels, y):
    """Most negative constraint value and its label."""
    worst_val, worst_label = np.inf, ""
    for fun, labels in funs_and_labels:
        vals = fun(y)
        i = int(np.argmin(vals))
        if vals[i] < worst_val:
            worst_val, worst_label = float(vals[i]), labels[i]
    return worst_val, worst_label


def _restore(y0, groups):
    """Feasibility restoration: drive the squared constraint violations to zero.

    SLSQP cannot move off a start where the objective is stationary but the
    constraints are violated (the warm starts here are exactly that), so the
    constrained solves below always begin from a restored point.  ``groups``
    is a list of (fun, jac) pairs of vector-valued constraints c(y) >= 0.
    """

    def phi(y):
        return sum(float(v @ v) for v in (np.minimum(f(y), 0.0) for f, _ in groups))

    def phi_grad(y):
        g = np.zeros_like(y)
        for f, jac in groups:
            v = np.minimum(f(y), 0.0)
            if np.any(v):
                g += 2.0 * (v @ jac(y))
        return g

    res = minimize(phi, y0, jac=phi_grad, method="L-BFGS-B",
                   options={"maxiter": 500, "ftol": 1e-16, "gtol": 1e-12})
    return res.x


def generate_candidate(
    bc: BoundaryConditions,
    bounds: StateBounds,
    degree: int,
    t_s: float,
    t_e: float,
    problem: ReducedTransitionProblem | None = None,
) -> PolynomialTrajectory:
    """Minimum-snap trajectory respecting the state bounds at the K steps.

    Starts from the unconstrained minimizer; if that already satisfies the
    bounds it is returned unchanged, otherwise SLSQP re-optimizes in the
    reduced space.  Raises :class:`InfeasibleTransitionError` with the most
    violated constraint when no feasible trajectory is found.
    """
    prob = problem if problem is not None else ReducedTransitionProblem(bc, degree, t_s, t_e)
    times = prob.constraint_times(bounds.K)
    G, h, lin_labels = _linear_bound_constraints(prob, bounds, times)
    acc = _AccNormConstraint(prob, bounds.acc_norm_max, times)
    checks = [(lambda y: G @ y + h, lin_labels), (acc.fun, acc.labels)]

    y0 = np.zeros(prob.n_vars)
    worst, _ = _verify(checks, y0)
    if worst >= -FEASIBILITY_TOL:
        return prob.trajectory(y0)

    groups = [(lambda y: G @ y + h, lambda y: G), (acc.fun, acc.jac)]
    constraints = [{"type": "ineq", "fun": f, "jac": j} for f, j in groups]
    y = y0
    for _ in range(2):
        y = _restore(y, groups)
        y = _slsqp(prob.snap_cost, prob.snap_cost_grad, y, constraints)
        worst, label = _verify(checks, y)
        if worst >= -FEASIBILITY_TOL:
            return prob.trajectory(y)
    raise InfeasibleTransitionError(label, -worst)


def _slsqp(fun, jac, y0, constraints, maxiter: int = 300):
    res = minimize(
        fun, y0, jac=jac, method="SLSQP", constraints=constraints,
        options={"maxiter": maxiter, "ftol": 1e-10},
    )
    return res.x
