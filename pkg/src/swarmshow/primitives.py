"""Periodic swarm motion primitives: Fourier-coefficient trajectories per drone.

A motion primitive describes the whole swarm over a time window.  Every drone
carries a center ``c`` and per-frequency sine/cosine amplitude vectors, so the
position of drone ``n`` at time ``t`` is

    x(t) = c + sum_m ( a_m * sin(w_m t) + b_m * cos(w_m t) )

Constructors build these coefficients from higher-level descriptions (standing
waves on a bounded surface, rigid-body rotations) or from raw coefficient
arrays.  All types are immutable after construction; evaluation is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "DroneRole",
    "MotionPrimitive",
    "WaveSpec",
    "WaveMode",
    "RotationSpec",
    "dispersion",
    "from_wave",
    "from_rotation",
    "from_coefficients",
    "helix_on_cone",
]


def _vec3(x, name: str) -> NDArray[np.float64]:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {np.shape(x)}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


@dataclass(frozen=True)
class DroneRole:
    """Evaluated per-drone coefficients of a motion primitive.

    ``r`` is the characteristic configuration vector identifying the drone's
    role in the pattern; ``c`` the motion center; ``a``/``b`` arrays of shape
    (M, 3) hold sine/cosine amplitudes for each retained frequency.
    """

    r: NDArray[np.float64]
    c: NDArray[np.float64]
    a: NDArray[np.float64]
    b: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "r", _vec3(self.r, "r"))
        object.__setattr__(self, "c", _vec3(self.c, "c"))
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if a.ndim != 2 or a.shape[1] != 3 or b.shape != a.shape:
            raise ValueError("a and b must both have shape (M, 3)")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("amplitude coefficients must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        self.r.setflags(write=False)
        self.c.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_modes(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class MotionPrimitive:
    """A time-bounded periodic trajectory family for N drones."""

    t0: float
    tf: float
    drones: tuple[DroneRole, ...]
    frequencies: NDArray[np.float64]

    def __post_init__(self):
        if not self.t0 < self.tf:
            raise ValueError(f"need t0 < tf, got [{self.t0}, {self.tf}]")
        freqs = np.asarray(self.frequencies, dtype=float).reshape(-1)
        if not np.all(np.isfinite(freqs)) or np.any(freqs < 0):
            raise ValueError("frequencies must be finite and >= 0")
        freqs.setflags(write=False)
        drones = tuple(self.drones)
        if not drones:
            raise ValueError("primitive needs at least one drone")
        m = len(freqs)
        for k, d in enumerate(drones):
            if d.n_modes != m:
                raise ValueError(
                    f"drone {k} has {d.n_modes} modes, expected {m}"
                )
        rs = np.array([d.r for d in drones])
        for i in range(len(drones)):
            for j in range(i + 1, len(drones)):
                if np.array_equal(rs[i], rs[j]):
                    raise ValueError(
                        f"characteristic vectors of drones {i} and {j} coincide"
                    )
        object.__setattr__(self, "drones", drones)
        object.__setattr__(self, "frequencies", freqs)

    @property
    def n_drones(self) -> int:
        return len(self.drones)

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    def evaluate(self, n: int, t: float, order: int = 0, *, slack: float = 1e-9):
        """Position (order 0) or time derivative (order 1..4) of drone ``n``.

        ``slack`` widens the admissible time window slightly; transition
        planning needs to sample the series at a start time that may sit a
        tolerance beyond ``tf``.
        """
        if not 0 <= n < self.n_drones:
            raise IndexError(f"drone index {n} out of range 0..{self.n_drones - 1}")
        if not 0 <= order <= 4:
            raise ValueError(f"derivative order must be 0..4, got {order}")
        if not (self.t0 - slack <= t <= self.tf + slack):
            raise ValueError(
                f"time {t} outside primitive window [{self.t0}, {self.tf}]"
            )
        return _eval_series(self.drones[n], self.frequencies, t, order)

    def states(self, n: int, t: float, *, slack: float = 1e-9) -> NDArray[np.float64]:
        """Stacked derivatives 0..4 at time t, shape (5, 3)."""
        return np.array([self.evaluate(n, t, p, slack=slack) for p in range(5)])

    def positions(self, t: float, *, slack: float = 1e-9) -> NDArray[np.float64]:
        """Positions of the whole fleet at time t, shape (N, 3)."""
        return np.array([self.evaluate(n, t, 0, slack=slack) for n in range(self.n_drones)])

    def sample(self, n: int, times, order: int = 0, *, slack: float = 1e-9) -> NDArray[np.float64]:
        """Vectorized evaluation of drone ``n`` at many times; (len(times), 3)."""
        times = np.asarray(times, dtype=float)
        if times.size and not (
            self.t0 - slack <= times.min() and times.max() <= self.tf + slack
        ):
            raise ValueError("sample times outside primitive window")
        if not 0 <= n < self.n_drones:
            raise IndexError(f"drone index {n} out of range")
        role = self.drones[n]
        f = self.frequencies
        phase = np.outer(times, f) + order * (np.pi / 2.0)
        scale = f**order
        out = (scale * np.sin(phase)) @ role.a + (scale * np.cos(phase)) @ role.b
        if order == 0:
            out = out + role.c
        return out

    def amplitude_envelope(self) -> NDArray[np.float64]:
        """Per-drone, per-axis bound on |x(t) - c|, shape (N, 3).

        Sum over modes of hypot(a, b); exact for a single mode, an upper
        bound otherwise.
        """
        return np.array([np.hypot(d.a, d.b).sum(axis=0) for d in self.drones])


def _eval_series(role: DroneRole, freqs: NDArray, t: float, order: int):
    # d^k/dt^k [a sin(wt) + b cos(wt)] = w^k [a sin(wt + k pi/2) + b cos(wt + k pi/2)];
    # w = 0 folds into a constant that vanishes for k >= 1 (0**0 == 1).
    phase = freqs * t + order * (np.pi / 2.0)
    scale = freqs**order
    s = (scale * np.sin(phase)) @ role.a
    c = (scale * np.cos(phase)) @ role.b
    out = s + c
    if order == 0:
        out = out + role.c
    return out


@dataclass(frozen=True)
class WaveMode:
    """One retained standing-wave mode (mu1, mu2) with 3D amplitude vectors."""

    mu1: int
    mu2: int
    a_amp: NDArray[np.float64]
    b_amp: NDArray[np.float64]

    def __post_init__(self):
        if self.mu1 < 1 or self.mu2 < 1:
            raise ValueError("mode indices mu1, mu2 must be >= 1")
        object.__setattr__(self, "a_amp", _vec3(self.a_amp, "a_amp"))
        object.__setattr__(self, "b_amp", _vec3(self.b_amp, "b_amp"))


@dataclass(frozen=True)
class WaveSpec:
    """Standing wave on a bounded rectangular elastic surface.

    Drones sit at surface sites (s1, s2) in [0, a] x [0, b] at height ``h``;
    a wave propagating at speed ``c_speed`` disturbs them in 3D.  ``origin``
    places the surface in the world frame.
    """

    a: float
    b: float
    h: float
    c_speed: float
    modes: tuple[WaveMode, ...]
    sites: NDArray[np.float64]
    origin: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("surface extents a, b must be positive")
        if self.c_speed <= 0:
            raise ValueError("wave speed must be positive")
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise ValueError("need at least one wave mode")
        sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        if sites.shape[1] != 2:
            raise ValueError("sites must be an (N, 2) array")
        if np.any(sites[:, 0] < 0) or np.any(sites[:, 0] > self.a):
            raise ValueError("site s1 coordinates must lie in [0, a]")
        if np.any(sites[:, 1] < 0) or np.any(sites[:, 1] > self.b):
            raise ValueError("site s2 coordinates must lie in [0, b]")
        sites.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "origin", _vec3(self.origin, "origin"))


def dispersion(spec: WaveSpec, mu1: int, mu2: int) -> float:
    """Temporal angular frequency of mode (mu1, mu2): the positive root of
    w^2 = c^2 pi^2 (mu1^2/a^2 + mu2^2/b^2)."""
    if mu1 < 1 or mu2 < 1:
        raise ValueError("mode indices must be >= 1")
    return spec.c_speed * math.pi * math.hypot(mu1 / spec.a, mu2 / spec.b)


def from_wave(spec: WaveSpec, t0: float, tf: float) -> MotionPrimitive:
    """Build the per-drone coefficient form of a surface-wave primitive.

    Each drone's center is its equilibrium point (s1, s2, h) + origin; mode
    amplitudes are the mode vectors shaped by sin(mu1 pi s1 / a) sin(mu2 pi s2 / b).
    """
    freqs = np.array([dispersion(spec, m.mu1, m.mu2) for m in spec.modes])
    drones = []
    for s1, s2 in spec.sites:
        r = np.array([s1, s2, spec.h])
        shape = np.array(
            [
                math.sin(m.mu1 * math.pi * s1 / spec.a)
                * math.sin(m.mu2 * math.pi * s2 / spec.b)
                for m in spec.modes
            ]
        )
        a = shape[:, None] * np.array([m.a_amp for m in spec.modes])
        b = shape[:, None] * np.array([m.b_amp for m in spec.modes])
        drones.append(DroneRole(r=r, c=spec.origin + r, a=a, b=b))
    try:
        return MotionPrimitive(t0=t0, tf=tf, drones=tuple(drones), frequencies=freqs)
    except ValueError as exc:
        raise ValueError(f"invalid wave specification: {exc}") from exc


@dataclass(frozen=True)
class RotationSpec:
    """Rigid body spinning at constant rate about its body z axis.

    ``rho_o`` is the body origin in the world frame, ``R_IBo = [e1 e2 e3]``
    the body pose at t = 0, and ``body_points`` the drones' characteristic
    vectors expressed in the body frame.
    """

    rho_o: NDArray[np.float64]
    R_IBo: NDArray[np.float64]
    omega_z: float
    body_points: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "rho_o", _vec3(self.rho_o, "rho_o"))
        R = np.asarray(self.R_IBo, dtype=float)
        if R.shape != (3, 3):
            raise ValueError("R_IBo must be a 3x3 matrix")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("R_IBo must be orthonormal with determinant +1")
        pts = np.atleast_2d(np.asarray(self.body_points, dtype=float))
        if pts.shape[1] != 3:
            raise ValueError("body_points must be an (N, 3) array")
        R.setflags(write=False)
        pts.setflags(write=False)
        object.__setattr__(self, "R_IBo", R)
        object.__setattr__(self, "body_points", pts)


def from_rotation(spec: RotationSpec, t0: float, tf: float) -> MotionPrimitive:
    """Single-frequency primitive tracing the rotation of the body points."""
    e1, e2, e3 = spec.R_IBo[:, 0], spec.R_IBo[:, 1], spec.R_IBo[:, 2]
    drones = []
    for r in spec.body_points:
        c = spec.rho_o + e3 * r[2]
        a1 = e2 * r[0] - e1 * r[1]
        b1 = e1 * r[0] + e2 * r[1]
        drones.append(DroneRole(r=r, c=c, a=a1[None, :], b=b1[None, :]))
    try:
        return MotionPrimitive(
            t0=t0, tf=tf, drones=tuple(drones), frequencies=np.array([spec.omega_z])
        )
    except ValueError as exc:
        raise ValueError(f"invalid rotation specification: {exc}") from exc


def from_coefficients(
    t0: float,
    tf: float,
    frequencies,
    centers,
    a_coeffs,
    b_coeffs,
    r_vectors=None,
) -> MotionPrimitive:
    """Raw constructor from explicit per-drone coefficient arrays.

    ``centers`` is (N, 3); ``a_coeffs``/``b_coeffs`` are (N, M, 3).  When
    ``r_vectors`` is omitted the centers double as characteristic vectors.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    a_coeffs = np.asarray(a_coeffs, dtype=float)
    b_coeffs = np.asarray(b_coeffs, dtype=float)
    rs = centers if r_vectors is None else np.atleast_2d(np.asarray(r_vectors, dtype=float))
    drones = tuple(
        DroneRole(r=rs[n], c=centers[n], a=a_coeffs[n], b=b_coeffs[n])
        for n in range(len(centers))
    )
    return MotionPrimitive(
        t0=t0, tf=tf, drones=drones, frequencies=np.asarray(frequencies, dtype=float)
    )


def helix_on_cone(
    n_drones: int,
    base_center,
    base_radius: float,
    height: float,
    turns: float,
    top_radius: float = 0.0,
    phase: float = 0.0,
) -> NDArray[np.float64]:
    """Points along a helix on the lateral surface of a (truncated) cone.

    Returns (n_drones, 3) positions relative to the cone's own frame, meant
    to be used as ``body_points`` of a :class:`RotationSpec`.  Points are
    uniformly spaced in the helix parameter, winding ``turns`` times from the
    base circle to the top.
    """
    if n_drones < 1:
        raise ValueError("need at least one drone")
    if height <= 0:
        raise ValueError("degenerate cone: height must be positive")
    if base_radius <= 0:
        raise ValueError("degenerate cone: base radius must be positive")
    base_center = _vec3(base_center, "base_center")
    u = np.zeros(1) if n_drones == 1 else np.linspace(0.0, 1.0, n_drones)
    radius = base_radius + (top_radius - base_radius) * u
    theta = phase + 2.0 * math.pi * turns * u
    pts = np.column_stack(
        [radius * np.cos(theta), radius * np.sin(theta), height * u]
    )
    return pts + base_center
