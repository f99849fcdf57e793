"""Frequency-response tables and amplitude/phase compensation of primitives.

Tracking a fast periodic reference through a real vehicle attenuates the
amplitude and delays the phase.  Given per-axis (frequency, magnitude, phase)
samples of the closed loop, each sinusoidal term of a primitive is pre-scaled
by kappa = 1/|H| and phase-advanced by phi = -arg H so the vehicle's output
lands on the desired motion.  Transitions are left untouched: their frequency
content is not confined to a finite set of lines.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from .primitives import MotionPrimitive

__all__ = [
    "FrequencyResponseTable",
    "CompensatedPrimitive",
    "LookupResult",
    "EstimationError",
    "estimate_response",
    "lookup",
    "compensate",
]

TABLE_HEADER = ["axis", "omega_rad_s", "magnitude", "phase_rad"]


class EstimationError(RuntimeError):
    """Raised when a frequency-response estimate cannot be formed."""


class LookupResult(NamedTuple):
    magnitude: float
    phase: float
    extrapolated: bool


@dataclass(frozen=True)
class FrequencyResponseTable:
    """Per-axis sorted (omega, magnitude, phase) samples; phases unwrapped."""

    omegas: tuple[NDArray[np.float64], ...]
    magnitudes: tuple[NDArray[np.float64], ...]
    phases: tuple[NDArray[np.float64], ...]

    def __post_init__(self):
        if not (len(self.omegas) == len(self.magnitudes) == len(self.phases) == 3):
            raise ValueError("table needs entries for exactly 3 axes")
        omegas, mags, phases = [], [], []
        for ax in range(3):
            w = np.asarray(self.omegas[ax], dtype=float)
            m = np.asarray(self.magnitudes[ax], dtype=float)
            p = np.asarray(self.phases[ax], dtype=float)
            if not (w.size and w.size == m.size == p.size):
                raise ValueError(f"axis {ax + 1}: empty or mismatched table columns")
            if np.any(np.diff(w) <= 0):
                raise ValueError(f"axis {ax + 1}: frequencies must be strictly increasing")
            if np.any(m <= 0):
                raise ValueError(f"axis {ax + 1}: magnitudes must be positive")
            p = np.unwrap(p)
            for arr in (w, m, p):
                arr.setflags(write=False)
            omegas.append(w)
            mags.append(m)
            phases.append(p)
        object.__setattr__(self, "omegas", tuple(omegas))
        object.__setattr__(self, "magnitudes", tuple(mags))
        object.__setattr__(self, "phases", tuple(phases))

    @classmethod
    def identity(cls, omegas) -> "FrequencyResponseTable":
        w = np.asarray(omegas, dtype=float)
        one, zero = np.ones_like(w), np.zeros_like(w)
        return cls((w, w, w), (one, one, one), (zero, zero, zero))

    @classmethod
    def from_rows(cls, rows) -> "FrequencyResponseTable":
        """Rows of (axis 1..3, omega, magnitude, phase)."""
        per_axis: dict[int, list[tuple[float, float, float]]] = {1: [], 2: [], 3: []}
        for axis, w, m, p in rows:
            axis = int(axis)
            if axis not in per_axis:
                raise ValueError(f"axis must be 1, 2 or 3, got {axis}")
            per_axis[axis].append((float(w), float(m), float(p)))
        cols = [np.array(sorted(per_axis[ax])) for ax in (1, 2, 3)]
        for ax, c in enumerate(cols):
            if c.size == 0:
                raise ValueError(f"axis {ax + 1} has no table entries")
        return cls(
            tuple(c[:, 0] for c in cols),
            tuple(c[:, 1] for c in cols),
            tuple(c[:, 2] for c in cols),
        )

    def rows(self):
        for ax in range(3):
            for w, m, p in zip(self.omegas[ax], self.magnitudes[ax], self.phases[ax]):
                yield (ax + 1, float(w), float(m), float(p))

    @classmethod
    def read_csv(cls, path) -> "FrequencyResponseTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != TABLE_HEADER:
                raise ValueError(
                    f"{path}: expected header {','.join(TABLE_HEADER)}"
                )
            rows = [tuple(row) for row in reader if row]
        return cls.from_rows(rows)

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TABLE_HEADER)
            for row in self.rows():
                writer.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])


def lookup(table: FrequencyResponseTable, omega: float, axis: int) -> LookupResult:
    """Magnitude and phase at a frequency, linearly interpolated per axis.

    Queries outside the tabulated range clamp to the nearest entry and are
    flagged as extrapolated.  ``axis`` is 0-based (0=x, 1=y, 2=z).
    """
    if not 0 <= axis < 3:
        raise IndexError(f"axis must be 0..2, got {axis}")
    w = table.omegas[axis]
    extrapolated = bool(omega < w[0] or omega > w[-1])
    mag = float(np.interp(omega, w, table.magnitudes[axis]))
    phase = float(np.interp(omega, w, table.phases[axis]))
    return LookupResult(mag, phase, extrapolated)


def estimate_response(
    reference: NDArray,
    response: NDArray,
    omega: float,
    dt: float,
) -> tuple[float, float]:
    """Amplitude ratio and phase shift of the response at one frequency.

    Both series must be uniformly sampled at ``dt`` and span at least three
    periods of ``omega``; the fit window is truncated to a whole number of
    periods.  Each series is least-squares fitted to
    a*sin(omega t) + b*cos(omega t) + c, and the complex ratio of the fitted
    phasors gives (magnitude, phase); a delayed response has negative phase.
    """
    reference = np.asarray(reference, dtype=float).reshape(-1)
    response = np.asarray(response, dtype=float).reshape(-1)
    if reference.shape != response.shape:
        raise ValueError("reference and response must have the same length")
    if omega <= 0 or dt <= 0:
        raise ValueError("need positive omega and dt")
    period = 2 * np.pi / omega
    duration = (reference.size - 1) * dt
    n_periods = int(duration / period)
    if n_periods < 3:
        raise EstimationError(
            f"series of {duration:.3g}s covers {n_periods} period(s) of "
            f"omega={omega:.3g}; need at least 3"
        )
    n = int(round(n_periods * period / dt)) + 1
    t = np.arange(n) * dt
    design = np.column_stack([np.sin(omega * t), np.cos(omega * t), np.ones(n)])
    ref_ab = np.linalg.lstsq(design, reference[:n], rcond=None)[0]
    resp_ab = np.linalg.lstsq(design, response[:n], rcond=None)[0]
    # a sin(wt) + b cos(wt) = R sin(wt + psi) with R e^{j psi} = a + jb
    ref_phasor = complex(ref_ab[0], ref_ab[1])
    resp_phasor = complex(resp_ab[0], resp_ab[1])
    ref_amp = abs(ref_phasor)
    if ref_amp < 1e-9 * max(1.0, float(np.std(reference))):
        raise EstimationError(f"reference has no energy at omega={omega:.3g}")
    ratio = resp_phasor / ref_phasor
    return abs(ratio), float(np.angle(ratio))


@dataclass(frozen=True)
class CompensatedPrimitive:
    """A primitive with per-mode, per-axis amplitude scaling and phase advance.

    Evaluation applies kappa and phi to every sinusoidal term; the constant
    center and the frequencies are untouched.
    """

    base: MotionPrimitive
    kappa: NDArray[np.float64]
    phi: NDArray[np.float64]
    extrapolated: NDArray[np.bool_]

    def __post_init__(self):
        m = self.base.n_modes
        kappa = np.asarray(self.kappa, dtype=float).reshape(m, 3)
        phi = np.asarray(self.phi, dtype=float).reshape(m, 3)
        flags = np.asarray(self.extrapolated, dtype=bool).reshape(m, 3)
        if np.any(kappa <= 0):
            raise ValueError("kappa must be positive")
        for arr in (kappa, phi, flags):
            arr.setflags(write=False)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "extrapolated", flags)

    @property
    def t0(self) -> float:
        return self.base.t0

    @property
    def tf(self) -> float:
        return self.base.tf

    @property
    def n_drones(self) -> int:
        return self.base.n_drones

    def evaluate(self, n: int, t: float, order: int = 0, *, slack: float = 1e-9):
        """Compensated reference for drone n (same contract as the base)."""
        if not 0 <= n < self.base.n_drones:
            raise IndexError(f"drone index {n} out of range")
        if not 0 <= order <= 4:
            raise ValueError(f"derivative order must be 0..4, got {order}")
        if not (self.t0 - slack <= t <= self.tf + slack):
            raise ValueError(f"time {t} outside primitive window [{self.t0}, {self.tf}]")
        role = self.base.drones[n]
        freqs = self.base.frequencies
        phase = freqs[:, None] * t + self.phi + order * (np.pi / 2.0)
        scale = self.kappa * freqs[:, None] ** order
        out = np.sum(scale * (role.a * np.sin(phase) + role.b * np.cos(phase)), axis=0)
        if order == 0:
            out = out + role.c
        return out

    def sample(self, n: int, times, order: int = 0, *, slack: float = 1e-9):
        """Vectorized compensated evaluation; returns (len(times), 3)."""
        times = np.asarray(times, dtype=float)
        if times.size and not (
            self.t0 - slack <= times.min() and times.max() <= self.tf + slack
        ):
            raise ValueError("sample times outside primitive window")
        role = self.base.drones[n]
        freqs = self.base.frequencies
        phase = (
            times[:, None, None] * freqs[None, :, None]
            + self.phi[None, :, :]
            + order * (np.pi / 2.0)
        )
        scale = self.kappa * freqs[:, None] ** order
        out = np.sum(
            scale[None] * (role.a[None] * np.sin(phase) + role.b[None] * np.cos(phase)),
            axis=1,
        )
        if order == 0:
            out = out + role.c
        return out


def fit_phasors(series: NDArray, dt: float, omegas) -> NDArray[np.complex128]:
    """Joint least-squares phasor fit of one scalar series at several frequencies.

    Returns one complex number per frequency whose modulus/argument are the
    amplitude and phase of that component (sin convention, as in
    :func:`estimate_response`).  Fitting all frequencies at once keeps
    incommensurate modes from leaking into each other.
    """
    series = np.asarray(series, dtype=float).reshape(-1)
    omegas = np.asarray(omegas, dtype=float).reshape(-1)
    t = np.arange(series.size) * dt
    cols = [np.ones_like(t)]
    for w in omegas:
        cols += [np.sin(w * t), np.cos(w * t)]
    coef = np.linalg.lstsq(np.column_stack(cols), series, rcond=None)[0]
    ab = coef[1:].reshape(-1, 2)
    return ab[:, 0] + 1j * ab[:, 1]


def compensate(mp: MotionPrimitive, table: FrequencyResponseTable) -> CompensatedPrimitive:
    """Per-mode, per-axis correction factors from the response table."""
    m = mp.n_modes
    kappa = np.empty((m, 3))
    phi = np.empty((m, 3))
    flags = np.zeros((m, 3), dtype=bool)
    for i, w in enumerate(mp.frequencies):
        for ax in range(3):
            res = lookup(table, float(w), ax)
            if res.magnitude <= 1e-12:
                raise ValueError(
                    f"zero magnitude at omega={w:.4g}, axis {ax}: compensation unbounded"
                )
            kappa[i, ax] = 1.0 / res.magnitude
            phi[i, ax] = -res.phase
            flags[i, ax] = res.extrapolated
    return CompensatedPrimitive(base=mp, kappa=kappa, phi=phi, extrapolated=flags)
