"""Linear per-axis vehicle simulation and synthetic frequency-response data.

Each axis is a unity-DC-gain second-order plant plus a pure input delay,
discretized exactly under a zero-order hold.  The response sample at index k
is the plant position at the end of the k-th hold interval, so an infinitely
fast plant reproduces its reference exactly and a delay of d samples leaves
the response untouched for exactly d samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy.signal import cont2discrete, lfilter, lfiltic

from .primitives import MotionPrimitive
from .sync import CompensatedPrimitive, FrequencyResponseTable, estimate_response
from .trajopt import PolynomialTrajectory

__all__ = [
    "AxisPlant",
    "VehicleModel",
    "PrimitivePhase",
    "TransitionPhase",
    "SwarmRun",
    "step_response",
    "run_choreography",
    "synthetic_bode",
]


@dataclass(frozen=True)
class AxisPlant:
    """Second-order closed-loop position dynamics along one axis."""

    natural_freq: float
    damping: float
    delay: float = 0.0

    def __post_init__(self):
        if self.natural_freq <= 0 or self.damping <= 0:
            raise ValueError("natural frequency and damping must be positive")
        if self.delay < 0:
            raise ValueError("delay must be nonnegative")

    def frequency_response(self, omega: float) -> complex:
        """Analytic continuous-time H(jw) including the delay term."""
        jw = 1j * omega
        h = self.natural_freq**2 / (
            jw**2 + 2 * self.damping * self.natural_freq * jw + self.natural_freq**2
        )
        return h * np.exp(-jw * self.delay)


@dataclass(frozen=True)
class VehicleModel:
    """Per-axis plants plus the common sample period of the command stream."""

    axes: tuple[AxisPlant, AxisPlant, AxisPlant]
    sample_period: float = 0.01

    def __post_init__(self):
        if self.sample_period <= 0:
            raise ValueError("sample period must be positive")
        object.__setattr__(self, "axes", tuple(self.axes))
        if len(self.axes) != 3:
            raise ValueError("need exactly 3 axis plants")

    @classmethod
    def default(cls, sample_period: float = 0.01) -> "VehicleModel":
        """Harness default: visible attenuation and lag without instability."""
        plant = AxisPlant(natural_freq=7.0, damping=0.7, delay=0.1)
        return cls(axes=(plant, plant, plant), sample_period=sample_period)

    @classmethod
    def uniform(cls, natural_freq, damping, delay, sample_period=0.01) -> "VehicleModel":
        plant = AxisPlant(natural_freq, damping, delay)
        return cls(axes=(plant, plant, plant), sample_period=sample_period)

    def max_time_constant(self) -> float:
        return max(1.0 / (p.damping * p.natural_freq) for p in self.axes)

    def frequency_response(self, omega: float, axis: int) -> complex:
        return self.axes[axis].frequency_response(omega)


@lru_cache(maxsize=64)
def _discretized(natural_freq: float, damping: float, dt: float):
    num = [natural_freq**2]
    den = [1.0, 2.0 * damping * natural_freq, natural_freq**2]
    numd, dend, _ = cont2discrete((num, den), dt, method="zoh")
    return np.atleast_1d(np.squeeze(numd)), np.atleast_1d(np.squeeze(dend))


def _axis_response(plant: AxisPlant, dt: float, reference: NDArray) -> NDArray:
    b, a = _discretized(plant.natural_freq, plant.damping, dt)
    d = int(round(plant.delay / dt))
    u = reference if d == 0 else np.concatenate(
        [np.full(d, reference[0]), reference[: reference.size - d]]
    )
    # Steady at the first sample before the run starts.
    zi = lfiltic(b, a, y=[u[0], u[0]], x=[u[0], u[0]])
    y, _ = lfilter(b, a, np.append(u, u[-1]), zi=zi)
    # y[k] is the state before consuming u[k]; shift to end-of-interval samples.
    return y[1:]


def step_response(model: VehicleModel, reference: NDArray) -> NDArray[np.float64]:
    """Simulate the three axis plants tracking a (T, 3) reference series."""
    reference = np.asarray(reference, dtype=float)
    if reference.ndim != 2 or reference.shape[1] != 3:
        raise ValueError("reference must have shape (T, 3)")
    out = np.empty_like(reference)
    for ax in range(3):
        out[:, ax] = _axis_response(model.axes[ax], model.sample_period, reference[:, ax])
    return out


@dataclass(frozen=True)
class PrimitivePhase:
    """A primitive (optionally compensated) section of the show schedule."""

    primitive: MotionPrimitive | CompensatedPrimitive

    @property
    def t0(self) -> float:
        return self.primitive.t0

    @property
    def tf(self) -> float:
        return self.primitive.tf

    @property
    def n_drones(self) -> int:
        return self.primitive.n_drones

    def command(self, n: int, times) -> NDArray:
        return self.primitive.sample(n, times, 0, slack=1e-6)

    def desired(self, n: int, times) -> NDArray:
        prim = self.primitive
        base = prim.base if isinstance(prim, CompensatedPrimitive) else prim
        return base.sample(n, times, 0, slack=1e-6)


@dataclass(frozen=True)
class TransitionPhase:
    """Per-drone polynomial transition section of the show schedule."""

    trajectories: tuple[PolynomialTrajectory, ...]

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if not trajs:
            raise ValueError("transition phase needs at least one trajectory")
        t0, tf = trajs[0].t_start, trajs[0].t_end
        for tr in trajs:
            if abs(tr.t_start - t0) > 1e-9 or abs(tr.t_end - tf) > 1e-9:
                raise ValueError("transition trajectories must share the time window")
        object.__setattr__(self, "trajectories", trajs)

    @property
    def t0(self) -> float:
        return self.trajectories[0].t_start

    @property
    def tf(self) -> float:
        return self.trajectories[0].t_end

    @property
    def n_drones(self) -> int:
        return len(self.trajectories)

    def command(self, n: int, times) -> NDArray:
        return self.trajectories[n].sample(times)

    desired = command


@dataclass(frozen=True)
class SwarmRun:
    """Simulated fleet run: sample grid, series and tracking metrics."""

    times: NDArray[np.float64]
    desired: NDArray[np.float64]  # (N, T, 3)
    reference: NDArray[np.float64]
    response: NDArray[np.float64]
    transient_cut: float
    rms_error: NDArray[np.float64]  # (N,)
    max_error: NDArray[np.float64]
    segment_metrics: tuple[dict, ...]
    min_separation: float  # min over time/pairs of squared scaled distance

    @property
    def n_drones(self) -> int:
        return self.desired.shape[0]

    def metrics_dict(self) -> dict:
        min_sep = float(self.min_separation)
        return {
            "transient_cut_s": self.transient_cut,
            "rms_error_m": [float(v) for v in self.rms_error],
            "max_error_m": [float(v) for v in self.max_error],
            "fleet_rms_error_m": float(np.sqrt(np.mean(self.rms_error**2))),
            "min_separation_sq": min_sep if np.isfinite(min_sep) else None,
            "segments": list(self.segment_metrics),
        }


def _validate_schedule(schedule) -> int:
    if not schedule:
        raise ValueError("schedule is empty")
    n = schedule[0].n_drones
    if n < 1:
        raise ValueError("empty fleet")
    for seg in schedule:
        if seg.n_drones != n:
            raise ValueError("all schedule segments must cover the same fleet")
    for prev, nxt in zip(schedule, schedule[1:]):
        gap = nxt.t0 - prev.tf
        if abs(gap) > 1e-6:
            kind = "gap" if gap > 0 else "overlap"
            raise ValueError(
                f"schedule {kind} of {abs(gap):.3g}s between segments at t={prev.tf}"
            )
    return n


def run_choreography(
    schedule,
    model,
    ellipsoid=None,
    transient_cut: float | None = None,
) -> SwarmRun:
    """Simulate every drone through the schedule and score the tracking.

    ``schedule`` is a time-ordered list of :class:`PrimitivePhase` /
    :class:`TransitionPhase` covering the same fleet with no gaps or overlaps.
    ``model`` is one :class:`VehicleModel` for the whole fleet or a sequence
    with one per drone (all sharing the sample period).  Tracking errors
    compare the response against the *desired* motion (for a compensated
    primitive: the uncompensated one).  Metrics discard an initial transient
    of max(2 s, 3 time constants) unless overridden.
    """
    n = _validate_schedule(schedule)
    if isinstance(model, VehicleModel):
        models = [model] * n
    else:
        models = list(model)
        if len(models) != n:
            raise ValueError(f"need one model per drone: got {len(models)} for {n}")
        if any(m.sample_period != models[0].sample_period for m in models):
            raise ValueError("per-drone models must share the sample period")
    h = models[0].sample_period
    t_start, t_end = schedule[0].t0, schedule[-1].tf
    n_samples = int(round((t_end - t_start) / h)) + 1
    times = t_start + np.arange(n_samples) * h

    bounds = np.array([seg.tf for seg in schedule])
    seg_idx = np.minimum(np.searchsorted(bounds, times, side="left"), len(schedule) - 1)

    desired = np.empty((n, n_samples, 3))
    reference = np.empty((n, n_samples, 3))
    for s, seg in enumerate(schedule):
        mask = seg_idx == s
        if not np.any(mask):
            continue
        ts = times[mask]
        for d in range(n):
            reference[d, mask] = seg.command(d, ts)
            desired[d, mask] = seg.desired(d, ts)

    response = np.empty_like(reference)
    for d in range(n):
        response[d] = step_response(models[d], reference[d])

    if transient_cut is None:
        transient_cut = max(2.0, 3.0 * max(m.max_time_constant() for m in models))
    settled = times >= t_start + transient_cut
    if not np.any(settled):
        settled = np.ones_like(times, dtype=bool)

    err = np.linalg.norm(response - desired, axis=2)  # (N, T)
    rms = np.sqrt(np.mean(err[:, settled] ** 2, axis=1))
    mx = err[:, settled].max(axis=1)

    seg_metrics = []
    for s, seg in enumerate(schedule):
        mask = (seg_idx == s) & settled
        entry = {
            "kind": type(seg).__name__,
            "t0": float(seg.t0),
            "tf": float(seg.tf),
        }
        if np.any(mask):
            entry["rms_error_m"] = [float(v) for v in np.sqrt(np.mean(err[:, mask] ** 2, axis=1))]
            entry["max_error_m"] = [float(v) for v in err[:, mask].max(axis=1)]
        seg_metrics.append(entry)

    min_sep = np.inf
    if ellipsoid is not None and n > 1:
        gram = ellipsoid.gram
        for i in range(1, n):
            dvec = response[:i] - response[i]
            q = np.einsum("mti,ij,mtj->mt", dvec, gram, dvec)
            min_sep = min(min_sep, float(q.min()))

    return SwarmRun(
        times=times,
        desired=desired,
        reference=reference,
        response=response,
        transient_cut=transient_cut,
        rms_error=rms,
        max_error=mx,
        segment_metrics=tuple(seg_metrics),
        min_separation=min_sep,
    )


def synthetic_bode(
    model: VehicleModel,
    frequencies,
    amplitude: float = 0.5,
    n_periods: int = 10,
    settle_time: float | None = None,
) -> FrequencyResponseTable:
    """Identify the per-axis frequency response of the simulated plant.

    Commands a pure sinusoid at each frequency on each axis, discards the
    transient and estimates (magnitude, phase) by the sine-fit correlation
    of the command against the simulated output.
    """
    frequencies = np.asarray(frequencies, dtype=float)
    if frequencies.size == 0 or np.any(frequencies <= 0):
        raise ValueError("frequencies must be positive")
    if np.any(np.diff(frequencies) <= 0):
        raise ValueError("frequencies must be strictly increasing")
    h = model.sample_period
    if settle_time is None:
        settle_time = max(
            2.0, 5.0 * model.max_time_constant(), 5.0 * max(p.delay for p in model.axes)
        )
    rows = []
    for ax in range(3):
        plant = model.axes[ax]
        for w in frequencies:
            period = 2 * np.pi / w
            duration = settle_time + max(n_periods, 4) * period
            t = np.arange(int(np.ceil(duration / h)) + 1) * h
            u = amplitude * np.sin(w * t)
            y = _axis_response(plant, h, u)
            start = int(np.ceil(settle_time / h))
            mag, phase = estimate_response(u[start:], y[start:], w, h)
            rows.append((ax + 1, float(w), mag, phase))
    return FrequencyResponseTable.from_rows(rows)
