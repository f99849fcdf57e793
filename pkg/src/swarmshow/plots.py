"""Report figures, rendered to PNG next to the matching CSV data.

Every figure writer takes the data it plots and an output stem; it writes
``<stem>.png`` and ``<stem>.csv`` so the numbers behind each figure stay
diffable and replottable.  Rendering is deterministic (Agg, fixed dpi, no
timestamps in the output).
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .collision import CollisionEllipsoid, TransitionPlan
from .sim import SwarmRun
from .sync import FrequencyResponseTable

DPI = 110


def _write_csv(path, header, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _save(fig, stem):
    Path(stem).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(f"{stem}.png", dpi=DPI, bbox_inches="tight")
    plt.close(fig)


def transition_paths(plan: TransitionPlan, stem, sample_dt: float = 0.02) -> None:
    """Top and side view of candidate vs resolved transition paths."""
    t_s = plan.trajectories[0].t_start
    t_e = plan.trajectories[0].t_end
    times = np.arange(t_s, t_e + sample_dt / 2, sample_dt)
    cand = np.array([tr.sample(times) for tr in plan.candidates])
    final = np.array([tr.sample(times) for tr in plan.trajectories])

    fig, axes = plt.subplots(1, 2, figsize=(9.5, 4.2))
    for view, (i, j, xl, yl) in zip(axes, [(0, 1, "x [m]", "y [m]"), (0, 2, "x [m]", "z [m]")]):
        for d in range(len(plan.candidates)):
            view.plot(cand[d, :, i], cand[d, :, j], color="0.75", lw=0.9, zorder=1)
            view.plot(final[d, :, i], final[d, :, j], lw=1.3, zorder=2)
            view.plot(final[d, 0, i], final[d, 0, j], "o", ms=4, mfc="none",
                      color="k", zorder=3)
            view.plot(final[d, -1, i], final[d, -1, j], "o", ms=4, color="k", zorder=3)
        view.set_xlabel(xl)
        view.set_ylabel(yl)
        view.set_aspect("equal", adjustable="datalim")
    axes[0].set_title("transition paths (grey: candidates)")
    _save(fig, stem)

    rows = []
    for d in range(len(plan.candidates)):
        for k, t in enumerate(times):
            rows.append([float(t), d,
                         *(float(v) for v in cand[d, k]),
                         *(float(v) for v in final[d, k])])
    _write_csv(f"{stem}.csv",
               ["t", "drone", "cand_x", "cand_y", "cand_z", "final_x", "final_y", "final_z"],
               rows)


def separation_profile(plan: TransitionPlan, ellipsoid: CollisionEllipsoid, stem,
                       sample_dt: float = 0.005) -> None:
    """Fleet-minimum scaled separation over the transition window."""
    t_s = plan.trajectories[0].t_start
    t_e = plan.trajectories[0].t_end
    times = np.arange(t_s, t_e + sample_dt / 2, sample_dt)
    pos = np.array([tr.sample(times) for tr in plan.trajectories])
    gram = ellipsoid.gram
    n = len(plan.trajectories)
    min_sep = np.full(times.size, np.inf)
    for i in range(1, n):
        d = pos[:i] - pos[i]
        q = np.einsum("mti,ij,mtj->mt", d, gram, d)
        min_sep = np.minimum(min_sep, q.min(axis=0))

    fig, ax = plt.subplots(figsize=(7.0, 3.4))
    ax.plot(times, min_sep, lw=1.4)
    ax.axhline(2.0, color="tab:orange", ls="--", lw=1.0, label="planning bound (2)")
    ax.axhline(1.0, color="tab:red", ls=":", lw=1.0, label="contact (1)")
    ax.set_xlabel("t [s]")
    ax.set_ylabel(r"min $\|E^{-1}\Delta p\|^2$")
    ax.set_ylim(bottom=0.0)
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, stem)
    _write_csv(f"{stem}.csv", ["t", "min_separation_sq"],
               [[float(t), float(s)] for t, s in zip(times, min_sep)])


def tracking_errors(run: SwarmRun, stem) -> None:
    """Per-drone tracking error magnitude over the simulated show."""
    err = np.linalg.norm(run.response - run.desired, axis=2)
    fig, ax = plt.subplots(figsize=(7.5, 3.4))
    for d in range(run.n_drones):
        ax.plot(run.times, err[d], lw=0.8)
    ax.axvline(run.times[0] + run.transient_cut, color="0.6", ls="--", lw=0.9)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("tracking error [m]")
    _save(fig, stem)
    rows = []
    step = max(1, err.shape[1] // 4000)  # keep the csv a readable size
    for k in range(0, err.shape[1], step):
        rows.append([float(run.times[k])] + [float(err[d, k]) for d in range(run.n_drones)])
    _write_csv(f"{stem}.csv",
               ["t"] + [f"err_drone_{d}" for d in range(run.n_drones)], rows)


def bode(table: FrequencyResponseTable, stem, analytic=None) -> None:
    """Magnitude/phase of the identified response, optionally vs an analytic model."""
    fig, (ax_m, ax_p) = plt.subplots(2, 1, figsize=(6.4, 5.2), sharex=True)
    for ax_i, label in zip(range(3), "xyz"):
        w = table.omegas[ax_i]
        ax_m.semilogx(w, 20 * np.log10(table.magnitudes[ax_i]), "o-", ms=3, label=label)
        ax_p.semilogx(w, np.degrees(table.phases[ax_i]), "o-", ms=3, label=label)
    if analytic is not None:
        w_dense = np.geomspace(table.omegas[0][0], table.omegas[0][-1], 200)
        h = np.array([analytic(w) for w in w_dense])
        ax_m.semilogx(w_dense, 20 * np.log10(np.abs(h)), "k--", lw=0.9, label="model")
        ax_p.semilogx(w_dense, np.degrees(np.unwrap(np.angle(h))), "k--", lw=0.9)
    ax_m.set_ylabel("magnitude [dB]")
    ax_p.set_ylabel("phase [deg]")
    ax_p.set_xlabel(r"$\omega$ [rad/s]")
    ax_m.legend(fontsize=8)
    _save(fig, stem)


def sweep_outcomes(records, stem) -> None:
    """Per-trial outcome stripe plus the distribution of conflict counts."""
    feas = np.array([r.feasible for r in records], dtype=bool)
    edges = np.array([max(r.initial_edges, 0) for r in records])
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9.0, 3.2),
                                   gridspec_kw={"width_ratios": [2.2, 1.0]})
    colors = np.where(feas, "tab:green", "tab:red")
    ax0.bar(np.arange(len(records)), edges + 1, color=colors, width=1.0)
    ax0.set_xlabel("trial")
    ax0.set_ylabel("1 + initial conflicts")
    ax0.set_title(f"feasible {feas.sum()}/{len(records)}")
    ax1.hist(edges, bins=np.arange(edges.max() + 2) - 0.5, color="0.5")
    ax1.set_xlabel("initial conflict edges")
    ax1.set_ylabel("trials")
    _save(fig, stem)
    _write_csv(
        f"{stem}.csv",
        ["trial", "feasible", "initial_edges", "sweeps", "k_final",
         "min_step_separation", "min_fine_separation", "assignment_cost"],
        [[r.trial, int(r.feasible), r.initial_edges, r.sweeps, r.k_final,
          float(r.min_step_separation), float(r.min_fine_separation),
          float(r.assignment_cost)] for r in records],
    )
