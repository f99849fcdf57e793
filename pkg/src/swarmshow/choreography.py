"""Choreography files, the plan pipeline, and plan artifacts.

A choreography file (JSON) alternates primitive segments with transition
segments.  Planning composes, per transition: goal assignment, bounded
candidate generation and collision resolution, while tracking which physical
drone plays which role of each primitive.  The resulting plan artifact stores
primitive segments as Fourier parameters and transitions as polynomial
coefficients at full precision, so a reloaded artifact reproduces the planned
trajectories bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sync
from .assignment import Assignment, TransitionSpec, assign, boundary_conditions
from .collision import CollisionEllipsoid, DeviationWeight, TransitionPlan, resolve_all
from .primitives import (
    MotionPrimitive,
    RotationSpec,
    WaveMode,
    WaveSpec,
    from_coefficients,
    from_rotation,
    from_wave,
    helix_on_cone,
)
from .sim import PrimitivePhase, TransitionPhase
from .sync import CompensatedPrimitive, FrequencyResponseTable
from .trajopt import (
    InfeasibleTransitionError,
    PolynomialTrajectory,
    ReducedTransitionProblem,
    StateBounds,
    generate_candidate,
)

SHOW_SCHEMA = "swarmshow-show/1"
PLAN_SCHEMA = "swarmshow-plan/1"

DEFAULT_LIMITS = {"vel_max": [3.5, 3.5, 3.5], "acc_norm_max": 10.0, "jerk_max": [80.0, 80.0, 80.0]}


class SchemaError(ValueError):
    """Invalid choreography/plan document; carries the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _expect(obj, key, path, kind=None, optional=False, default=None):
    if key not in obj:
        if optional:
            return default
        raise SchemaError(f"{path}.{key}", "missing required field")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        names = kind.__name__ if not isinstance(kind, tuple) else "/".join(k.__name__ for k in kind)
        raise SchemaError(f"{path}.{key}", f"expected {names}, got {type(val).__name__}")
    return val


def _number(obj, key, path, optional=False, default=None):
    val = _expect(obj, key, path, (int, float), optional, default)
    if val is not None and isinstance(val, bool):
        raise SchemaError(f"{path}.{key}", "expected a number")
    return val


def _vector(obj, key, path, length, optional=False, default=None):
    val = _expect(obj, key, path, list, optional)
    if val is None:
        return default
    if len(val) != length or not all(isinstance(v, (int, float)) for v in val):
        raise SchemaError(f"{path}.{key}", f"expected a list of {length} numbers")
    return [float(v) for v in val]


@dataclass(frozen=True)
class TransitionConfig:
    t_s: float
    t_e: float
    degree: int = 14
    k0: int = 10
    max_iters: int = 10
    w_diag: tuple[float, float, float] = (1.0, 1.0, 1.0)
    assignment: tuple[int, ...] | None = None
    eps1: float = 1e-6
    eps2: float = 1e-6


@dataclass(frozen=True)
class Choreography:
    n_drones: int
    volume_min: np.ndarray
    volume_max: np.ndarray
    ellipsoid: CollisionEllipsoid
    limits: dict
    segments: tuple  # ("primitive", MotionPrimitive) | ("transition", TransitionConfig)
    response_table: str | None = None

    def state_bounds(self, k: int) -> StateBounds:
        return StateBounds(
            pos_min=self.volume_min,
            pos_max=self.volume_max,
            vel_max=self.limits["vel_max"],
            acc_norm_max=self.limits["acc_norm_max"],
            jerk_max=self.limits["jerk_max"],
            K=k,
        )


def _parse_wave(obj, path, n_drones) -> WaveSpec:
    extent = _vector(obj, "extent", path, 2)
    modes_raw = _expect(obj, "modes", path, list)
    modes = []
    for i, m in enumerate(modes_raw):
        mpath = f"{path}.modes[{i}]"
        mu = _vector(m, "mu", mpath, 2)
        if mu[0] < 1 or mu[1] < 1 or mu[0] != int(mu[0]) or mu[1] != int(mu[1]):
            raise SchemaError(f"{mpath}.mu", "mode indices must be integers >= 1")
        modes.append(WaveMode(int(mu[0]), int(mu[1]),
                              _vector(m, "a_amp", mpath, 3), _vector(m, "b_amp", mpath, 3)))
    sites_raw = _expect(obj, "sites", path, list)
    if len(sites_raw) != n_drones:
        raise SchemaError(f"{path}.sites", f"expected {n_drones} sites, got {len(sites_raw)}")
    sites = []
    for i, s in enumerate(sites_raw):
        if not (isinstance(s, list) and len(s) == 2):
            raise SchemaError(f"{path}.sites[{i}]", "expected [s1, s2]")
        sites.append([float(s[0]), float(s[1])])
    try:
        return WaveSpec(
            a=extent[0], b=extent[1],
            h=_number(obj, "height", path),
            c_speed=_number(obj, "speed", path),
            modes=tuple(modes), sites=np.array(sites),
            origin=np.array(_vector(obj, "origin", path, 3, optional=True, default=[0.0, 0.0, 0.0])),
        )
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from exc


def _parse_rotation(obj, path, n_drones) -> RotationSpec:
    origin = _vector(obj, "origin", path, 3)
    rot = _expect(obj, "rotation", path, list, optional=True)
    if rot is None:
        R = np.eye(3)
    else:
        if len(rot) != 3:
            raise SchemaError(f"{path}.rotation", "expected a 3x3 matrix")
        R = np.array([_vector({"row": r}, "row", f"{path}.rotation[{i}]", 3)
                      for i, r in enumerate(rot)])
    if "body_points" in obj:
        pts_raw = _expect(obj, "body_points", path, list)
        if len(pts_raw) != n_drones:
            raise SchemaError(f"{path}.body_points", f"expected {n_drones} points")
        pts = np.array([_vector({"p": p}, "p", f"{path}.body_points[{i}]", 3)
                        for i, p in enumerate(pts_raw)])
    elif "helix" in obj:
        hx = obj["helix"]
        hpath = f"{path}.helix"
        try:
            pts = helix_on_cone(
                n_drones,
                _vector(hx, "base_center", hpath, 3, optional=True, default=[0.0, 0.0, 0.0]),
                base_radius=_number(hx, "base_radius", hpath),
                height=_number(hx, "height", hpath),
                turns=_number(hx, "turns", hpath),
                top_radius=_number(hx, "top_radius", hpath, optional=True, default=0.0),
                phase=_number(hx, "phase", hpath, optional=True, default=0.0),
            )
        except ValueError as exc:
            raise SchemaError(hpath, str(exc)) from exc
    else:
        raise SchemaError(path, "rotation needs either 'body_points' or 'helix'")
    try:
        return RotationSpec(rho_o=np.array(origin), R_IBo=R,
                            omega_z=_number(obj, "omega_z", path), body_points=pts)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from exc


def _parse_raw(obj, path, n_drones) -> MotionPrimitive:
    freqs = _expect(obj, "frequencies", path, list)
    centers = _expect(obj, "centers", path, list)
    if len(centers) != n_drones:
        raise SchemaError(f"{path}.centers", f"expected {n_drones} centers")
    a = _expect(obj, "a", path, list)
    b = _expect(obj, "b", path, list)
    r = obj.get("r")
    t0 = _number(obj, "_t0", path)  # filled by caller
    tf = _number(obj, "_tf", path)
    try:
        return from_coefficients(t0, tf, freqs, centers, a, b, r)
    except (ValueError, IndexError) as exc:
        raise SchemaError(path, str(exc)) from exc


def _parse_primitive_segment(seg, path, n_drones) -> MotionPrimitive:
    t0 = _number(seg, "t0", path)
    tf = _number(seg, "tf", path)
    kinds = [k for k in ("wave", "rotation", "raw") if k in seg]
    if len(kinds) != 1:
        raise SchemaError(path, "primitive segment needs exactly one of 'wave', 'rotation', 'raw'")
    kind = kinds[0]
    try:
        if kind == "wave":
            return from_wave(_parse_wave(seg["wave"], f"{path}.wave", n_drones), t0, tf)
        if kind == "rotation":
            return from_rotation(_parse_rotation(seg["rotation"], f"{path}.rotation", n_drones), t0, tf)
        raw = dict(seg["raw"])
        raw["_t0"] = t0
        raw["_tf"] = tf
        return _parse_raw(raw, f"{path}.raw", n_drones)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from exc


def _parse_transition_segment(seg, path, n_drones, base_dir: Path) -> TransitionConfig:
    w = _vector(seg, "w_diag", path, 3, optional=True, default=[1.0, 1.0, 1.0])
    perm = None
    if "assignment" in seg:
        value = seg["assignment"]
        if isinstance(value, str):
            perm_path = (base_dir / value) if not Path(value).is_absolute() else Path(value)
            try:
                value = json.loads(perm_path.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise SchemaError(f"{path}.assignment", f"cannot read permutation file: {exc}")
            if isinstance(value, dict):
                value = value.get("assignment")
        if not isinstance(value, list):
            raise SchemaError(f"{path}.assignment", "expected a permutation list")
        perm = tuple(int(v) for v in value)
        if sorted(perm) != list(range(n_drones)):
            raise SchemaError(f"{path}.assignment", "not a permutation of 0..N-1")
    degree = int(_number(seg, "degree", path, optional=True, default=14))
    if degree < 9:
        raise SchemaError(f"{path}.degree", "degree must be >= 9")
    return TransitionConfig(
        t_s=_number(seg, "t_s", path),
        t_e=_number(seg, "t_e", path),
        degree=degree,
        k0=int(_number(seg, "k0", path, optional=True, default=10)),
        max_iters=int(_number(seg, "max_iters", path, optional=True, default=10)),
        w_diag=tuple(w),
        assignment=perm,
        eps1=_number(seg, "eps1", path, optional=True, default=1e-6),
        eps2=_number(seg, "eps2", path, optional=True, default=1e-6),
    )


def load_choreography(path) -> Choreography:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise SchemaError(str(path), f"cannot read file: {exc}")
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg)
    if not isinstance(doc, dict):
        raise SchemaError("$", "top level must be an object")
    schema = _expect(doc, "schema", "$", str)
    if schema != SHOW_SCHEMA:
        raise SchemaError("$.schema", f"expected {SHOW_SCHEMA!r}, got {schema!r}")
    n = int(_number(doc, "fleet_size", "$"))
    if n < 1:
        raise SchemaError("$.fleet_size", "must be >= 1")
    vol = _expect(doc, "volume", "$", dict)
    vmin = np.array(_vector(vol, "min", "$.volume", 3))
    vmax = np.array(_vector(vol, "max", "$.volume", 3))
    if np.any(vmin >= vmax):
        raise SchemaError("$.volume", "min must be componentwise below max")
    radii = _vector(doc, "ellipsoid_radii", "$", 3)
    if any(r <= 0 for r in radii):
        raise SchemaError("$.ellipsoid_radii", "radii must be positive")
    limits = dict(DEFAULT_LIMITS)
    if "limits" in doc:
        lim = _expect(doc, "limits", "$", dict)
        if "vel_max" in lim:
            limits["vel_max"] = _vector(lim, "vel_max", "$.limits", 3)
        if "acc_norm_max" in lim:
            limits["acc_norm_max"] = _number(lim, "acc_norm_max", "$.limits")
        if "jerk_max" in lim:
            limits["jerk_max"] = _vector(lim, "jerk_max", "$.limits", 3)

    segs_raw = _expect(doc, "segments", "$", list)
    if not segs_raw:
        raise SchemaError("$.segments", "needs at least one segment")
    segments = []
    for i, seg in enumerate(segs_raw):
        spath = f"$.segments[{i}]"
        if not isinstance(seg, dict):
            raise SchemaError(spath, "segment must be an object")
        kind = _expect(seg, "type", spath, str)
        if kind == "primitive":
            segments.append(("primitive", _parse_primitive_segment(seg, spath, n)))
        elif kind == "transition":
            segments.append(("transition", _parse_transition_segment(seg, spath, n, path.parent)))
        else:
            raise SchemaError(f"{spath}.type", f"unknown segment type {kind!r}")

    # Alternation and contiguity: primitive (transition primitive)*.
    if segments[0][0] != "primitive" or segments[-1][0] != "primitive":
        raise SchemaError("$.segments", "show must start and end with a primitive")
    for i, ((ka, a), (kb, b)) in enumerate(zip(segments, segments[1:])):
        if ka == kb:
            raise SchemaError(
                f"$.segments[{i + 1}]", f"two consecutive {ka} segments; they must alternate"
            )
        if ka == "primitive":
            if abs(b.t_s - a.tf) > b.eps1:
                raise SchemaError(
                    f"$.segments[{i + 1}].t_s",
                    f"transition start {b.t_s} not within eps1={b.eps1} of primitive end {a.tf}",
                )
        else:
            if abs(a.t_e - b.t0) > a.eps2:
                raise SchemaError(
                    f"$.segments[{i + 1}].t0",
                    f"primitive start {b.t0} not within eps2={a.eps2} of transition end {a.t_e}",
                )
    table = doc.get("response_table")
    if table is not None and not isinstance(table, str):
        raise SchemaError("$.response_table", "expected a path string")
    return Choreography(
        n_drones=n, volume_min=vmin, volume_max=vmax,
        ellipsoid=CollisionEllipsoid.from_radii(*radii),
        limits=limits, segments=tuple(segments), response_table=table,
    )


@dataclass(frozen=True)
class PlannedTransition:
    config: TransitionConfig
    assignment: Assignment
    plan: TransitionPlan
    roles_before: tuple[int, ...]  # drone -> role in outgoing primitive
    roles_after: tuple[int, ...]  # drone -> role in incoming primitive


@dataclass(frozen=True)
class PlanResult:
    choreography: Choreography
    segments: tuple  # ("primitive", MotionPrimitive, roles) | ("transition", PlannedTransition)
    feasible: bool
    log: tuple[str, ...] = field(default=())


def plan_choreography(choreo: Choreography, seed: int = 0) -> PlanResult:
    """Run assignment, candidate generation and collision resolution per
    transition, tracking role handoffs across the show."""
    n = choreo.n_drones
    roles = tuple(range(n))
    out_segments = []
    log: list[str] = []
    feasible = True
    transition_index = 0
    for i, (kind, seg) in enumerate(choreo.segments):
        if kind == "primitive":
            out_segments.append(("primitive", seg, roles))
            continue
        transition_index += 1
        cfg: TransitionConfig = seg
        mp1 = choreo.segments[i - 1][1]
        mp2 = choreo.segments[i + 1][1]
        spec = TransitionSpec(mp1, mp2, cfg.t_s, cfg.t_e, cfg.eps1, cfg.eps2)
        assignment = assign(spec, degree=cfg.degree, permutation=cfg.assignment)
        log.append(
            f"transition={transition_index} assignment_cost={assignment.total_cost!r} "
            f"external={int(cfg.assignment is not None)}"
        )
        bounds = choreo.state_bounds(cfg.k0)
        bcs, cands, probs = [], [], []
        roles_before = roles
        roles_after = tuple(assignment.perm[r] for r in roles)
        try:
            for d in range(n):
                alpha, beta = roles_before[d], roles_after[d]
                bc = boundary_conditions(spec, alpha, beta)
                _check_boundary_states(bc, bounds, d, transition_index)
                prob = ReducedTransitionProblem(bc, cfg.degree, cfg.t_s, cfg.t_e)
                bcs.append(bc)
                probs.append(prob)
                cands.append(
                    generate_candidate(bc, bounds, cfg.degree, cfg.t_s, cfg.t_e, problem=prob)
                )
        except InfeasibleTransitionError as exc:
            feasible = False
            log.append(f"transition={transition_index} candidate_infeasible: {exc}")
            placeholder = TransitionPlan(
                assignment=assignment, candidates=tuple(cands), trajectories=tuple(cands),
                feasible=False, k_final=cfg.k0, sweeps=0,
                min_step_separation=float("nan"), min_fine_separation=float("nan"),
                residual_conflicts=(), log=(f"candidate_infeasible: {exc}",),
            )
            out_segments.append(("transition", PlannedTransition(
                cfg, assignment, placeholder, roles_before, roles_after)))
            roles = roles_after
            continue
        plan = resolve_all(
            cands, bcs, bounds, choreo.ellipsoid,
            weight=DeviationWeight(np.array(cfg.w_diag)),
            k0=cfg.k0, max_iters=cfg.max_iters,
            problems=probs, assignment=assignment, seed=seed,
        )
        feasible = feasible and plan.feasible
        for line in plan.log:
            log.append(f"transition={transition_index} {line}")
        out_segments.append(("transition", PlannedTransition(
            cfg, assignment, plan, roles_before, roles_after)))
        roles = roles_after
    return PlanResult(choreography=choreo, segments=tuple(out_segments),
                      feasible=feasible, log=tuple(log))


def _check_boundary_states(bc, bounds: StateBounds, drone: int, transition: int):
    msgs = []
    for name, state in (("start", bc.start_state), ("end", bc.end_state)):
        if np.any(state[0] < bounds.pos_min - 1e-9) or np.any(state[0] > bounds.pos_max + 1e-9):
            msgs.append(f"{name} position outside flight volume")
        if np.any(np.abs(state[1]) > bounds.vel_max + 1e-9):
            msgs.append(f"{name} velocity exceeds vel_max")
        if np.linalg.norm(state[2]) > bounds.acc_norm_max + 1e-9:
            msgs.append(f"{name} acceleration exceeds acc_norm_max")
        if np.any(np.abs(state[3]) > bounds.jerk_max + 1e-9):
            msgs.append(f"{name} jerk exceeds jerk_max")
    if msgs:
        raise InfeasibleTransitionError(
            f"transition {transition} drone {drone} boundary state "
            f"({'; '.join(msgs)})", 0.0
        )


# ---------------------------------------------------------------------------
# Plan artifacts


def _floats(arr) -> list:
    a = np.asarray(arr, dtype=float)
    if a.ndim == 1:
        return [float(v) for v in a]
    return [_floats(row) for row in a]


def plan_to_document(result: PlanResult) -> dict:
    """Serializable artifact: per-drone Fourier/polynomial parameters."""
    choreo = result.choreography
    segments = []
    for entry in result.segments:
        if entry[0] == "primitive":
            _, mp, roles = entry
            drones = []
            for d in range(choreo.n_drones):
                role = mp.drones[roles[d]]
                drones.append({
                    "role": int(roles[d]),
                    "r": _floats(role.r),
                    "c": _floats(role.c),
                    "a": _floats(role.a),
                    "b": _floats(role.b),
                })
            segments.append({
                "type": "primitive",
                "t0": float(mp.t0),
                "tf": float(mp.tf),
                "frequencies": _floats(mp.frequencies),
                "drones": drones,
            })
        else:
            pt: PlannedTransition = entry[1]
            # trajectories are drone-ordered already
            segments.append({
                "type": "transition",
                "t_s": float(pt.config.t_s),
                "t_e": float(pt.config.t_e),
                "degree": int(pt.config.degree),
                "k0": int(pt.config.k0),
                "k_final": int(pt.plan.k_final),
                "w_diag": _floats(pt.config.w_diag),
                "feasible": bool(pt.plan.feasible),
                "assignment": [int(v) for v in pt.assignment.perm],
                "assignment_cost": float(pt.assignment.total_cost),
                "drones": [{"coeffs": _floats(tr.coeffs)} for tr in pt.plan.trajectories],
            })
    ell = result.choreography.ellipsoid.E
    return {
        "schema": PLAN_SCHEMA,
        "fleet_size": choreo.n_drones,
        "t_start": float(result.segments[0][1].t0),
        "t_end": float(result.segments[-1][1].tf),
        "ellipsoid_radii": _floats(np.diag(ell)),
        "feasible": bool(result.feasible),
        "segments": segments,
    }


def dump_document(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def write_plan_artifacts(result: PlanResult, out_dir) -> dict:
    """Write plan.json, resolution.log and report.json; returns the document."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = plan_to_document(result)
    (out / "plan.json").write_text(dump_document(doc))
    write_drone_files(doc, out)
    (out / "resolution.log").write_text("".join(line + "\n" for line in result.log))
    report = {
        "feasible": bool(result.feasible),
        "transitions": [
            {
                "t_s": float(pt.config.t_s),
                "t_e": float(pt.config.t_e),
                "feasible": bool(pt.plan.feasible),
                "sweeps": int(pt.plan.sweeps),
                "k_final": int(pt.plan.k_final),
                "min_step_separation": float(pt.plan.min_step_separation),
                "min_fine_separation": float(pt.plan.min_fine_separation),
                "residual_conflicts": [list(e) for e in pt.plan.residual_conflicts],
                "assignment_cost": float(pt.assignment.total_cost),
            }
            for pt in (entry[1] for entry in result.segments if entry[0] == "transition")
        ],
    }
    (out / "report.json").write_text(dump_document(report))
    return doc


def drone_document(doc: dict, drone: int) -> dict:
    """One drone's piecewise trajectory extracted from a plan artifact."""
    segments = []
    for seg in doc["segments"]:
        if seg["type"] == "primitive":
            role = seg["drones"][drone]
            entry = {
                "kind": "primitive",
                "t0": seg["t0"],
                "tf": seg["tf"],
                "frequencies": seg["frequencies"],
                "c": role["c"],
                "a": role["a"],
                "b": role["b"],
            }
            if "kappa" in seg:
                entry["kappa"] = seg["kappa"]
                entry["phi"] = seg["phi"]
            segments.append(entry)
        else:
            segments.append({
                "kind": "transition",
                "t_s": seg["t_s"],
                "t_e": seg["t_e"],
                "degree": seg["degree"],
                "coeffs": seg["drones"][drone]["coeffs"],
            })
    return {
        "schema": "swarmshow-drone/1",
        "drone": drone,
        "t_start": doc["t_start"],
        "t_end": doc["t_end"],
        "segments": segments,
    }


def write_drone_files(doc: dict, out_dir) -> None:
    """Per-drone piecewise trajectory files under <out>/drones/."""
    drones_dir = Path(out_dir) / "drones"
    drones_dir.mkdir(parents=True, exist_ok=True)
    for d in range(doc["fleet_size"]):
        (drones_dir / f"drone_{d:02d}.json").write_text(
            dump_document(drone_document(doc, d))
        )


def load_plan_document(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise SchemaError(str(path), f"cannot read file: {exc}")
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg)
    if not isinstance(doc, dict) or doc.get("schema") != PLAN_SCHEMA:
        raise SchemaError("$.schema", f"expected a {PLAN_SCHEMA!r} artifact")
    return doc


def primitive_from_segment(seg: dict) -> MotionPrimitive | CompensatedPrimitive:
    drones = seg["drones"]
    mp = from_coefficients(
        seg["t0"], seg["tf"], seg["frequencies"],
        centers=[d["c"] for d in drones],
        a_coeffs=[d["a"] for d in drones],
        b_coeffs=[d["b"] for d in drones],
        r_vectors=[d["r"] for d in drones],
    )
    if "kappa" in seg:
        return CompensatedPrimitive(
            base=mp,
            kappa=np.array(seg["kappa"]),
            phi=np.array(seg["phi"]),
            extrapolated=np.array(seg.get("extrapolated", np.zeros((mp.n_modes, 3), bool))),
        )
    return mp


def trajectories_from_segment(seg: dict) -> list[PolynomialTrajectory]:
    return [
        PolynomialTrajectory(seg["t_s"], seg["t_e"], int(seg["degree"]), np.array(d["coeffs"]))
        for d in seg["drones"]
    ]


def schedule_from_document(doc: dict):
    """sim-ready schedule (PrimitivePhase / TransitionPhase) from an artifact."""
    schedule = []
    for seg in doc["segments"]:
        if seg["type"] == "primitive":
            schedule.append(PrimitivePhase(primitive_from_segment(seg)))
        else:
            schedule.append(TransitionPhase(tuple(trajectories_from_segment(seg))))
    return schedule


def compensate_document(doc: dict, table: FrequencyResponseTable) -> tuple[dict, dict]:
    """New artifact with kappa/phi on every primitive segment.

    Transition segments are carried over untouched (the same objects, so they
    re-serialize byte-identically).  Returns (document, warnings).
    """
    out_segments = []
    warnings = {"extrapolated_modes": 0}
    for seg in doc["segments"]:
        if seg["type"] != "primitive":
            out_segments.append(seg)
            continue
        mp = primitive_from_segment(seg)
        base = mp.base if isinstance(mp, CompensatedPrimitive) else mp
        comp = sync.compensate(base, table)
        new_seg = dict(seg)
        new_seg["kappa"] = _floats(comp.kappa)
        new_seg["phi"] = _floats(comp.phi)
        new_seg["extrapolated"] = [[bool(v) for v in row] for row in comp.extrapolated]
        warnings["extrapolated_modes"] += int(np.count_nonzero(comp.extrapolated))
        out_segments.append(new_seg)
    new_doc = dict(doc)
    new_doc["segments"] = out_segments
    new_doc["compensated"] = True
    return new_doc, warnings
