"""Planning, synchronization and simulation toolkit for periodic drone-show
choreographies: parametric swarm motion primitives, minimum-snap transitions
with optimal goal assignment and sequential collision resolution, frequency-
response compensation, and a linear fleet simulator."""

from .assignment import Assignment, TransitionSpec, assign, build_cost_matrix, hungarian
from .collision import (
    CollisionEllipsoid,
    CollisionGraph,
    DeviationWeight,
    TransitionPlan,
    build_graph,
    pair_separation,
    resolve_all,
    resolve_one,
)
from .primitives import (
    DroneRole,
    MotionPrimitive,
    RotationSpec,
    WaveMode,
    WaveSpec,
    dispersion,
    from_coefficients,
    from_rotation,
    from_wave,
    helix_on_cone,
)
from .sim import (
    AxisPlant,
    PrimitivePhase,
    SwarmRun,
    TransitionPhase,
    VehicleModel,
    run_choreography,
    step_response,
    synthetic_bode,
)
from .sync import (
    CompensatedPrimitive,
    EstimationError,
    FrequencyResponseTable,
    compensate,
    estimate_response,
    fit_phasors,
    lookup,
)
from .trajopt import (
    BoundaryConditions,
    InfeasibleTransitionError,
    NumericalError,
    PolynomialTrajectory,
    StateBounds,
    eval_poly,
    generate_candidate,
    kkt_residual,
    snap_cost,
    snap_hessian,
    solve_min_snap,
)

__version__ = "0.1.0"
