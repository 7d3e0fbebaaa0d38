"""Simulator and analysis toolkit for continuous-time bounded-confidence opinion dynamics.

Agents hold scalar opinions and attract each other while closer than the
unit confidence threshold; the resulting flow has a discontinuous
right-hand side, handled here through its convexification at threshold
configurations (sliding modes included).  The package provides the
state-dependent interaction graph, the convexified vector field, an
event-driven integrator, cluster/equilibrium analysis and the robustness
threshold theory for cluster merging under one perturbing agent.
"""

from .analysis import (
    ClusterPartition,
    InvariantReport,
    extract_clusters,
    f_residual,
    is_equilibrium,
    monitor_invariants,
    predict_limit,
)
from .dynamics import SurfaceClass, hull_vertices, in_hull, sliding_weights, vector_field
from .errors import (
    BetaMismatchError,
    ConfigError,
    DegenerateSurfaceError,
    EventCascadeError,
    HksimError,
    HullSizeError,
    InvalidStateError,
    NoEventError,
)
from .graph import InteractionGraph, build_graph, connected_components, laplacian
from .integrator import (
    DenseSegment,
    Event,
    SolverConfig,
    Trajectory,
    flow_exact,
    integrate,
    locate_event,
)
from .robustness import (
    RobustnessReport,
    asymptotic_threshold,
    boundary_curve,
    find_merge_witness,
    is_robust,
    reduced_field,
    region_contains,
    simulate_perturbation,
    solve_tstar,
    threshold,
)

__version__ = "0.1.0"

__all__ = [
    "BetaMismatchError",
    "ClusterPartition",
    "ConfigError",
    "DegenerateSurfaceError",
    "DenseSegment",
    "Event",
    "EventCascadeError",
    "HksimError",
    "HullSizeError",
    "InteractionGraph",
    "InvalidStateError",
    "InvariantReport",
    "NoEventError",
    "RobustnessReport",
    "SolverConfig",
    "SurfaceClass",
    "Trajectory",
    "asymptotic_threshold",
    "boundary_curve",
    "build_graph",
    "connected_components",
    "extract_clusters",
    "f_residual",
    "find_merge_witness",
    "flow_exact",
    "hull_vertices",
    "in_hull",
    "integrate",
    "is_equilibrium",
    "is_robust",
    "laplacian",
    "locate_event",
    "monitor_invariants",
    "predict_limit",
    "reduced_field",
    "region_contains",
    "simulate_perturbation",
    "sliding_weights",
    "solve_tstar",
    "threshold",
    "vector_field",
]
