"""
Semi-discrete parallel refractors and reflectors.

A vertical bundle of rays leaving a domain Omega is refracted (or
reflected) by a surface built from ellipsoids (or paraboloids) so that
prescribed amounts of energy reach the points of a target.  Besides the
solver the package checks the differential and synthetic regularity
conditions on targets, ray traces solutions, and reproduces two numerical
counterexamples.
"""

from .errors import (
    AmbiguousIntersectionError,
    ConvergenceError,
    DomainError,
    InfeasibleAtomError,
    OutOfDomainError,
    PartialCurveError,
    RayMissError,
)
from .optics import (
    Cylinder,
    EllipsoidPiece,
    OpticalConfig,
    ParaboloidPiece,
    admissible_region_check,
    ellipsoid_derivatives,
    ellipsoid_height,
    focal_parameter,
    paraboloid_height_and_derivatives,
    reflection_direction,
    refraction_direction,
)
from .raytrace import counterexample_fig3, remark71_check, snell_refract, trace_bundle
from .regularity import (
    RegularityReport,
    aw_condition_numeric,
    classify_graph_target,
    ellipsoid_union_inclusion_check,
    G_hessian_closed_form,
    holder_exponent,
    min_condition_check,
    tube_inclusion_experiment,
    tube_measure_check,
)
from .solver import (
    PiecewiseSurface,
    SolveReport,
    SolverConfig,
    SourceDensity,
    solve_semidiscrete,
    tracing_measure,
)
from .targets import (
    DiscreteAtoms,
    GraphSurface,
    implicit_H_solve,
    ray_target_intersection,
    stretch_H,
    wedge_curve,
)

__version__ = "0.1.0"
