"""Isoperimetry inside Euclidean solid cones.

A cone here is the set of rays from the origin through a spherical domain.
The package computes exact isoperimetric candidates (vertex balls, interior
balls, boundary half-balls), certifies existence criteria, evaluates the
second-variation (index form) machinery on discrete hypersurfaces, and runs
a constrained perimeter minimizer that can be cross-checked against the
analytic candidates.
"""

__version__ = "0.1.0"

from .cones import (
    BoundaryPoint,
    Circular,
    ConeSpec,
    HalfSpace,
    Polyhedral,
    Sector,
    boundary_II,
    boundary_point,
    circular,
    contains,
    distance_to_boundary,
    halfspace,
    is_convex,
    polyhedral,
    sector,
    solid_angle,
    sphere_measure,
)
from .candidates import (
    CandidateRegion,
    ExistenceReport,
    boundary_half_ball,
    candidate_profile,
    existence_report,
    halfspace_profile,
    interior_ball,
    scale_candidate,
    vertex_ball,
)
from .surfaces import (
    DiscreteHypersurface,
    SurfaceQuantities,
    SurfaceValidationError,
    contact_angle_residual,
    measure,
    quantities,
    refine,
)
from .stability import (
    IndexFormReport,
    StabilityThresholds,
    boundary_identity,
    classify,
    index_form,
    minkowski_checks,
    profile_derivative_checks,
    stability_report,
    test_function,
)
from .optimize import (
    OptimizationConfig,
    OptimizationRun,
    minimize,
    profile_sweep,
    stationarity_report,
)
