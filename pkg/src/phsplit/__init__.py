"""Invariant splittings of partially hyperbolic toral maps, their regularity and parameter dependence."""
from .dynamics import FamilySpec, MapSpec, map_zoo
from .errors import (BoundViolation, ChartOverflowError, DegeneracyError, DivergenceError,
                     MisalignedSplittingError, NonConvergenceError, SplittingError)
from .family import (dynamically_defined_curve, eu_along_ddc, pc_series, theoremC_identity_check,
                     theoremD_derivative)
from .manifold import build_chart, displacement, wrap
from .partial_deriv import dEu_dEc_series, regularity_estimate
from .splitting import bunching_report, center_plane, plane_distance, splitting_at, unstable_plane

__all__ = [
    "BoundViolation", "ChartOverflowError", "DegeneracyError", "DivergenceError", "FamilySpec", "MapSpec",
    "MisalignedSplittingError", "NonConvergenceError", "SplittingError", "build_chart", "bunching_report",
    "center_plane", "dEu_dEc_series", "displacement", "dynamically_defined_curve", "eu_along_ddc", "map_zoo",
    "pc_series", "plane_distance", "regularity_estimate", "splitting_at", "theoremC_identity_check",
    "theoremD_derivative", "unstable_plane", "wrap",
]
