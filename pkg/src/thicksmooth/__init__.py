"""Kernel smoothing of piecewise fields on thick polygonal domains.

Builds quadrature rules on polygonal domains, applies Markov and bistochastic
kernel integral operators to piecewise fields, checks domain thickness, and
turns discrete element floe snapshots into smooth mass, velocity and stress
fields.
"""

from .errors import (DegenerateTriangle, DegreeBelowFloor, EmptyBall, GridMismatch,
                     InsufficientSamples, InvalidRegion, InvariantViolation,
                     NonFiniteIntegrand, NonTerminatingRefinement, NumericGuardError,
                     QuadratureDominates, RejectionStall, SchemaError, ThickSmoothError,
                     UnsupportedShape, ValidationError)
from .geometry import (Polygon, PolygonalDomain, Triangle, Triangulation, contains,
                       load_domain, rectangle, save_domain, triangle_metrics, triangulate,
                       unit_square)
from .kernels import ScaledKernel, ShapeFunction, ShapeKind, kernel_eval, shape_eval
from .operators import (BISTOCHASTIC, MARKOV, EvaluationGrid, FieldPiece, GridResult,
                        PiecewiseField, SmoothingContext, bistochastic_smooth,
                        convergence_study, degree, evaluate_grid, markov_smooth)
from .quadrature import (QuadratureRule, integrate, monte_carlo_error_estimate,
                         rule_from_triangulation, rule_monte_carlo,
                         triangulation_error_bound)
from .thickness import (IntervalUnionSet, ThicknessReport, doubling_ratio, lebesgue_density,
                        thickness_scan, tophat_density)

__all__ = [
    "BISTOCHASTIC", "MARKOV", "DegenerateTriangle", "DegreeBelowFloor", "EmptyBall",
    "EvaluationGrid", "FieldPiece", "GridMismatch", "GridResult", "InsufficientSamples",
    "IntervalUnionSet", "InvalidRegion", "InvariantViolation", "NonFiniteIntegrand",
    "NonTerminatingRefinement", "NumericGuardError", "PiecewiseField", "Polygon",
    "PolygonalDomain", "QuadratureDominates", "QuadratureRule", "RejectionStall",
    "ScaledKernel", "SchemaError", "ShapeFunction", "ShapeKind", "SmoothingContext",
    "ThickSmoothError", "ThicknessReport", "Triangle", "Triangulation", "UnsupportedShape",
    "ValidationError", "bistochastic_smooth", "contains", "convergence_study", "degree",
    "doubling_ratio", "evaluate_grid", "integrate", "kernel_eval", "lebesgue_density",
    "load_domain", "markov_smooth", "monte_carlo_error_estimate", "rectangle",
    "rule_from_triangulation", "rule_monte_carlo", "save_domain", "shape_eval",
    "thickness_scan", "tophat_density", "triangle_metrics", "triangulate",
    "triangulation_error_bound", "unit_square",
]
