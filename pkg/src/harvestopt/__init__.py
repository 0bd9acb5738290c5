"""harvestopt: multi-agent data-harvesting trajectory optimization.

Agents ride parametric ellipses at unit speed over a field of
data-emitting targets. The package simulates the mission as a hybrid
system, differentiates the sample path exactly through its events, and
augments the objective with a potential-field term so gradient descent
keeps moving even when a trajectory triggers no collection events.
"""

__version__ = "0.1.0"

from .errors import (
    CollinearInput,
    HarvestOptError,
    NonFiniteGradient,
    ParseError,
    StepTooLarge,
    TangentialCrossing,
    TargetOnHullBoundary,
    TooFewPoints,
    ValidationError,
)
from .geometry import ConvexPolygon, QuadratureRule, convex_hull, quadrature_over
from .optimizer import OptHistory, gradient, objective, optimize
from .oracle import fd_gradient
from .potential_field import PotentialField, build_field, spread_constants
from .scenario import (
    OptimizerOptions,
    Scenario,
    SolverOptions,
    Target,
    dumps_scenario,
    load_bundled,
    load_scenario,
    loads_scenario,
)
from .simulation import Event, EventKind, SimTrace, simulate
from .trajectory import EllipseParams

__all__ = [
    "CollinearInput",
    "ConvexPolygon",
    "EllipseParams",
    "Event",
    "EventKind",
    "HarvestOptError",
    "NonFiniteGradient",
    "OptHistory",
    "OptimizerOptions",
    "ParseError",
    "PotentialField",
    "QuadratureRule",
    "Scenario",
    "SimTrace",
    "SolverOptions",
    "StepTooLarge",
    "TangentialCrossing",
    "Target",
    "TargetOnHullBoundary",
    "TooFewPoints",
    "ValidationError",
    "build_field",
    "convex_hull",
    "dumps_scenario",
    "fd_gradient",
    "gradient",
    "load_bundled",
    "load_scenario",
    "loads_scenario",
    "objective",
    "optimize",
    "quadrature_over",
    "simulate",
    "spread_constants",
    "__version__",
]
