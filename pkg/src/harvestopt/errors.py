"""Exception types shared across the package.

The service layer maps these onto HTTP status codes, the CLI onto exit
codes, so they live in one place instead of per-module.
"""


class HarvestOptError(Exception):
    """Base class for all package errors."""


class GeometryError(HarvestOptError):
    pass


class TooFewPoints(GeometryError):
    """Fewer than three points supplied for a hull."""


class CollinearInput(GeometryError):
    """All candidate hull points lie on one line."""


class OriginOutside(GeometryError):
    """Ray origin is not strictly inside the polygon."""


class ResolutionTooCoarse(GeometryError):
    """Quadrature spacing produced fewer than the minimum node count."""


class TargetOnHullBoundary(HarvestOptError):
    """Spread constants are only defined for strictly interior targets."""


class TangentialCrossing(HarvestOptError):
    """Guard crossed with near-zero normal velocity; no event-time derivative."""


class StepTooLarge(HarvestOptError):
    """Two crossings of one guard could not be separated within a step."""


class ScenarioError(HarvestOptError):
    pass


class ParseError(ScenarioError):
    """Scenario file is syntactically malformed."""


class ValidationError(ScenarioError):
    """Scenario parsed but violates a model invariant."""


class NonFiniteGradient(HarvestOptError):
    """Gradient evaluation returned NaN or inf; carries the partial history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history
