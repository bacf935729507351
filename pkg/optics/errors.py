"""
Exception types for the ghost-imaging bench.

Every error derives from ValueError as well as GhostImagingError, so callers that
only know about ValueError keep catching them.
"""

from typing import List, Optional


class GhostImagingError(Exception):
    """Base class for all bench errors"""


class GridTooSmallError(GhostImagingError, ValueError):
    """A grid does not cover the support it is meant to sample"""


class NyquistViolationError(GhostImagingError, ValueError):
    """A chirp phase changes by more than the allowed step between grid samples"""

    def __init__(self, grid_name: str, worst_step_rad: float, limit_rad: float):
        self.grid_name = grid_name
        self.worst_step_rad = worst_step_rad
        self.limit_rad = limit_rad
        super().__init__(
            f"{grid_name} grid undersamples the chirp: worst phase step "
            f"{worst_step_rad:.4f} rad > limit {limit_rad:.4f} rad"
        )


class DimensionMismatchError(GhostImagingError, ValueError):
    """Array lengths or kernel shapes do not line up"""


class DegenerateObjectError(GhostImagingError, ValueError):
    """The object transmits nothing, so the test arm is dark"""


class ConfigError(GhostImagingError, ValueError):
    """A scene config file could not be parsed"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{prefix}{message}")


class SceneValidationError(GhostImagingError, ValueError):
    """A scene breaks one or more physical consistency rules"""

    def __init__(self, violations: List):
        self.violations = list(violations)
        listing = "; ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} scene violation(s): {listing}")


class OracleError(GhostImagingError, ValueError):
    """The Monte Carlo oracle was asked for an unusable ensemble"""
