"""Exception hierarchy shared across the library.

Validation failures (bad specs, bad configs, precondition violations) are
distinguished from numerical failures (blow-up, non-convergence, resolution
loss) so that callers -- the CLI in particular -- can map them to distinct
exit codes.
"""


class ChasymError(Exception):
    """Base class for all library errors."""


class ValidationError(ChasymError, ValueError):
    """Invalid input: spec, config, grid, or precondition violation."""


class UnsupportedFrameError(ValidationError):
    """A scaling frame outside the cases the theory pins down."""


class NumericalError(ChasymError, RuntimeError):
    """A numerical procedure failed: blow-up, non-convergence, noise floor."""


class BlowUpError(NumericalError):
    """The integrated field left the small-amplitude regime (NaN/overflow)."""

    def __init__(self, message, t=None, diagnostics=None):
        super().__init__(message)
        self.t = t
        self.diagnostics = diagnostics or {}


class BoundaryContaminationError(NumericalError):
    """Field tails at the box edge grew beyond the wrap-around budget."""

    def __init__(self, message, t=None, edge_ratio=None):
        super().__init__(message)
        self.t = t
        self.edge_ratio = edge_ratio


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach its target accuracy."""

    def __init__(self, message, achieved_error=None):
        super().__init__(message)
        self.achieved_error = achieved_error


class InterpolationError(NumericalError):
    """Band-limited interpolation outside its guaranteed-resolution range."""


class DegenerateDataError(NumericalError):
    """Data unusable for a fit (all zero, too few samples, reference ~ 0)."""
