"""Exception taxonomy shared by all modules.

Exit-code mapping used by the command line driver: UsageError -> 2,
NumericalError -> 3, MeshError -> 4.
"""


class VemFetiError(Exception):
    """Base class for all package errors."""


class UsageError(VemFetiError):
    """Invalid arguments, config keys, or option combinations."""


class EmptyPrimalSpaceError(UsageError):
    """A primal variant was requested on a decomposition with no candidate
    constraints (e.g. edge or face averages with a single subdomain)."""


class NumericalError(VemFetiError):
    """Numerical failure: loss of positive definiteness or non-convergence."""


class SpdError(NumericalError):
    """Matrix handed to the Cholesky wrapper is not positive definite."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class IndefiniteOperatorError(NumericalError):
    """A PCG inner product that must be positive came out non-positive."""


class NonConvergenceError(NumericalError):
    """Iteration budget exhausted before the tolerance was met."""


class MeshError(VemFetiError):
    """Invalid mesh data or unsupported geometry."""


class ConformityError(MeshError):
    """Face-to-face mismatch between neighbouring cells or subdomains."""


class ParseError(MeshError):
    """Malformed mesh file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class UnsupportedFeatureError(MeshError):
    """Geometry outside the supported class (e.g. nonconvex cells)."""


class DegenerateGeometryError(MeshError):
    """Zero/negative volumes, nonplanar faces, or collapsed entities."""
