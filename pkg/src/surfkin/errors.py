"""Exception types raised by surfkin.

Everything derives from SurfkinError so callers can catch the library's
failures in one clause while letting programming errors propagate.
"""


class SurfkinError(Exception):
    """Base class for all surfkin errors."""


class DomainError(SurfkinError):
    """Evaluation requested outside the classically allowed region
    (e.g. sigma_z at a height where e_z^2 <= W(z)) or with non-finite input."""


class RootError(SurfkinError):
    """A turning-point root could not be bracketed or refined."""


class QuadratureError(SurfkinError):
    """A quadrature failed its internal consistency check."""


class GridMismatch(SurfkinError):
    """Two objects built on incompatible grids were combined."""


class CFLViolation(SurfkinError):
    """Requested time step violates the advective stability bound."""


class StabilityError(SurfkinError):
    """Requested time step violates the diffusive stability bound."""


class NonConvergence(SurfkinError):
    """An iterative solve exceeded its iteration cap."""


class ResolutionError(SurfkinError):
    """Spatial resolution too coarse for the requested microstructure."""


class ParseError(SurfkinError):
    """A configuration file could not be parsed."""


class ValidationError(SurfkinError):
    """A parsed configuration contains invalid values.

    The message aggregates every offending key so a user can fix a file in
    one pass.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
