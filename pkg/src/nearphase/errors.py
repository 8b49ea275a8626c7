"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PoleError(DomainError):
    """A sphere pole was passed where tangent frames are undefined."""


class SingularityError(DomainError):
    """Evaluation requested at the singular point of a kernel (x = y)."""


class SolverError(RuntimeError):
    """A linear solve failed to converge; the message carries a condition report."""


class InconsistentDataError(ValueError):
    """Phaseless moduli violate the triangle/cosine bounds beyond tolerance."""


class InsufficientDataError(ValueError):
    """Too few usable samples for a statistically meaningful decision."""


class IllPosedConfigError(RuntimeError):
    """The wavenumber sits too close to a shell eigenvalue for the requested operation."""
