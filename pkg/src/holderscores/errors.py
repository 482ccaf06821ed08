"""Exception types shared across the package."""


class HolderError(Exception):
    """Base class for package-specific errors."""


class StructuralError(HolderError):
    """Arrays or grids that should line up do not (shape / grid mismatch)."""


class DomainError(HolderError):
    """An argument lies outside its mathematically valid range."""


class ConfigError(HolderError):
    """Unknown family or kind name, or a malformed configuration value."""


class DegenerateInputError(HolderError):
    """An input makes the score undefined, e.g. a vanishing power integral."""


class UnsupportedFamilyError(HolderError):
    """The score family cannot be used for the requested operation."""


class SingularHessianError(HolderError):
    """Objective curvature matrix is numerically singular."""
