"""Exception hierarchy shared by all modules."""


class DysonQSDError(Exception):
    """Base class for every error raised by this package."""


class CollisionConfiguration(DysonQSDError, ValueError):
    """Two coordinates coincide where a strictly ordered configuration is required."""


class InvalidAlpha(DysonQSDError, ValueError):
    pass


class InvalidParameter(DysonQSDError, ValueError):
    pass


class ProxNoConvergence(DysonQSDError, RuntimeError):
    """Newton solve of the Moreau-Yosida proximal problem exhausted its budget.

    Usually means ``dt`` is too large for the scheme or the penalty is too stiff.
    """

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class InvalidRegion(DysonQSDError, ValueError):
    pass


class InsufficientSurvivors(DysonQSDError, ValueError):
    """Fewer than three usable survival points in the fit window."""


class NonPositiveRate(DysonQSDError, ValueError):
    pass


class NoSurvivors(DysonQSDError, RuntimeError):
    pass


class EnsembleExtinct(DysonQSDError, RuntimeError):
    """Every Fleming-Viot particle left the region during the same step."""

    def __init__(self, message, generation=None):
        super().__init__(message)
        self.generation = generation


class BinningMismatch(DysonQSDError, ValueError):
    pass


class ParseError(DysonQSDError, ValueError):
    def __init__(self, message, line=None, key=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.key = key


class ValidationError(DysonQSDError, ValueError):
    def __init__(self, field, message=None):
        super().__init__(f"{field}: {message}" if message else field)
        self.field = field
