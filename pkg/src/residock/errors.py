"""Exception types raised across the package."""


class ResidockError(Exception):
    """Base class for all package errors."""


class FrameMismatchError(ResidockError):
    pass


class NonFiniteStateError(ResidockError):
    pass


class SingularInnovationError(ResidockError):
    pass


class GeometryError(ResidockError):
    pass


class InconsistentLayoutError(ResidockError):
    pass


class LayoutValidationError(ResidockError):
    """Raised by the layout loader; ``problems`` lists every violated rule."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class IllegalTransitionError(ResidockError):
    pass


class ConfigError(ResidockError):
    pass


class SchemaMismatchError(ResidockError):
    pass
