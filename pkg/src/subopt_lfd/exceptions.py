"""Exception types raised across the package."""


class InvalidActionError(ValueError):
    """An action is outside the environment's action space."""


class DimensionError(ValueError):
    """Array shapes do not match what an operation expects."""


class NonFiniteError(FloatingPointError):
    """A loss, gradient or reward evaluated to NaN or infinity."""

    def __init__(self, message, value=None):
        super().__init__(message if value is None else f"{message}: {value!r}")
        self.value = value


class ProvenanceError(ValueError):
    """Artifacts from different pipeline runs were combined."""

