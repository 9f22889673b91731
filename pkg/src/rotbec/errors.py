"""Exception types shared across the solver modules."""


class RotbecError(Exception):
    """Base class for all rotbec errors."""


class NotNormalized(RotbecError):
    """A field that must have unit L2 norm does not."""


class NoConvergence(RotbecError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class Unstable(RotbecError):
    """The trap cannot confine particles at the requested rotation.

    Carries the witness grid point where the effective potential fails.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NotAxisymmetricTrap(RotbecError):
    """Azimuthal analysis requested for a trap without rotational symmetry."""


class InvalidState(RotbecError):
    """A density-matrix state violates its orthonormality/simplex invariants."""


class DimensionTooLarge(RotbecError):
    """A requested dense many-body computation exceeds the size cap."""


class NonFiniteScatteringLength(RotbecError):
    """The zero-energy solution has u' -> 0 at the potential range."""


class ConfigError(RotbecError):
    """A run configuration file is missing, malformed, or contains unknown keys."""
