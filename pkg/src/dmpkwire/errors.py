"""Exception hierarchy shared across the package."""


class DmpkWireError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DmpkWireError):
    """Invalid or inconsistent configuration input."""


class ModelError(DmpkWireError):
    """The physical model violates one of its structural assumptions."""


class EllipticViolation(ModelError):
    """A channel's longitudinal energy lies outside the open band (-2, 2)."""


class AssumptionViolation(ModelError):
    """The no-degenerate-level-spacings condition fails for the channel basis."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = violations or []


class SingularBasis(ModelError):
    """A channel is grazing (velocity below tolerance); the wave transform is singular."""


class NumericalError(DmpkWireError):
    """A numerical procedure failed or left its validity domain."""


class NotInGroup(NumericalError):
    """A matrix handed to a transport extraction fails its group-residual gate."""


class DegenerateSpectrum(NumericalError):
    """Transmission eigenvalues too close for a spectral formula to be evaluated."""


class BlockSingular(NumericalError):
    """A transfer-matrix block that must be inverted is numerically singular."""


class StepTooLarge(NumericalError):
    """An SDE integrator could not maintain its invariants at the configured step."""


class InsufficientSamples(NumericalError):
    """Monte Carlo resolution is too poor for the requested comparison."""
