"""Exception hierarchy shared across the package.

Every error raised on a numerical failure path derives from FriedrichsError
so callers (and the CLI) can distinguish "the computation could not be
completed" from programming mistakes.  Configuration problems raise
ConfigError; the CLI maps ConfigError to exit code 2 and the numerical
failures to exit code 4.
"""


class FriedrichsError(Exception):
    """Base class for all package errors."""


class ConfigError(FriedrichsError):
    """Malformed configuration or model document."""


class UnknownPreset(ConfigError):
    pass


class InvalidParam(ConfigError):
    pass


class NonConvergent(FriedrichsError):
    """An integral failed its nested-cutoff Cauchy criterion."""


class WindowTooSmall(FriedrichsError):
    """Real-solution search window does not bracket a solution it should."""


class NearCriticalValue(FriedrichsError):
    """Requested energy sits too close to a critical value of the dispersion."""


class SeedFailure(FriedrichsError):
    """Solution enumeration found fewer momentum pairs than the model declares."""

    def __init__(self, msg, found=None):
        super().__init__(msg)
        self.found = list(found) if found is not None else []


class CriticalCollision(FriedrichsError):
    """A tracked solution ran into a zero of the group velocity."""


class StepUnderflow(FriedrichsError):
    """Path continuation could not advance even at the minimum step size."""


class QuadratureNonConvergent(FriedrichsError):
    """Adaptive quadrature did not reach the requested tolerance."""


class PoleOnPath(FriedrichsError):
    """Direct quadrature requested exactly on the continuous spectrum."""


class ContourTooClose(FriedrichsError):
    """z is too close to the image of the deformation contour."""


class RootFindingStall(FriedrichsError):
    """Simultaneous root iteration stalled above the residual tolerance."""


class EmptyRealPoleSet(FriedrichsError):
    """Dominant/suppressed split requested where no real momentum solutions exist."""


class NearSingular(FriedrichsError):
    """Resolvent solve attempted too close to a spectral point."""


class TruncationDominated(FriedrichsError):
    """Inversion window too small: truncation tail exceeds the error budget."""


class PoleCircleCrossesCut(FriedrichsError):
    """Residue circle would leave the analyticity region."""


class GridTooCoarse(UserWarning):
    """Field discretization visibly degrades norm conservation (warning)."""
