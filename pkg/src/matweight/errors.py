"""Exception types shared across the package."""


class MatweightError(Exception):
    """Base class for all package-specific errors."""


class SingularPoint(MatweightError):
    """A power weight was evaluated exactly on its singular set."""


class NotSymmetric(MatweightError):
    """A matrix expected to be symmetric failed the symmetry tolerance."""


class QuadratureFailure(MatweightError):
    """A cube average could not be computed (non-finite values)."""


class ThresholdTooSmall(MatweightError):
    """Stopping-time threshold below the admissible range: levels overlap."""


class ZeroInput(MatweightError):
    """Operator-norm ratio requested for an identically zero input."""


class ExponentOutOfRange(MatweightError):
    """An exponent lies outside the range required by the estimate."""


class ResolutionTooLow(MatweightError):
    """Grid resolution insufficient for the requested stencil."""


class SupportViolation(MatweightError):
    """A function required to vanish near the boundary does not."""


class EmptyAnnulus(MatweightError):
    """A rasterized annulus or ball contains no lattice cells."""


class BallOutsideDomain(MatweightError):
    """A diagnostic ball is not contained in the solution domain."""


class TooFewRadii(MatweightError):
    """Decay fit needs at least three radii."""


class PairOutsideBall(MatweightError):
    """A point pair for the Hoelder modulus lies outside the ball."""


class NonEllipticSample(MatweightError):
    """Coefficient failed the ellipticity sandwich at a sample point."""


class SolverFailure(MatweightError):
    """Linear solve failed or hit its iteration cap."""


class LineSearchFailure(MatweightError):
    """Armijo backtracking could not find a decreasing step."""


class NonConvergence(MatweightError):
    """Energy minimization did not reach the convergence criterion."""


class ConfigError(MatweightError):
    """Experiment configuration failed to parse or validate."""


class MissingReport(MatweightError):
    """A plot script was requested for a report that does not exist."""
