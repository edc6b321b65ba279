"""Exception types shared across the package."""


class QcatError(Exception):
    """Base class for all package errors."""


class NonUnitError(QcatError, ValueError):
    """A residue required to be a unit is divisible by p."""


class DimensionMismatchError(QcatError, ValueError):
    """Two state vectors live in spaces of different dimension."""


class NotUnimodularError(QcatError, ValueError):
    """Matrix determinant is not 1 modulo N."""


class NotNormalizedError(QcatError, ValueError):
    """State vector norm is not 1 within tolerance."""


class RamifiedPrimeError(QcatError, ValueError):
    """p divides the discriminant; the norm-one group degenerates."""


class EvenPrimeError(QcatError, ValueError):
    """p = 2 is outside the supported odd-prime setting."""


class NotSplitError(QcatError, ValueError):
    """Operation requires the discriminant to be a square mod p."""


class SingularPointError(QcatError, ValueError):
    """D*x^2 = 1 (mod p): the rational parametrization has a pole."""


class KTooSmallError(QcatError, ValueError):
    """Closed-form sum evaluation needs exponent k >= 2."""


class BadCharacterError(QcatError, ValueError):
    """Angle extraction requested for a character outside the good set."""


class WrongKError(QcatError, ValueError):
    """Operation is only defined for a specific exponent k."""


class NoMatchError(QcatError, RuntimeError):
    """No (sign, character) pair reproduces the measured matrix elements."""


class BadNuError(QcatError, ValueError):
    """A twisted-spectrum class index is divisible by p."""


class EmptySetError(QcatError, ValueError):
    """Empirical sample is empty."""


class EigenClusterError(QcatError, RuntimeError):
    """Eigenvalue clustering disagrees with the predicted spectral layout."""
