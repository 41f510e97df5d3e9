"""Exception and warning types raised across the package."""


class BiolageError(Exception):
    """Base class for all package errors."""


class RangeError(BiolageError, ValueError):
    """A parameter lies outside its admissible range."""


class UnsupportedFamily(BiolageError):
    """Operation is only defined for linear (multiplicative) jump maps."""


class ConvergenceError(BiolageError, ArithmeticError):
    """A root solve did not reach its tolerance."""


class SignError(BiolageError, ValueError):
    """Equilibrium product requested where some chi_j <= 0."""


class PatternError(BiolageError):
    """chi_k does not show the single sign change expected by the cascade theory."""


class QuadratureError(BiolageError, ArithmeticError):
    """Adaptive quadrature missed its relative tolerance."""


class CFLViolation(BiolageError, ValueError):
    """Time step rejected by the advection or positivity condition."""


class NegativeMass(BiolageError, AssertionError):
    """A cell mass went negative; unreachable under the step preconditions."""


class BinningMismatch(BiolageError, ValueError):
    """Histogram and density live on incompatible supports."""


class ParseError(BiolageError, ValueError):
    """Malformed or inconsistent configuration document."""


class StiffnessWarning(UserWarning):
    """Explicit integrator step is large compared with the fastest moment rate."""


class OverflowSignal(UserWarning):
    """A power sum left the double range and was accumulated in log space."""
