"""Exception hierarchy shared by all vecoder modules."""


class VecoderError(Exception):
    """Base class for every error raised by this package."""


class DomainError(VecoderError, ValueError):
    """Argument outside the real branch / admissible domain of a function."""


class DivergentMoment(DomainError):
    """The R-transform has a pole at the requested point (diverging mean)."""


class DivisionByZero(VecoderError, ZeroDivisionError):
    pass


class NoBracket(VecoderError, RuntimeError):
    """Numeric inversion could not bracket a root within the search bounds."""


class TooFewPoints(VecoderError, ValueError):
    pass


class UnsupportedKind(VecoderError, ValueError):
    pass


class MaxIterations(VecoderError, RuntimeError):
    """Fixed-point iteration neither converged nor provably diverged."""


class BadBracket(VecoderError, ValueError):
    pass


class SingularChannel(VecoderError, ArithmeticError):
    """Gramian HH^H too ill-conditioned to invert reliably."""


class BudgetExceeded(VecoderError, ValueError):
    pass


class NumericalFailure(VecoderError, ArithmeticError):
    pass
