"""Exception types raised by the library."""


class OutOfDomainError(ValueError):
    """A point lies outside the horizontal domain of a surface piece."""


class DomainError(ValueError):
    """An argument lies outside the admissible parameter range."""


class RayMissError(RuntimeError):
    """A ray does not meet the target within the search range."""


class AmbiguousIntersectionError(RuntimeError):
    """A ray meets a graph target more than once (visibility violated)."""


class ConvergenceError(RuntimeError):
    """An iterative method stopped before reaching its tolerance.

    Parameters
    ----------
    message : str
    residual : float, optional
        Last residual seen by the iteration.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PartialCurveError(RuntimeError):
    """Some samples of a wedge curve could not be computed."""

    def __init__(self, message, bad_lambdas):
        super().__init__(message)
        self.bad_lambdas = list(bad_lambdas)


class InfeasibleAtomError(RuntimeError):
    """An atom cannot collect its prescribed mass inside the domain."""

    def __init__(self, message, atom):
        super().__init__(message)
        self.atom = atom
