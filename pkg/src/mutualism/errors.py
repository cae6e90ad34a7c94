"""Exception types raised by the analysis routines."""


class MutualismError(Exception):
    """Base class for all package errors."""


class DomainError(MutualismError, ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class SingularityError(MutualismError, ArithmeticError):
    """A closed-form expression hit a vanishing or sign-flipped denominator."""


class UnsupportedError(MutualismError):
    """The operation is only defined for a restricted parameter family."""


class ConvergenceError(MutualismError, RuntimeError):
    """A Newton-type or secant iteration failed to converge."""


class StiffnessError(MutualismError, RuntimeError):
    """The explicit integrator's step size underflowed."""


class LocalizationError(ConvergenceError):
    """A bifurcation event could not be pinned down along a branch."""


class IllConditionedError(MutualismError, ArithmeticError):
    """A normal-form computation is numerically meaningless here."""


class SeedError(ConvergenceError):
    """No periodic orbit could be seeded from a Hopf point."""
