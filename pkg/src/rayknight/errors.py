"""Exception hierarchy shared by all modules."""


class RayKnightError(Exception):
    """Base class for every error raised by this package."""


class ParseError(RayKnightError):
    """Malformed tree-spec document."""


class ValidationError(RayKnightError):
    """Structurally parseable input violating a model invariant."""


class SingularSystem(RayKnightError):
    """Harmonic system could not be solved (defensive; valid trees never hit this)."""


class DegenerateTransform(RayKnightError):
    """Return-probability transform hit a vertex with h = 0."""


class DomainError(RayKnightError):
    """Argument outside the mathematical domain of an operation."""


class NumericalInversionFailure(RayKnightError):
    """Clock inversion could not bracket the target hazard (rate blow-up)."""


class ExplosionCap(RayKnightError):
    """Jump-count cap reached with time increments summing below the horizon."""


class NoCrossingLeft(RayKnightError):
    """Jump requested over a directed edge with zero remaining crossings."""


class TimeOverdraft(RayKnightError):
    """Local-time consumption exceeding the remaining budget at a vertex."""


class StuckState(RayKnightError):
    """Jump chain has no admissible move from a state that should not occur."""


class IncompatibleInputs(RayKnightError):
    """Crossing network positive outside the support of the local-time field."""


class TooLarge(RayKnightError):
    """Instance too large for exhaustive enumeration."""


class TooFine(RayKnightError):
    """Dyadic grid level above the memory guard."""


class InsufficientLevels(RayKnightError):
    """Convergence diagnostics need at least three consecutive levels."""


class TooFewSamples(RayKnightError):
    """Sample size below the minimum for a statistical test."""
