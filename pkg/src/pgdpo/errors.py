"""Exception types shared across the library."""


class PgdpoError(Exception):
    """Base class for all library errors."""


class NotPositiveDefinite(PgdpoError):
    """A matrix required to be SPD failed its factorization."""


class DegenerateMarket(PgdpoError):
    """Market generation could not produce a positive-definite correlation."""


class HorizonExhausted(PgdpoError):
    """Closed-form consumption fraction requested at or beyond the horizon."""


class OracleDiverged(PgdpoError):
    """The value-function ODE oracle left the positive domain."""


class UtilityOverflow(PgdpoError):
    """Non-positive consumption reached a utility with gamma >= 1."""


class MaxIterations(PgdpoError):
    """Newton solve exhausted its iteration budget."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SingularJacobian(PgdpoError):
    """Newton system became numerically singular."""


class NoFeasibleCertificate(PgdpoError):
    """Active-set enumeration found no feasible KKT certificate."""


class NonFiniteObjective(PgdpoError):
    """Training objective became NaN or infinite."""

    def __init__(self, message, iteration=None, seed=None):
        super().__init__(message)
        self.iteration = iteration
        self.seed = seed


class ReferenceUndefined(PgdpoError):
    """Closed-form reference is undefined at the requested node."""


class StepUnderflow(PgdpoError):
    """Finite-difference step would leave the positive wealth domain."""


class CheckpointMismatch(PgdpoError):
    """Checkpoint incompatible with the market or requested head."""
