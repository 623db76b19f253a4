"""Exception types shared across the solver, diagnostics and experiment layers."""


class IrlsError(Exception):
    """Base class for all library errors."""


class NotPositiveDefiniteError(IrlsError):
    """A symmetric factorization hit a nonpositive pivot.

    Usually signals a rank-deficient measurement matrix or numerical breakdown
    of the normal-equations system.
    """


class RankDeficientError(IrlsError):
    """The measurement matrix does not have full row rank."""


class CgBreakdownError(IrlsError):
    """Conjugate gradients met a search direction with nonpositive curvature."""


class EmptyActiveSetError(IrlsError):
    """No coordinate exceeds the smoothing level; the small-system path does not apply."""


class MissingGroundTruthError(IrlsError):
    """A ground-truth vector is required but absent."""


class UnboundedError(IrlsError):
    """A linear program is unbounded."""


class InfeasibleError(IrlsError):
    """A linear program has no feasible point."""


class TooLargeError(IrlsError):
    """Instance exceeds the combinatorial guard of a brute-force routine."""


class HypothesisUnmetError(IrlsError):
    """A certifier's hypothesis does not hold on the given instance."""


class InnerSolveFailedError(IrlsError):
    """The nested solve used to build the adversary initialization failed."""


class MeasurementCountError(IrlsError):
    """The measurement rule produced m >= N."""


class ExactSolution(Exception):
    """Control-flow signal: the smoothing level hit zero, the iterate is sparse and feasible.

    Carries the terminal iterate and its trace record so callers can finish the run.
    """

    def __init__(self, x, record):
        super().__init__("smoothing level reached zero: iterate is exactly sparse")
        self.x = x
        self.record = record
