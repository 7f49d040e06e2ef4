"""Exception hierarchy shared across the toolkit."""


class StabcodeError(Exception):
    """Base class for all toolkit errors."""


class IllPosedLoop(StabcodeError, ValueError):
    """The algebraic loop through the coder has a zero constant term."""


class UnstableSystem(StabcodeError, ValueError):
    """A quantity that needs a stable transfer function got an unstable one."""


class MarginallyStable(StabcodeError, ValueError):
    """A pole sits on the unit circle, so the stabilizing infimum is not attained."""


class InfeasibleDesign(StabcodeError, ValueError):
    """The requested SNR / code parameters cannot stabilize the plant."""


class SynthesisError(StabcodeError, RuntimeError):
    """Filter synthesis did not converge; ``best`` holds the best iterate, if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
