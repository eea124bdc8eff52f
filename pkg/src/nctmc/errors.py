"""Exception types raised across the package."""


class NCTMCError(Exception):
    """Base class for all package errors."""


class NoMatchingReaction(NCTMCError):
    """An observed state change matches no reaction's state-change vector."""


class AbsorbedState(NCTMCError):
    """Total propensity is zero, so no further event can occur."""


class NegativePropensity(NCTMCError):
    """A propensity model returned a negative rate."""


class NonPositivePropensity(NCTMCError):
    """The log-likelihood needs the log of a rate that is not strictly positive."""


class ShapeMismatch(NCTMCError):
    pass


class NonFiniteValue(NCTMCError):
    pass


class NonFiniteGradient(NCTMCError):
    pass


class NonFiniteLoss(NCTMCError):
    def __init__(self, epoch, value):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}")
        self.epoch = epoch
        self.value = value


class UnbinnableCovariate(NCTMCError):
    """A covariate value falls outside every configured bin."""
