"""Exception types shared across the package."""


class BrqError(Exception):
    """Base class for all package-specific errors."""


class NoDensityError(BrqError):
    """The fading model has no probability density function."""


class TraceExhaustedError(BrqError):
    """An empirical SNR trace ran out of entries."""


class InfiniteDelayError(BrqError):
    """The decoding probability is zero, so the mean delay diverges."""


class InsufficientFeedbackError(BrqError):
    """The feedback budget does not cover the success mask plus one cell."""


class BudgetExceededError(BrqError):
    """A realized feedback block encoding does not fit the bit budget."""


class FeedbackDecodeError(BrqError):
    """A feedback bit string is malformed or truncated."""


class ChainBrokenError(BrqError):
    """A backtrack chain could not be decoded.

    With full CSIT or a safe quantizer this indicates a protocol bug or
    unsafe feedback, never a legitimate channel outcome.
    """


class NumericError(BrqError):
    """A quadrature or root-finding routine failed to converge."""
