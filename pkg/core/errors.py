"""
Error Types
Exceptions raised across the fosgm core modules
"""


class FosgmError(Exception):
    """Base class for every error raised by fosgm"""


class InvalidGridError(FosgmError, ValueError):
    """Grid is not strictly increasing inside [0, 1] or has fewer than two points"""


class ShapeError(FosgmError, ValueError):
    """Array shapes disagree with the grid or covariate dimension"""


class NumericError(FosgmError, ValueError):
    """Non-finite values reached a numerical routine"""


class InvalidCounterError(FosgmError, ValueError):
    """Step counter outside the 1-based observation index range"""


class EmptyStreamError(FosgmError):
    """A stream or dataset held no usable observation"""


class InsufficientChainsError(FosgmError):
    """Band requested with fewer than two bootstrap chains"""


class DomainError(FosgmError, ValueError):
    """Probability argument outside (0, 1)"""


class SingularDesignError(FosgmError):
    """Design matrix is rank deficient"""


class MalformedRowError(FosgmError):
    """CSV row could not be parsed into a sample"""


class ConfigError(FosgmError, ValueError):
    """Run configuration is missing fields or holds invalid values"""


class SnapshotError(FosgmError):
    """State snapshot is unreadable or has an unsupported layout"""
