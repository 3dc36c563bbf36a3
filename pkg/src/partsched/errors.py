"""Exception types shared across the engine."""


class PartschedError(Exception):
    """Base class for all errors raised by this package."""


class InsufficientDataError(PartschedError):
    """Too few (or degenerate) samples to fit a density."""


class InvalidRangeError(PartschedError, ValueError):
    """A histogram support with hi <= lo or otherwise unusable bounds."""


class InvalidActionError(PartschedError):
    """An action referencing a part that is not available in this state."""


class InvalidStateError(PartschedError):
    """A (mask, belief) pair outside a policy's state space."""


class CapacityError(PartschedError):
    """Problem size exceeds the supported table or enumeration budget."""


class ConfigurationError(PartschedError):
    """Mismatched components wired together (policy vs. model, etc.)."""


class ArityMismatchError(ConfigurationError):
    """Part counts disagree between artifacts that must share them."""


class FormatError(PartschedError, ValueError):
    """A persisted artifact does not parse against its schema."""


class InvalidParameterError(PartschedError, ValueError):
    """A parameter outside its documented domain (e.g. non-positive cost)."""


class InsufficientScriptError(PartschedError):
    """A scripted score sequence ran out before the policy stopped."""


class ProviderError(PartschedError):
    """A response provider failed while serving a (location, part) request."""


class UndefinedMetricError(PartschedError):
    """A metric that needs at least one positive example is undefined."""
