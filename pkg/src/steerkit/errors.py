"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: config/argument problems exit 2,
numeric failures exit 3, bridge protocol violations exit 4.
"""


class SteerKitError(Exception):
    """Base class for toolkit errors."""


class InvalidArgument(SteerKitError, ValueError):
    """Precondition violated by a caller-supplied value."""


class NumericError(SteerKitError, ArithmeticError):
    """Computation hit a numerically undefined or non-finite state."""


class ScheduleInfeasible(SteerKitError):
    """Requested steering-step count does not fit the schedule window."""


class DegenerateWeights(SteerKitError):
    """Resampling weights are all zero, negative, or non-finite."""


class BehindCamera(SteerKitError):
    """Point projects behind (or onto) the camera plane."""


class EmptySupport(SteerKitError):
    """No eligible pixels for a field comparison; carries a zero score."""

    def __init__(self, message="no eligible pixels", score=0.0):
        super().__init__(message)
        self.score = float(score)


class RewardUndefined(SteerKitError):
    """Reward had no support on any frame."""


class FormatError(SteerKitError):
    """Malformed tensor file; offset points at the failing byte."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (at byte {offset})")
        self.offset = offset


class Unsupported(SteerKitError):
    """Requested combination is out of scope for this implementation."""


class BridgeProtocolError(SteerKitError):
    """Out-of-process reconstruction bridge violated protocol v1."""
