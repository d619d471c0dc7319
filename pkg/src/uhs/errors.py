"""Exception taxonomy shared across the pipeline tiers."""


class UhsError(Exception):
    """Base class for all errors raised by this package."""


# --- configuration / synthesis ---

class InvalidConfig(UhsError):
    pass


class InvalidState(UhsError):
    pass


# --- sensor processing ---

class WindowSizeMismatch(UhsError):
    pass


class WindowTooShort(UhsError):
    pass


class NonPositiveSignal(UhsError):
    pass


class NegativeRatio(UhsError):
    pass


class NoPeaksFound(UhsError):
    pass


# --- wire frames ---

class FrameError(UhsError):
    pass


class CrcMismatch(FrameError):
    pass


class BadMagic(FrameError):
    pass


class TruncatedFrame(FrameError):
    pass


class UnknownFrameType(FrameError):
    pass


# --- channel ---

class CapacityExceeded(UhsError):
    pass


class DuplicateNode(UhsError):
    pass


class UnregisteredNode(UhsError):
    pass


# --- base node ---

class NoActivityData(UhsError):
    pass


class ServerUnreachable(UhsError):
    pass


# --- server ---

class Unauthorized(UhsError):
    pass


class BadCredentials(UhsError):
    pass


class DuplicatePatient(UhsError):
    pass


class UnknownPatient(UhsError):
    pass


class InvalidObservation(UhsError):
    pass


class RejectedInvalid(UhsError):
    pass


class EmptyDataset(UhsError):
    pass


class NonBinaryLabel(UhsError):
    pass


class SlotTaken(UhsError):
    pass


class UnknownSlot(UhsError):
    pass


class OverlappingSlot(UhsError):
    pass


class AlreadyAcknowledged(UhsError):
    pass


class UnknownAlert(UhsError):
    pass


def error_by_name(name: str) -> type[UhsError]:
    """Resolve a wire-level error code back to its exception class."""
    cls = globals().get(name)
    if isinstance(cls, type) and issubclass(cls, UhsError):
        return cls
    return UhsError
