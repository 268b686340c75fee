"""Exception hierarchy.

Every error raised on bad input derives from :class:`EvsegError`; the CLI maps
these to exit code 4. ``line_no`` is 1-based for CSV lines and 0-based for
binary record indices.
"""

from __future__ import annotations


class EvsegError(ValueError):
    """Base class for validation failures."""


class StreamError(EvsegError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"{message} (at {line_no})"
        super().__init__(message)


class MalformedLine(StreamError):
    pass


class MalformedRecord(StreamError):
    pass


class OutOfBounds(StreamError):
    pass


class NonMonotonicTimestamp(StreamError):
    pass


class BadPolarity(StreamError):
    pass


class BadMagic(StreamError):
    pass


class TruncatedRecord(StreamError):
    pass


class CountMismatch(StreamError):
    pass


class EmptyStream(StreamError):
    pass


# encoding
class OutsideWindow(EvsegError):
    pass


class EventOutOfWindow(OutsideWindow):
    pass


class EventOutOfBounds(EvsegError):
    pass


class BadChannel(EvsegError):
    pass


class BadTensorFile(EvsegError):
    pass


# dataset
class CropTooLarge(EvsegError):
    pass


class DegenerateCrop(EvsegError):
    pass


class ParseError(EvsegError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class OverlappingIntervals(ParseError):
    pass


class BadImageFile(EvsegError):
    pass


# metrics
class GeometryMismatch(EvsegError):
    pass


class BadClassId(EvsegError):
    pass


class EmptyEvaluation(EvsegError):
    pass


# toy classifier
class AllPixelsIgnored(EvsegError):
    pass


class DivergenceDetected(EvsegError):
    pass


class ChannelMismatch(EvsegError):
    pass


class BadModelFile(EvsegError):
    pass
