"""Exception types raised across the toolkit.

Everything derives from BevkitError so callers can catch broadly; the CLI
maps these onto stage-labelled exit codes.
"""

from __future__ import annotations


class BevkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(BevkitError):
    """Bad or unknown configuration key/value."""


# --- frame I/O ---

class MalformedRow(BevkitError):
    def __init__(self, path, row: int, detail: str = ""):
        self.path = str(path)
        self.row = row
        msg = f"{self.path}: malformed row {row}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class EmptyFile(BevkitError):
    """File has no header at all. A header-only file is a valid empty frame."""


class BadFrameFilename(BevkitError):
    """Frame filename carries no numeric suffix to derive frame_id from."""


class NoFrames(BevkitError):
    pass


class DuplicateFrameId(BevkitError):
    pass


class NonMonotoneTimestamps(BevkitError):
    pass


# --- grids ---

class OutOfGrid(BevkitError):
    pass


class GridTooSmall(BevkitError):
    pass


class DimensionMismatch(BevkitError):
    pass


class TooFewFrames(BevkitError):
    pass


# --- segmentation / external protocol ---

class EmptyMask(BevkitError):
    pass


class SegmenterProtocolError(BevkitError):
    """Malformed handshake or reply from an external segmenter."""


class SegmenterTimeout(BevkitError):
    pass


class SegmenterProcessExit(BevkitError):
    pass


# --- tracking ---

class FrameOrderViolation(BevkitError):
    pass


# --- ground map ---

class NoSamples(BevkitError):
    pass


class UnknownGround(BevkitError):
    pass


# --- boxes ---

class TooFewPoints(BevkitError):
    pass


class NonPositiveDim(BevkitError):
    pass


class DegenerateBox(BevkitError):
    pass


# --- kinematics / stats ---

class TooShort(BevkitError):
    pass


class EmptyValues(BevkitError):
    pass


# --- scene generation ---

class TimeOutOfRange(BevkitError):
    pass
