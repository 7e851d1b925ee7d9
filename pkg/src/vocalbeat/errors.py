"""Exception hierarchy shared across the toolkit.

``DataError`` subclasses indicate problems with user-supplied inputs (bad
audio, malformed containers, inconsistent annotations) and map to exit code 2
on the command line; everything else is treated as an internal error.
"""


class VocalbeatError(Exception):
    """Base class for all toolkit errors."""


class UsageError(VocalbeatError):
    """Bad command-line invocation (unknown flag, missing argument)."""


class DataError(VocalbeatError):
    """Input data is unreadable, malformed, or violates a contract."""


class AudioReadError(DataError):
    """File is missing, not a RIFF/WAVE container, or otherwise unreadable."""


class UnsupportedAudioError(DataError):
    """WAV encoding outside 16/24/32-bit integer or 32-bit float, or >2 channels."""


class DegenerateInputError(DataError):
    """Input is degenerate for the requested operation (e.g. all-zero audio)."""


class BeatFileError(DataError):
    """Beat annotation text file could not be parsed."""


class FormatError(DataError):
    """Base class for binary container format violations."""


class BadMagicError(FormatError):
    """Container does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """Container version is not supported by this toolkit."""


class TruncatedFileError(FormatError):
    """Container ends before the declared payload is complete."""


class CorruptFileError(FormatError):
    """Container is structurally inconsistent (sizes, shapes, trailing bytes)."""
