"""Exception types raised by the exporter."""


class ExporterError(Exception):
    """Base class for everything this package raises on purpose."""


class UsageError(ExporterError):
    """Bad command line or an unknown model name."""


class AudioDecodeError(ExporterError):
    """Input file missing, unreadable, or not a usable WAV."""


class ModelLoadError(ExporterError):
    """The pretrained checkpoint could not be fetched or instantiated."""
