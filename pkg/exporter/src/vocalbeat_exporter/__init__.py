"""Export pretrained speech-model activations to SSLB feature files."""

from .errors import AudioDecodeError, ExporterError, ModelLoadError, UsageError
from .export import ALL_LAYERS, FPS, MODEL_SOURCES, ExportConfig, export
from .sslb import write_sslb

__all__ = [
    "ALL_LAYERS",
    "AudioDecodeError",
    "ExportConfig",
    "ExporterError",
    "FPS",
    "MODEL_SOURCES",
    "ModelLoadError",
    "UsageError",
    "export",
    "write_sslb",
]
