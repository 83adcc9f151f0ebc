"""Bridge from framework-native trained models to the portable format."""

__version__ = "0.1.0"

from .export import (
    ExportError,
    ExportManifest,
    UnsupportedArchitectureError,
    export,
    schema_from_csv,
)
