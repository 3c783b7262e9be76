"""Bridge from transformer models to the traitgeo direction-set file format.

Interfaces only. The implementation is not part of this build.
"""

from .interface import (
    ExtractionJob,
    ManifestEntry,
    MissingLevel,
    ModelLoadError,
    PromptFormatError,
    PromptRecord,
    build_direction_file,
    extract_layer_activations,
)

__all__ = [
    "ExtractionJob",
    "ManifestEntry",
    "MissingLevel",
    "ModelLoadError",
    "PromptFormatError",
    "PromptRecord",
    "build_direction_file",
    "extract_layer_activations",
]
