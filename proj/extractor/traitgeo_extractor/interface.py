"""Types and entry points of the activation extractor."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence, Union

Level = Literal["high", "low"]
Pooling = Literal["last_token", "mean"]


class ModelLoadError(RuntimeError):
    """The model identifier could not be resolved or loaded."""


class PromptFormatError(ValueError):
    """Prompt file is empty, malformed, or the layer range exceeds model depth."""


class MissingLevel(ValueError):
    """An activation dump lacks the high or low level for some trait."""


@dataclass(frozen=True)
class PromptRecord:
    """One line of the prompt JSONL file."""

    text: str
    trait: str
    level: Level


@dataclass(frozen=True)
class ExtractionJob:
    model: str  # model hub identifier
    prompt_file: Path  # JSON lines of PromptRecord
    layers: range
    output_dir: Path
    batch_size: int = 8
    device: str = "cpu"  # placement hint only
    pooling: Pooling = "last_token"


@dataclass(frozen=True)
class ManifestEntry:
    """One row of manifest.json; `path` is a raw-format matrix relative to the dump."""

    trait: str
    level: Level
    layer: int
    path: str
    count: int


def extract_layer_activations(job: ExtractionJob) -> Path:
    """Write per (trait, level, layer) mean activations plus manifest.json.

    Returns the manifest path. Raises ModelLoadError or PromptFormatError.
    """
    raise NotImplementedError


def build_direction_file(
    manifest: Path,
    output: Path,
    weights: Union[Sequence[float], Literal["uniform"]] = "uniform",
) -> Path:
    """Turn a dump into a json direction-set file readable by `traitgeo condition`.

    Per trait and layer: mean(high) - mean(low); layers are combined with
    `weights` and rows normalized. Raises MissingLevel.
    """
    raise NotImplementedError
