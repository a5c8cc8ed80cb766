"""Backend request types and protocols.

Backends are interchangeable: the engine only ever calls detect(),
caption() and align() with these requests and validates the responses
at the boundary. Implementations must be safe for concurrent calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from ..entities import ScoreTensor
from ..errors import ValidationError
from ..geometry import BoundingBox
from ..prompts import PromptSet


@dataclass(frozen=True, slots=True)
class DetectorRequest:
    """Score every candidate box of one test image against all prompts."""

    image_id: int
    prompt_set: PromptSet

    def __post_init__(self) -> None:
        if not isinstance(self.image_id, int):
            raise ValidationError(f"detector image_id must be an int, got {self.image_id!r}")


@dataclass(frozen=True, slots=True)
class CaptionRequest:
    """Describe one support exemplar region under an instruction."""

    image_ref: str
    box: BoundingBox
    instruction: str

    def __post_init__(self) -> None:
        if not self.instruction or not self.instruction.strip():
            raise ValidationError("caption instruction is empty")


@dataclass(frozen=True, slots=True)
class AlignRequest:
    """Score how well a cropped region matches a class description."""

    image_ref: int | str
    box: BoundingBox
    description: str

    def __post_init__(self) -> None:
        if not self.description or not self.description.strip():
            raise ValidationError("alignment description is empty")


@dataclass(frozen=True, slots=True)
class MaskRequest:
    """Segment one support exemplar box (consumed by caption producers)."""

    image_ref: str
    box: BoundingBox


@runtime_checkable
class DetectorBackend(Protocol):
    def detect(self, request: DetectorRequest) -> ScoreTensor: ...


@runtime_checkable
class CaptionerBackend(Protocol):
    def caption(self, request: CaptionRequest) -> str: ...


@runtime_checkable
class AlignerBackend(Protocol):
    def align(self, request: AlignRequest) -> float: ...
