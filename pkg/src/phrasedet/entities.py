"""Value objects shared by every pipeline stage.

Everything here is immutable after construction and therefore safe to
share across worker threads without locks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ValidationError
from .geometry import BoundingBox


@dataclass(frozen=True, slots=True)
class ClassCatalog:
    """Ordered category universe for one dataset.

    Class ids must be contiguous 1..C in order and names unique and
    non-empty, so id c maps to column c-1 of every score matrix.
    """

    classes: tuple[tuple[int, str], ...]

    def __post_init__(self) -> None:
        if not self.classes:
            raise ValidationError("class catalog is empty")
        names = set()
        for position, (class_id, name) in enumerate(self.classes, start=1):
            if class_id != position:
                raise ValidationError(
                    f"class ids must be contiguous from 1; found id {class_id} at position {position}"
                )
            if not isinstance(name, str) or not name.strip():
                raise ValidationError(f"class {class_id} has an empty name")
            if name in names:
                raise ValidationError(f"duplicate class name {name!r}")
            names.add(name)

    @classmethod
    def from_names(cls, names: list[str] | tuple[str, ...]) -> "ClassCatalog":
        return cls(tuple((i + 1, n) for i, n in enumerate(names)))

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(cid for cid, _ in self.classes)

    def name_of(self, class_id: int) -> str:
        try:
            return self.classes[class_id - 1][1]
        except IndexError:
            raise ValidationError(f"unknown class id {class_id}") from None


@dataclass(frozen=True, slots=True)
class SupportTriple:
    """One exemplar: an image region annotated with its class.

    domain_tag may be empty here; rendering an instruction from an
    empty tag is rejected at that stage instead.
    """

    image_ref: str
    box: BoundingBox
    class_id: int
    class_name: str
    domain_tag: str

    def __post_init__(self) -> None:
        if not isinstance(self.class_id, int) or self.class_id < 1:
            raise ValidationError(f"support class_id must be a positive int, got {self.class_id!r}")
        if not self.class_name or not self.class_name.strip():
            raise ValidationError("support class_name is empty")
        if not isinstance(self.image_ref, str) or not self.image_ref:
            raise ValidationError("support image_ref is empty")


def validate_support_set(triples: list[SupportTriple], catalog: ClassCatalog) -> None:
    """Exactly one support triple per catalog class, ids matching names."""
    seen: dict[int, SupportTriple] = {}
    for t in triples:
        if t.class_id in seen:
            raise ValidationError(f"duplicate support triple for class id {t.class_id}")
        seen[t.class_id] = t
    for class_id, name in catalog.classes:
        t = seen.pop(class_id, None)
        if t is None:
            raise ValidationError(f"no support triple for class {class_id} ({name})")
        if t.class_name != name:
            raise ValidationError(
                f"support triple for class {class_id} names it {t.class_name!r}, catalog says {name!r}"
            )
    if seen:
        extra = sorted(seen)
        raise ValidationError(f"support triples reference unknown class ids {extra}")


@dataclass(frozen=True, slots=True)
class PhraseEntry:
    """Phrases plus the source description for one class."""

    class_id: int
    class_name: str
    description: str
    phrases: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.phrases:
            raise ValidationError(f"class {self.class_id} has no phrases")
        for p in self.phrases:
            if not isinstance(p, str) or not p.strip() or p != p.strip():
                raise ValidationError(
                    f"class {self.class_id} has a blank or untrimmed phrase {p!r}"
                )


@dataclass(frozen=True, slots=True)
class PhraseLibrary:
    """Per-class phrase sets, ordered by class id."""

    entries: tuple[PhraseEntry, ...]

    def __post_init__(self) -> None:
        ids = [e.class_id for e in self.entries]
        if ids != sorted(set(ids)):
            raise ValidationError("phrase library entries must be unique and ordered by class id")

    def entry_for(self, class_id: int) -> PhraseEntry:
        for e in self.entries:
            if e.class_id == class_id:
                return e
        raise ValidationError(f"phrase library has no entry for class id {class_id}")

    def description_for(self, class_id: int) -> str:
        return self.entry_for(class_id).description

    def phrase_counts(self) -> tuple[int, ...]:
        return tuple(len(e.phrases) for e in self.entries)


def _check_unit_interval(value: float, label: str) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{label} must be a number, got {value!r}")
    if not math.isfinite(value) or value < 0.0 or value > 1.0:
        raise ValidationError(f"{label} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True, slots=True)
class ScoreTensor:
    """Per-image phrase grounding scores.

    scores[i][c][m] is the score of box i under phrase m of the c-th
    catalog class; the per-class phrase counts are carried explicitly so
    an image with zero boxes still knows its class axis.
    """

    image_ref: int | str
    boxes: tuple[BoundingBox, ...]
    phrase_counts: tuple[int, ...]
    scores: tuple[tuple[tuple[float, ...], ...], ...]

    def __post_init__(self) -> None:
        if len(self.scores) != len(self.boxes):
            raise ValidationError(
                f"score tensor has {len(self.scores)} score rows for {len(self.boxes)} boxes"
            )
        if not self.phrase_counts:
            raise ValidationError("score tensor needs at least one class")
        for c, m in enumerate(self.phrase_counts):
            if m < 1:
                raise ValidationError(f"class column {c} has phrase count {m}; must be >= 1")
        for i, row in enumerate(self.scores):
            if len(row) != len(self.phrase_counts):
                raise ValidationError(
                    f"box {i} scores cover {len(row)} classes, expected {len(self.phrase_counts)}"
                )
            for c, per_phrase in enumerate(row):
                if len(per_phrase) != self.phrase_counts[c]:
                    raise ValidationError(
                        f"box {i} class column {c} has {len(per_phrase)} phrase scores, "
                        f"expected {self.phrase_counts[c]}"
                    )
                for s in per_phrase:
                    _check_unit_interval(s, f"score for box {i}, class column {c}")

    @property
    def num_boxes(self) -> int:
        return len(self.boxes)

    @property
    def num_classes(self) -> int:
        return len(self.phrase_counts)


@dataclass(frozen=True, slots=True)
class Detection:
    """One scored box-category pair.

    calibration_applied=False pins calibrated_score == raw_score exactly;
    when True an alignment score must be present (the blend itself is
    checked where the blend weight is known).
    """

    box: BoundingBox
    class_id: int
    raw_score: float
    calibrated_score: float
    calibration_applied: bool = False
    alignment_score: float | None = field(default=None)

    def __post_init__(self) -> None:
        if not isinstance(self.class_id, int) or self.class_id < 1:
            raise ValidationError(f"detection class_id must be a positive int, got {self.class_id!r}")
        _check_unit_interval(self.raw_score, "raw_score")
        _check_unit_interval(self.calibrated_score, "calibrated_score")
        if self.calibration_applied:
            if self.alignment_score is None:
                raise ValidationError("calibrated detection is missing its alignment score")
            _check_unit_interval(self.alignment_score, "alignment_score")
        else:
            if self.calibrated_score != self.raw_score:
                raise ValidationError(
                    "uncalibrated detection must keep calibrated_score == raw_score "
                    f"({self.calibrated_score!r} != {self.raw_score!r})"
                )

    @classmethod
    def uncalibrated(cls, box: BoundingBox, class_id: int, score: float) -> "Detection":
        return cls(box=box, class_id=class_id, raw_score=score, calibrated_score=score)
