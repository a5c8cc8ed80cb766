"""Version-1 wire schema: canonical JSON records for all backend traffic.

Records are content-addressed: serialize(parse(bytes)) == bytes for any
well-formed record. Canonical form is stdlib JSON with sorted keys and
compact separators, scores quantized to 6 decimal places and pixel
coordinates to 2 at the producer boundary.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

from ..entities import ScoreTensor
from ..errors import ProtocolError, ValidationError
from ..geometry import BoundingBox, clip_to_image
from ..prompts import PromptEntry, PromptSet

SCHEMA_VERSION = 1

SCORE_DECIMALS = 6
PIXEL_DECIMALS = 2
# Scores may overshoot [0, 1] by at most this much before clamping.
SCORE_TOLERANCE = 1e-6


def canonical_dumps(obj: Any) -> str:
    """Canonical JSON text: sorted keys, compact, no NaN."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def quantize_score(value: Any, label: str = "score") -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError(f"{label} must be a number, got {value!r}")
    if value != value or value < -SCORE_TOLERANCE or value > 1.0 + SCORE_TOLERANCE:
        raise ProtocolError(f"{label} {value!r} lies outside [0, 1]")
    return round(min(max(float(value), 0.0), 1.0), SCORE_DECIMALS)


def quantize_pixel(value: Any, label: str = "coordinate") -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError(f"{label} must be a number, got {value!r}")
    if value != value or value in (float("inf"), float("-inf")):
        raise ProtocolError(f"{label} {value!r} is not finite")
    return round(float(value), PIXEL_DECIMALS)


def _require(record: dict, field: str, kind: type | tuple[type, ...], where: str) -> Any:
    if field not in record:
        raise ProtocolError(f"{where} is missing field {field!r}")
    value = record[field]
    if kind is int and isinstance(value, bool):
        raise ProtocolError(f"{where} field {field!r} must be {kind}, got bool")
    if not isinstance(value, kind):
        raise ProtocolError(f"{where} field {field!r} has type {type(value).__name__}")
    return value


def _check_version(record: dict, where: str) -> None:
    version = _require(record, "schema_version", int, where)
    if version != SCHEMA_VERSION:
        raise ProtocolError(f"{where} has schema_version {version}, expected {SCHEMA_VERSION}")


# ---------------------------------------------------------------------------
# Prompt sets


def prompt_set_to_wire(prompt_set: PromptSet) -> list[dict]:
    return [
        {"class_id": e.class_id, "phrase_index": e.phrase_index, "text": e.text}
        for e in prompt_set.entries
    ]


def prompt_set_from_wire(payload: Any, where: str = "prompt set") -> PromptSet:
    if not isinstance(payload, list) or not payload:
        raise ProtocolError(f"{where} must be a non-empty array")
    entries = []
    for item in payload:
        if not isinstance(item, dict):
            raise ProtocolError(f"{where} entry {item!r} is not an object")
        entries.append(
            PromptEntry(
                class_id=_require(item, "class_id", int, where),
                phrase_index=_require(item, "phrase_index", int, where),
                text=_require(item, "text", str, where),
            )
        )
    try:
        return PromptSet(entries=tuple(entries))
    except ValidationError as exc:
        raise ProtocolError(f"{where} is malformed: {exc}") from exc


def prompt_fingerprint(prompt_set: PromptSet) -> str:
    """Identity of a prompt set: sha256 of its canonical JSON."""
    return hashlib.sha256(canonical_dumps(prompt_set_to_wire(prompt_set)).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Detect records


def box_to_wire(box: BoundingBox) -> list[float]:
    return [
        quantize_pixel(box.x1, "x1"),
        quantize_pixel(box.y1, "y1"),
        quantize_pixel(box.x2, "x2"),
        quantize_pixel(box.y2, "y2"),
    ]


def box_from_wire(payload: Any, where: str = "box") -> BoundingBox:
    if not isinstance(payload, list) or len(payload) != 4:
        raise ProtocolError(f"{where} must be a [x1, y1, x2, y2] array, got {payload!r}")
    coords = [quantize_pixel(v, where) for v in payload]
    try:
        return BoundingBox(*coords)
    except ValidationError as exc:
        raise ProtocolError(f"{where} is degenerate: {exc}") from exc


def detect_record_from_tensor(tensor: ScoreTensor, width: int, height: int) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "image_id": tensor.image_ref,
        "width": width,
        "height": height,
        "phrase_counts": list(tensor.phrase_counts),
        "boxes": [box_to_wire(b) for b in tensor.boxes],
        "scores": [
            [[quantize_score(s) for s in per_phrase] for per_phrase in row]
            for row in tensor.scores
        ],
    }


def tensor_from_detect_record(
    record: Any,
    expected_counts: tuple[int, ...] | None = None,
    where: str = "detect record",
) -> ScoreTensor:
    """Parse and validate one detect record into a ScoreTensor.

    Boxes are clipped to the declared image bounds (a box that
    degenerates after clipping is a protocol error); scores are clamped
    within the 1e-6 tolerance and quantized. With expected_counts given,
    the per-class phrase shape must match the prompt set exactly.
    """
    if not isinstance(record, dict):
        raise ProtocolError(f"{where} is not a JSON object")
    _check_version(record, where)
    image_id = _require(record, "image_id", int, where)
    width = _require(record, "width", (int, float), where)
    height = _require(record, "height", (int, float), where)
    if width <= 0 or height <= 0:
        raise ProtocolError(f"{where} declares non-positive image size {width}x{height}")
    counts_raw = _require(record, "phrase_counts", list, where)
    for v in counts_raw:
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ProtocolError(f"{where} phrase_counts entry {v!r} must be a positive int")
    counts = tuple(counts_raw)
    if expected_counts is not None and counts != tuple(expected_counts):
        raise ProtocolError(
            f"{where} phrase counts {counts} do not match the prompt set {tuple(expected_counts)}"
        )
    boxes_raw = _require(record, "boxes", list, where)
    scores_raw = _require(record, "scores", list, where)
    if len(boxes_raw) != len(scores_raw):
        raise ProtocolError(
            f"{where} has {len(boxes_raw)} boxes but {len(scores_raw)} score rows"
        )
    boxes = []
    for i, payload in enumerate(boxes_raw):
        box = box_from_wire(payload, f"{where} box {i}")
        try:
            boxes.append(clip_to_image(box, float(width), float(height)))
        except ValidationError as exc:
            raise ProtocolError(f"{where} box {i}: {exc}") from exc
    scores = []
    for i, row in enumerate(scores_raw):
        if not isinstance(row, list) or len(row) != len(counts):
            raise ProtocolError(f"{where} box {i} scores do not cover {len(counts)} classes")
        row_out = []
        for c, per_phrase in enumerate(row):
            if not isinstance(per_phrase, list) or len(per_phrase) != counts[c]:
                raise ProtocolError(
                    f"{where} box {i} class column {c} has wrong phrase score count"
                )
            row_out.append(
                tuple(quantize_score(s, f"{where} box {i} score") for s in per_phrase)
            )
        scores.append(tuple(row_out))
    try:
        return ScoreTensor(
            image_ref=image_id,
            boxes=tuple(boxes),
            phrase_counts=counts,
            scores=tuple(scores),
        )
    except ValidationError as exc:
        raise ProtocolError(f"{where} is inconsistent: {exc}") from exc


# ---------------------------------------------------------------------------
# Caption and align records


def caption_record(class_id: int, class_name: str, instruction: str, description: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "class_id": class_id,
        "class_name": class_name,
        "instruction": instruction,
        "description": description,
    }


def parse_caption_record(record: Any, where: str = "caption record") -> dict:
    if not isinstance(record, dict):
        raise ProtocolError(f"{where} is not a JSON object")
    _check_version(record, where)
    class_id = _require(record, "class_id", int, where)
    class_name = _require(record, "class_name", str, where)
    instruction = _require(record, "instruction", str, where)
    description = _require(record, "description", str, where)
    if class_id < 1:
        raise ProtocolError(f"{where} has non-positive class_id {class_id}")
    if not class_name.strip():
        raise ProtocolError(f"{where} has an empty class_name")
    if not instruction.strip():
        raise ProtocolError(f"{where} has an empty instruction")
    if not description.strip():
        raise ProtocolError(f"{where} has an empty description")
    return {
        "schema_version": SCHEMA_VERSION,
        "class_id": class_id,
        "class_name": class_name,
        "instruction": instruction,
        "description": description,
    }


def align_record(
    image_id: int, det_index: int, box: BoundingBox, description: str, alignment: float
) -> dict:
    """The description rides along: the same box may be scored under
    several class descriptions, and replay must tell them apart."""
    return {
        "schema_version": SCHEMA_VERSION,
        "image_id": image_id,
        "det_index": det_index,
        "box": box_to_wire(box),
        "description": description,
        "alignment": quantize_score(alignment, "alignment"),
    }


def parse_align_record(record: Any, where: str = "align record") -> dict:
    if not isinstance(record, dict):
        raise ProtocolError(f"{where} is not a JSON object")
    _check_version(record, where)
    image_id = _require(record, "image_id", int, where)
    det_index = _require(record, "det_index", int, where)
    if det_index < 0:
        raise ProtocolError(f"{where} has negative det_index {det_index}")
    box = box_from_wire(record.get("box"), f"{where} box")
    description = _require(record, "description", str, where)
    if not description.strip():
        raise ProtocolError(f"{where} has an empty description")
    alignment = quantize_score(
        _require(record, "alignment", (int, float), where), f"{where} alignment"
    )
    return {
        "schema_version": SCHEMA_VERSION,
        "image_id": image_id,
        "det_index": det_index,
        "box": box_to_wire(box),
        "description": description,
        "alignment": alignment,
    }


# ---------------------------------------------------------------------------
# Bundle manifest


def manifest_record(dataset_id: str, prompt_set: PromptSet) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "dataset_id": dataset_id,
        "prompt_fingerprint": prompt_fingerprint(prompt_set),
        "prompt_set": prompt_set_to_wire(prompt_set),
    }


def parse_manifest(record: Any, where: str = "bundle manifest") -> tuple[str, str, PromptSet]:
    """Returns (dataset_id, fingerprint, prompt_set); fingerprint is verified."""
    if not isinstance(record, dict):
        raise ProtocolError(f"{where} is not a JSON object")
    _check_version(record, where)
    dataset_id = _require(record, "dataset_id", str, where)
    fingerprint = _require(record, "prompt_fingerprint", str, where)
    prompt_set = prompt_set_from_wire(record.get("prompt_set"), f"{where} prompt_set")
    actual = prompt_fingerprint(prompt_set)
    if actual != fingerprint:
        raise ProtocolError(
            f"{where} fingerprint {fingerprint} does not match its embedded prompt set ({actual})"
        )
    return dataset_id, fingerprint, prompt_set
