"""Version-1 wire format, implemented from docs/wire-schema-v1.md.

This is a deliberately independent implementation of the detection
engine's exchange format: the adapters never import the engine, so a
bundle that passes the engine's validator proves the written contract,
not shared code.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from .errors import AdapterError

SCHEMA_VERSION = 1

SCORE_DECIMALS = 6
PIXEL_DECIMALS = 2
SCORE_TOLERANCE = 1e-6

MANIFEST_NAME = "manifest.json"
DETECT_DIR = "detect"
CAPTION_DIR = "caption"
ALIGN_DIR = "align"

# The caption instruction doubles as the replay lookup key, so its text
# is part of the protocol, verbatim.
INSTRUCTION_TEMPLATE = (
    "This is a {domain} image. The masked object is a {name}. "
    "Describe it in one short sentence using the word {name}"
)


def render_instruction(domain: str, class_name: str) -> str:
    domain = domain.strip()
    name = class_name.strip()
    if not domain:
        raise AdapterError(f"class {class_name!r} has an empty domain tag")
    if not name:
        raise AdapterError("class name is empty")
    return INSTRUCTION_TEMPLATE.format(domain=domain, name=name)


def canonical_text(obj: Any) -> str:
    """Canonical JSON: sorted keys, compact separators, no NaN."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_record(path: Path, record: dict) -> None:
    path.write_text(canonical_text(record) + "\n")


def quantize_score(value: float, label: str = "score") -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise AdapterError(f"{label} must be a number, got {value!r}")
    if value != value or value < -SCORE_TOLERANCE or value > 1.0 + SCORE_TOLERANCE:
        raise AdapterError(f"{label} {value!r} lies outside [0, 1]")
    return round(min(max(float(value), 0.0), 1.0), SCORE_DECIMALS)


def quantize_pixel(value: float, label: str = "coordinate") -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise AdapterError(f"{label} must be a number, got {value!r}")
    if value != value or value in (float("inf"), float("-inf")):
        raise AdapterError(f"{label} {value!r} is not finite")
    return round(float(value), PIXEL_DECIMALS)


def box_to_wire(box: tuple[float, float, float, float]) -> list[float]:
    x1, y1, x2, y2 = (quantize_pixel(v) for v in box)
    if x2 <= x1 or y2 <= y1:
        raise AdapterError(f"box {box!r} is degenerate after quantization")
    return [x1, y1, x2, y2]


def clip_box(
    box: tuple[float, float, float, float], width: float, height: float
) -> tuple[float, float, float, float] | None:
    """Clip to image bounds; None when nothing remains."""
    x1 = min(max(box[0], 0.0), width)
    y1 = min(max(box[1], 0.0), height)
    x2 = min(max(box[2], 0.0), width)
    y2 = min(max(box[3], 0.0), height)
    if x2 <= x1 or y2 <= y1:
        return None
    return (x1, y1, x2, y2)


# ---------------------------------------------------------------------------
# Prompt sets


def validate_prompt_wire(entries: Any, where: str = "prompt set") -> list[dict]:
    """Check the flat prompt array: ordered, 1-based contiguous ids and indexes."""
    if not isinstance(entries, list) or not entries:
        raise AdapterError(f"{where} must be a non-empty array")
    expected_class = 1
    expected_index = 1
    for item in entries:
        if not isinstance(item, dict):
            raise AdapterError(f"{where} entry {item!r} is not an object")
        class_id = item.get("class_id")
        phrase_index = item.get("phrase_index")
        text = item.get("text")
        if not isinstance(class_id, int) or not isinstance(phrase_index, int):
            raise AdapterError(f"{where} entry has bad ids: {item!r}")
        if not isinstance(text, str) or not text.strip():
            raise AdapterError(f"{where} entry has bad text: {item!r}")
        if class_id == expected_class + 1 and phrase_index == 1:
            expected_class += 1
            expected_index = 1
        if (class_id, phrase_index) != (expected_class, expected_index):
            raise AdapterError(
                f"{where} is out of order at class {class_id}, phrase {phrase_index}"
            )
        expected_index += 1
    return [
        {"class_id": e["class_id"], "phrase_index": e["phrase_index"], "text": e["text"]}
        for e in entries
    ]


def prompt_fingerprint(prompt_wire: list[dict]) -> str:
    return hashlib.sha256(canonical_text(prompt_wire).encode()).hexdigest()


def load_prompt_set(path: str | Path) -> list[dict]:
    """Read a prompt set file: either the engine's {"prompt_fingerprint",
    "prompt_set"} artifact or a bare prompt array."""
    path = Path(path)
    if not path.exists():
        raise AdapterError(f"prompt set file {path} does not exist")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise AdapterError(f"prompt set file {path} is not valid JSON: {exc}") from exc
    declared = None
    if isinstance(payload, dict):
        declared = payload.get("prompt_fingerprint")
        payload = payload.get("prompt_set")
    entries = validate_prompt_wire(payload, f"prompt set file {path}")
    if declared is not None and declared != prompt_fingerprint(entries):
        raise AdapterError(
            f"prompt set file {path} declares fingerprint {declared[:12]}... "
            "but its entries hash differently"
        )
    return entries


def per_class_counts(prompt_wire: list[dict]) -> list[int]:
    counts: list[int] = []
    for entry in prompt_wire:
        if entry["class_id"] > len(counts):
            counts.append(0)
        counts[-1] += 1
    return counts


# ---------------------------------------------------------------------------
# Records


def manifest_record(dataset_id: str, prompt_wire: list[dict]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "dataset_id": dataset_id,
        "prompt_fingerprint": prompt_fingerprint(prompt_wire),
        "prompt_set": prompt_wire,
    }


def caption_record(class_id: int, class_name: str, instruction: str, description: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "class_id": class_id,
        "class_name": class_name,
        "instruction": instruction,
        "description": description,
    }


def detect_record(
    image_id: int,
    width: int,
    height: int,
    phrase_counts: list[int],
    boxes: list[tuple[float, float, float, float]],
    scores: list[list[list[float]]],
) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "image_id": image_id,
        "width": width,
        "height": height,
        "phrase_counts": list(phrase_counts),
        "boxes": [box_to_wire(b) for b in boxes],
        "scores": [
            [[quantize_score(s) for s in per_phrase] for per_phrase in row] for row in scores
        ],
    }


def align_record(
    image_id: int,
    det_index: int,
    box: tuple[float, float, float, float],
    description: str,
    alignment: float,
) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "image_id": image_id,
        "det_index": det_index,
        "box": box_to_wire(box),
        "description": description,
        "alignment": quantize_score(alignment, "alignment"),
    }
