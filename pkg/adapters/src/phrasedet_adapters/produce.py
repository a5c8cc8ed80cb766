"""The three offline production passes.

captions:  support set -> one caption record per class
detect:    annotations + prompt set (+ captions) -> a complete bundle
align:     engine detections + phrase library -> align records in a bundle

Every pass stages its output in a sibling temp directory and renames it
into place, so a crash or a model failure never leaves a partial
artifact behind.
"""

from __future__ import annotations

import contextlib
import json
import logging
import math
import os
import shutil
from pathlib import Path

from .config import AdapterConfig
from .engines import EngineSet, GroundingResult
from .errors import AdapterError
from .wire import (
    ALIGN_DIR,
    CAPTION_DIR,
    DETECT_DIR,
    MANIFEST_NAME,
    align_record,
    caption_record,
    clip_box,
    detect_record,
    load_prompt_set,
    manifest_record,
    per_class_counts,
    render_instruction,
    write_record,
)

logger = logging.getLogger(__name__)


@contextlib.contextmanager
def _staged(final: Path):
    """Build under a temp name, rename on success, clean up on failure."""
    final = Path(final)
    if final.exists():
        raise AdapterError(f"output {final} already exists; refusing to overwrite")
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = final.parent / f".{final.name}.tmp-{os.getpid()}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir()
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    tmp.rename(final)


def _load_json(path: str | Path, what: str):
    path = Path(path)
    if not path.exists():
        raise AdapterError(f"{what} file {path} does not exist")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise AdapterError(f"{what} file {path} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# Captions


def _load_support(path: str | Path) -> list[dict]:
    payload = _load_json(path, "support set")
    if not isinstance(payload, list) or not payload:
        raise AdapterError(f"support set file {path} must be a non-empty JSON array")
    seen: set[int] = set()
    for i, entry in enumerate(payload):
        if not isinstance(entry, dict):
            raise AdapterError(f"support entry {i} is not an object")
        class_id = entry.get("class_id")
        if not isinstance(class_id, int) or class_id < 1:
            raise AdapterError(f"support entry {i} has bad class_id {class_id!r}")
        if class_id in seen:
            raise AdapterError(f"support set has two exemplars for class {class_id}")
        seen.add(class_id)
        bbox = entry.get("bbox_xyxy")
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise AdapterError(f"support entry {i} has bad bbox_xyxy {bbox!r}")
        for key in ("class_name", "image", "domain"):
            if not isinstance(entry.get(key), str) or not entry[key].strip():
                raise AdapterError(f"support entry {i} has bad {key!r}")
    return sorted(payload, key=lambda e: e["class_id"])


def produce_caption_records(
    support_path: str | Path, engines: EngineSet, out_dir: str | Path
) -> Path:
    """Segment each exemplar, caption it, write caption/<class_id>.json.

    A description that never mentions its class word breaks the replay
    contract, so the pass aborts (leaving nothing behind) rather than
    record it.
    """
    support = _load_support(support_path)
    out_dir = Path(out_dir)
    with _staged(out_dir) as tmp:
        for entry in support:
            name = entry["class_name"]
            box = tuple(float(v) for v in entry["bbox_xyxy"])
            mask = engines.segment(entry["image"], box)
            instruction = render_instruction(entry["domain"], name)
            description = engines.describe(entry["image"], mask, instruction)
            if name.lower() not in description.lower():
                raise AdapterError(
                    f"captioner described class {entry['class_id']} without the word "
                    f"{name!r}: {description!r}"
                )
            write_record(
                tmp / f"{entry['class_id']}.json",
                caption_record(entry["class_id"], name, instruction, description),
            )
    return out_dir


# ---------------------------------------------------------------------------
# Detect


def _pool(row: tuple[float, ...], span: tuple[int, int], mode: str) -> float:
    start, end = span
    values = row[start:end]
    if mode == "max":
        return max(values)
    return math.fsum(values) / len(values)


def pool_result(
    result: GroundingResult, prompts: list[dict], mode: str, warned: set[str] | None = None
) -> tuple[list, list]:
    """Collapse token scores to per-(box, class, phrase) structure.

    A phrase with an empty token span scores 0 for every box; that is a
    producer-side degradation worth a warning but not an abort.
    """
    if len(result.spans) != len(prompts):
        raise AdapterError(
            f"grounding returned {len(result.spans)} spans for {len(prompts)} prompts"
        )
    counts = per_class_counts(prompts)
    scores = []
    for row in result.token_scores:
        per_class: list[list[float]] = [[] for _ in counts]
        for entry, span in zip(prompts, result.spans):
            if span[1] <= span[0]:
                if warned is not None and entry["text"] not in warned:
                    warned.add(entry["text"])
                    logger.warning(
                        "phrase %r produced an empty token span; scoring it 0", entry["text"]
                    )
                value = 0.0
            else:
                value = _pool(row, span, mode)
            per_class[entry["class_id"] - 1].append(value)
        scores.append(per_class)
    return list(result.boxes), scores


def _copy_caption_records(captions_dir: Path, target: Path) -> None:
    records = sorted(captions_dir.glob("*.json"))
    if not records:
        raise AdapterError(f"caption directory {captions_dir} holds no records")
    target.mkdir()
    for path in records:
        record = _load_json(path, "caption record")
        if not isinstance(record, dict) or f"{record.get('class_id')}.json" != path.name:
            raise AdapterError(f"caption record {path} does not match its file name")
        write_record(target / path.name, record)


def produce_detect_records(
    annotations_path: str | Path,
    prompt_set_path: str | Path,
    out_dir: str | Path,
    engines: EngineSet,
    config: AdapterConfig,
    captions_dir: str | Path | None = None,
) -> Path:
    """Score every image against the prompt set; write a complete bundle."""
    config.validate()
    payload = _load_json(annotations_path, "annotation")
    images = sorted(payload.get("images", []), key=lambda i: i.get("id", 0))
    if not images:
        raise AdapterError(f"annotation file {annotations_path} lists no images")
    prompts = load_prompt_set(prompt_set_path)
    counts = per_class_counts(prompts)
    out_dir = Path(out_dir)
    warned: set[str] = set()
    with _staged(out_dir) as tmp:
        write_record(tmp / MANIFEST_NAME, manifest_record(config.dataset_id, prompts))
        if captions_dir is not None:
            source = Path(captions_dir)
            if (source / CAPTION_DIR).is_dir():
                source = source / CAPTION_DIR
            _copy_caption_records(source, tmp / CAPTION_DIR)
        detect_dir = tmp / DETECT_DIR
        detect_dir.mkdir()
        (tmp / ALIGN_DIR).mkdir()
        for img in images:
            image_id, width, height = img["id"], int(img["width"]), int(img["height"])
            result = engines.ground(image_id, (width, height), prompts)
            boxes, scores = pool_result(result, prompts, config.span_pooling, warned)
            kept_boxes, kept_scores = [], []
            for box, row in zip(boxes, scores):
                clipped = clip_box(box, float(width), float(height))
                if clipped is None:
                    logger.warning(
                        "image %s: dropping box %s outside the image", image_id, box
                    )
                    continue
                kept_boxes.append(clipped)
                kept_scores.append(row)
            write_record(
                detect_dir / f"{image_id}.json",
                detect_record(image_id, width, height, counts, kept_boxes, kept_scores),
            )
    return out_dir


# ---------------------------------------------------------------------------
# Align


def _load_library_descriptions(path: str | Path) -> dict[int, str]:
    payload = _load_json(path, "phrase library")
    if not isinstance(payload, list) or not payload:
        raise AdapterError(f"phrase library {path} must be a non-empty JSON array")
    out: dict[int, str] = {}
    for entry in payload:
        class_id = entry.get("class_id")
        description = entry.get("description")
        if not isinstance(class_id, int) or not isinstance(description, str):
            raise AdapterError(f"phrase library {path} has a malformed entry: {entry!r}")
        out[class_id] = description
    return out


def produce_align_records(
    bundle_dir: str | Path,
    detections_path: str | Path,
    library_path: str | Path,
    engines: EngineSet,
    config: AdapterConfig,
) -> Path:
    """Second pass: score small detections against their class description.

    Detections come from a prior engine run over this bundle; det_index
    is the detection's rank within its image in that file. Image bounds
    are taken from the bundle's own detect records. A crop that is
    degenerate after clipping scores 0 with a warning.
    """
    config.validate()
    bundle = Path(bundle_dir)
    if not (bundle / MANIFEST_NAME).exists():
        raise AdapterError(f"{bundle} is not a bundle (no {MANIFEST_NAME})")
    align_dir = bundle / ALIGN_DIR
    if align_dir.exists() and any(align_dir.glob("*.json")):
        raise AdapterError(f"{align_dir} already holds records; refusing to overwrite")

    detections = _load_json(detections_path, "detections")
    if not isinstance(detections, list):
        raise AdapterError(f"detections file {detections_path} must be a JSON array")
    descriptions = _load_library_descriptions(library_path)

    sizes: dict[int, tuple[float, float]] = {}

    def bounds(image_id: int) -> tuple[float, float]:
        if image_id not in sizes:
            record = _load_json(
                bundle / DETECT_DIR / f"{image_id}.json", f"detect record for image {image_id}"
            )
            sizes[image_id] = (float(record["width"]), float(record["height"]))
        return sizes[image_id]

    staging = bundle / f".{ALIGN_DIR}.tmp-{os.getpid()}"
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir()
    try:
        indices: dict[int, int] = {}
        for entry in detections:
            image_id = entry.get("image_id")
            class_id = entry.get("category_id")
            bbox = entry.get("bbox")
            if not isinstance(image_id, int) or not isinstance(bbox, list) or len(bbox) != 4:
                raise AdapterError(f"malformed detection entry: {entry!r}")
            det_index = indices.get(image_id, 0)
            indices[image_id] = det_index + 1
            x, y, w, h = (float(v) for v in bbox)
            if w * h >= config.small_area_threshold:
                continue
            if class_id not in descriptions:
                raise AdapterError(f"phrase library has no description for class {class_id!r}")
            description = descriptions[class_id]
            box = (x, y, x + w, y + h)
            width, height = bounds(image_id)
            clipped = clip_box(box, width, height)
            if clipped is None:
                logger.warning(
                    "image %s det %s: crop degenerate after clipping; alignment 0",
                    image_id,
                    det_index,
                )
                alignment = 0.0
            else:
                alignment = engines.align(image_id, clipped, description)
            write_record(
                staging / f"{image_id}_{det_index}.json",
                align_record(image_id, det_index, box, description, alignment),
            )
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if align_dir.exists():
        shutil.rmtree(align_dir)
    staging.rename(align_dir)
    return align_dir
