"""Replay bundles: recorded backend responses served from disk.

Layout under the bundle root:

    manifest.json                      dataset id + prompt set + fingerprint
    detect/<image_id>.json             one score tensor per test image
    caption/<class_id>.json            one description per class
    align/<image_id>_<det_index>.json  one alignment score per queried crop

Every file is canonical JSON plus a trailing newline, so re-serializing
a parsed record reproduces the file bytes. A bundle recorded for a
different prompt set is stale and refuses to serve.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from ..entities import ScoreTensor
from ..errors import ProtocolError, RecordNotFoundError, StaleBundleError
from ..prompts import PromptSet
from .base import AlignRequest, CaptionRequest, DetectorRequest
from .wire import (
    box_to_wire,
    canonical_dumps,
    manifest_record,
    parse_align_record,
    parse_caption_record,
    parse_manifest,
    prompt_fingerprint,
    tensor_from_detect_record,
)

MANIFEST_NAME = "manifest.json"
DETECT_DIR = "detect"
CAPTION_DIR = "caption"
ALIGN_DIR = "align"


def _read_json(path: Path, where: str):
    if not path.exists():
        raise RecordNotFoundError(f"{where}: no record at {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"{where}: {path} is not valid JSON: {exc}") from exc


class ReplayBundle:
    """Read-only view of one recorded bundle. Safe for concurrent use."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        manifest = _read_json(self.root / MANIFEST_NAME, "bundle manifest")
        self.dataset_id, self.fingerprint, self.prompt_set = parse_manifest(manifest)
        self._captions_by_instruction: dict[str, dict] | None = None
        self._align_index: dict[int, dict[tuple, float]] = {}
        self._align_loaded: set[int] = set()
        self._lock = threading.Lock()

    # -- detect ------------------------------------------------------------

    def detect_record(self, image_id: int) -> dict:
        return _read_json(
            self.root / DETECT_DIR / f"{image_id}.json", f"detect record for image {image_id}"
        )

    # -- captions ----------------------------------------------------------

    def _captions(self) -> dict[str, dict]:
        with self._lock:
            if self._captions_by_instruction is None:
                index: dict[str, dict] = {}
                caption_dir = self.root / CAPTION_DIR
                if caption_dir.is_dir():
                    for path in sorted(caption_dir.glob("*.json")):
                        record = parse_caption_record(
                            _read_json(path, "caption record"), f"caption record {path.name}"
                        )
                        index[record["instruction"]] = record
                self._captions_by_instruction = index
            return self._captions_by_instruction

    def caption_by_instruction(self, instruction: str) -> dict:
        record = self._captions().get(instruction)
        if record is None:
            raise RecordNotFoundError(
                f"bundle has no caption record for instruction {instruction!r}"
            )
        return record

    # -- alignments ----------------------------------------------------------

    def alignment_for(self, image_id: int, box_wire: tuple, description: str) -> float:
        with self._lock:
            if image_id not in self._align_loaded:
                index: dict[tuple, float] = {}
                align_dir = self.root / ALIGN_DIR
                for path in sorted(align_dir.glob(f"{image_id}_*.json")):
                    record = parse_align_record(
                        _read_json(path, "align record"), f"align record {path.name}"
                    )
                    if record["image_id"] != image_id:
                        raise ProtocolError(
                            f"align record {path.name} carries image id {record['image_id']}"
                        )
                    index[(tuple(record["box"]), record["description"])] = record["alignment"]
                self._align_index[image_id] = index
                self._align_loaded.add(image_id)
            index = self._align_index[image_id]
        key = (box_wire, description)
        if key not in index:
            raise RecordNotFoundError(
                f"bundle has no align record for image {image_id}, box {list(box_wire)}, "
                f"description {description!r}"
            )
        return index[key]

    def has_alignments(self) -> bool:
        align_dir = self.root / ALIGN_DIR
        return align_dir.is_dir() and any(align_dir.glob("*.json"))


class ReplayDetector:
    def __init__(self, bundle: ReplayBundle) -> None:
        self._bundle = bundle

    def detect(self, request: DetectorRequest) -> ScoreTensor:
        fingerprint = prompt_fingerprint(request.prompt_set)
        if fingerprint != self._bundle.fingerprint:
            raise StaleBundleError(
                f"bundle {self._bundle.root} was recorded for prompt set "
                f"{self._bundle.fingerprint[:12]}..., run uses {fingerprint[:12]}..."
            )
        record = self._bundle.detect_record(request.image_id)
        tensor = tensor_from_detect_record(
            record,
            expected_counts=request.prompt_set.per_class_counts(),
            where=f"detect record for image {request.image_id}",
        )
        if tensor.image_ref != request.image_id:
            raise ProtocolError(
                f"detect record for image {request.image_id} carries image id {tensor.image_ref}"
            )
        return tensor


class ReplayCaptioner:
    def __init__(self, bundle: ReplayBundle) -> None:
        self._bundle = bundle

    def caption(self, request: CaptionRequest) -> str:
        record = self._bundle.caption_by_instruction(request.instruction)
        return record["description"]


class ReplayAligner:
    def __init__(self, bundle: ReplayBundle) -> None:
        self._bundle = bundle

    def align(self, request: AlignRequest) -> float:
        if not isinstance(request.image_ref, int):
            raise ProtocolError(f"replay aligner expects an image id, got {request.image_ref!r}")
        box_wire = tuple(box_to_wire(request.box))
        return self._bundle.alignment_for(request.image_ref, box_wire, request.description)


# ---------------------------------------------------------------------------
# Writing


def write_record(path: Path, record: dict) -> None:
    path.write_text(canonical_dumps(record) + "\n")


def write_bundle(
    root: str | Path,
    dataset_id: str,
    prompt_set: PromptSet,
    detect_records: list[dict],
    caption_records: list[dict],
    align_records: list[dict],
) -> Path:
    """Lay out a bundle directory from finished records."""
    root = Path(root)
    (root / DETECT_DIR).mkdir(parents=True, exist_ok=True)
    (root / CAPTION_DIR).mkdir(parents=True, exist_ok=True)
    (root / ALIGN_DIR).mkdir(parents=True, exist_ok=True)
    write_record(root / MANIFEST_NAME, manifest_record(dataset_id, prompt_set))
    for record in detect_records:
        write_record(root / DETECT_DIR / f"{record['image_id']}.json", record)
    for record in caption_records:
        write_record(root / CAPTION_DIR / f"{record['class_id']}.json", record)
    for record in align_records:
        write_record(
            root / ALIGN_DIR / f"{record['image_id']}_{record['det_index']}.json", record
        )
    return root
