"""Engine contracts and the deterministic synthetic engine set.

An engine set bundles the four model roles behind plain methods:

    segment(image_ref, box)            -> opaque mask handle
    describe(image_ref, mask, instr)   -> one-sentence description
    ground(image_id, size, prompts)    -> boxes + per-token scores + spans
    align(image_id, box, description)  -> matching probability in [0, 1]

The synthetic set fabricates a consistent world from a COCO annotation
file, so the whole production path runs and is testable without any ML
runtime; real checkpoints live behind the same interface in real.py.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .errors import AdapterError

Box = tuple[float, float, float, float]


@dataclass(frozen=True)
class GroundingResult:
    """Candidate boxes with raw token scores.

    token_scores[i][t] scores candidate i against token t of the
    flattened prompt text; spans[p] is the half-open token range of
    prompt entry p. A phrase the tokenizer could not map gets an empty
    span.
    """

    boxes: tuple[Box, ...]
    token_scores: tuple[tuple[float, ...], ...]
    spans: tuple[tuple[int, int], ...]


class EngineSet(Protocol):
    def segment(self, image_ref: str, box: Box) -> object: ...

    def describe(self, image_ref: str, mask: object, instruction: str) -> str: ...

    def ground(
        self, image_id: int, size: tuple[int, int], prompts: list[dict]
    ) -> GroundingResult: ...

    def align(self, image_id: int, box: Box, description: str) -> float: ...


# ---------------------------------------------------------------------------
# Synthetic world

_GRID = 80.0
_DISTRACTOR_SIZE = 40.0
_DISTRACTOR_INSET = 20.0

_INSTRUCTION_NAME = re.compile(
    r"The masked object is a (.+?)\. Describe it in one short sentence"
)

_SHAPES = ("round", "elongated", "angular", "curved")
_COLORS = ("dark", "pale", "mottled", "striped")
_TEXTURES = ("rough", "smooth", "grainy", "glossy")


def _unit(*parts: object) -> float:
    """Deterministic hash to [0, 1)."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).hexdigest()
    return int(digest[:12], 16) / float(16**12)


def _intersects(a: Box, b: Box) -> bool:
    return min(a[2], b[2]) > max(a[0], b[0]) and min(a[3], b[3]) > max(a[1], b[1])


def _iou(a: Box, b: Box) -> float:
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    if inter == 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


@dataclass
class SyntheticEngineSet:
    """A self-consistent fake of all four models over a COCO world.

    Ground truth comes straight from the annotation file: every GT box
    is proposed as a candidate (plus grid-separated distractors), its
    own class's phrases score in a high band, everything else in a low
    band, and alignment answers reflect actual box/GT overlap. Bands
    never overlap, so a downstream run over a bundle produced from this
    world must reach perfect AP.
    """

    annotations: str | Path
    seed: int = 0
    distractors_per_image: int = 2
    empty_span_phrases: frozenset[str] = frozenset()

    own_band: tuple[float, float] = (0.86, 0.94)
    cross_band: tuple[float, float] = (0.06, 0.40)

    _sizes: dict[int, tuple[int, int]] = field(init=False, default_factory=dict)
    _gt: dict[int, list[tuple[Box, int]]] = field(init=False, default_factory=dict)
    _names: dict[int, str] = field(init=False, default_factory=dict)

    def __post_init__(self) -> None:
        path = Path(self.annotations)
        if not path.exists():
            raise AdapterError(f"annotation file {path} does not exist")
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise AdapterError(f"annotation file {path} is not valid JSON: {exc}") from exc
        for key in ("images", "annotations", "categories"):
            if key not in payload:
                raise AdapterError(f"annotation file {path} is missing {key!r}")
        for cat in payload["categories"]:
            self._names[cat["id"]] = cat["name"]
        for img in payload["images"]:
            self._sizes[img["id"]] = (int(img["width"]), int(img["height"]))
            self._gt[img["id"]] = []
        for ann in payload["annotations"]:
            x, y, w, h = ann["bbox"]
            box = (float(x), float(y), float(x) + float(w), float(y) + float(h))
            self._gt[ann["image_id"]].append((box, int(ann["category_id"])))

    @property
    def image_ids(self) -> list[int]:
        return sorted(self._sizes)

    @property
    def class_names(self) -> dict[int, str]:
        return dict(self._names)

    # -- candidates ----------------------------------------------------------

    def _candidates(self, image_id: int) -> list[tuple[Box, int | None]]:
        """GT boxes first (annotation order), then disjoint distractors."""
        if image_id not in self._sizes:
            raise AdapterError(f"unknown image id {image_id}")
        width, height = self._sizes[image_id]
        out: list[tuple[Box, int | None]] = [(b, c) for b, c in self._gt[image_id]]
        cols = int(width // _GRID)
        rows = int(height // _GRID)
        if cols == 0 or rows == 0:
            return out
        n_cells = cols * rows
        offset = int(_unit(self.seed, image_id, "offset") * n_cells)
        placed = 0
        for step in range(n_cells):
            if placed >= self.distractors_per_image:
                break
            cell = (offset + step) % n_cells
            cx, cy = (cell % cols) * _GRID, (cell // cols) * _GRID
            cell_rect = (cx, cy, cx + _GRID, cy + _GRID)
            if any(_intersects(cell_rect, gt_box) for gt_box, _ in self._gt[image_id]):
                continue
            x1 = cx + _DISTRACTOR_INSET
            y1 = cy + _DISTRACTOR_INSET
            out.append(((x1, y1, x1 + _DISTRACTOR_SIZE, y1 + _DISTRACTOR_SIZE), None))
            placed += 1
        return out

    # -- the four roles --------------------------------------------------------

    def segment(self, image_ref: str, box: Box) -> object:
        if box[2] <= box[0] or box[3] <= box[1]:
            raise AdapterError(f"support box {box!r} is degenerate")
        return {"image": image_ref, "box": list(box)}

    def describe(self, image_ref: str, mask: object, instruction: str) -> str:
        match = _INSTRUCTION_NAME.search(instruction)
        if match is None:
            raise AdapterError(
                f"instruction does not follow the caption template: {instruction!r}"
            )
        name = match.group(1)
        shape = _SHAPES[int(_unit(name, "shape") * len(_SHAPES))]
        color = _COLORS[int(_unit(name, "color") * len(_COLORS))]
        texture = _TEXTURES[int(_unit(name, "texture") * len(_TEXTURES))]
        return f"A {shape}, {color} {name} with a {texture} texture and clean edges."

    def ground(
        self, image_id: int, size: tuple[int, int], prompts: list[dict]
    ) -> GroundingResult:
        if image_id not in self._sizes:
            raise AdapterError(f"unknown image {image_id}")
        if size != self._sizes[image_id]:
            raise AdapterError(
                f"image {image_id} declared size {size}, world says {self._sizes[image_id]}"
            )
        candidates = self._candidates(image_id)
        spans: list[tuple[int, int]] = []
        token_class: list[int] = []
        cursor = 0
        for entry in prompts:
            if entry["text"] in self.empty_span_phrases:
                spans.append((cursor, cursor))
                continue
            n_tokens = len(entry["text"].split())
            spans.append((cursor, cursor + n_tokens))
            token_class.extend([entry["class_id"]] * n_tokens)
            cursor += n_tokens
        token_scores = []
        for i, (_, box_class) in enumerate(candidates):
            row = []
            for t, cls in enumerate(token_class):
                lo, hi = self.own_band if box_class == cls else self.cross_band
                row.append(lo + _unit(self.seed, image_id, i, t, "tok") * (hi - lo))
            token_scores.append(tuple(row))
        return GroundingResult(
            boxes=tuple(box for box, _ in candidates),
            token_scores=tuple(token_scores),
            spans=tuple(spans),
        )

    def align(self, image_id: int, box: Box, description: str) -> float:
        if image_id not in self._gt:
            raise AdapterError(f"unknown image id {image_id}")
        lowered = description.lower()
        best: int | None = None
        best_len = 0
        for class_id, name in self._names.items():
            if name.lower() in lowered and len(name) > best_len:
                best, best_len = class_id, len(name)
        if best is None:
            raise AdapterError(f"description names no known class: {description!r}")
        hit = any(
            cls == best and _iou(box, gt_box) >= 0.5 for gt_box, cls in self._gt[image_id]
        )
        jitter = 0.1 * _unit(self.seed, image_id, box, description, "align")
        return (0.9 + jitter) if hit else (0.0 + jitter)
