"""Synthetic world: planted scenes plus deterministic mock backends.

The mock detector scores every planted object and distractor box
against every prompt. A phrase of the object's own class lands in
[0.85, 0.95); any other (phrase, box) pair lands in [0.05, 0.45); the
position inside the band is a hash of (phrase text, image id, box
index), and optional Gaussian noise is drawn from a generator seeded by
(seed, image id). Same seed, same scene, same prompts: identical bytes.
With zero noise, a planted object always outscores every distractor
under its own class by construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..cocoeval import GroundTruthBox, GroundTruthSet
from ..entities import ClassCatalog, PhraseLibrary, ScoreTensor, SupportTriple
from ..errors import ProtocolError, RecordNotFoundError, ValidationError
from ..geometry import BoundingBox, iou
from .base import AlignRequest, CaptionRequest, DetectorRequest
from .wire import SCHEMA_VERSION, quantize_score

OWN_CLASS_BASE = 0.85
OWN_CLASS_SPAN = 0.10
CROSS_CLASS_BASE = 0.05
CROSS_CLASS_SPAN = 0.40

ALIGN_MATCH_BASE = 0.90
ALIGN_MISMATCH_BASE = 0.00
ALIGN_SPAN = 0.10
ALIGN_IOU_GATE = 0.5


def unit_hash(*parts: object) -> float:
    """Deterministic hash of the parts, mapped into [0, 1)."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64


@dataclass(frozen=True, slots=True)
class PlantedObject:
    box: BoundingBox
    class_id: int


@dataclass(frozen=True, slots=True)
class SceneImage:
    image_id: int
    width: int
    height: int
    objects: tuple[PlantedObject, ...]
    distractors: tuple[BoundingBox, ...]

    def candidate_boxes(self) -> list[tuple[BoundingBox, int | None]]:
        """Planted objects first, then unlabeled distractors."""
        out: list[tuple[BoundingBox, int | None]] = [(o.box, o.class_id) for o in self.objects]
        out.extend((b, None) for b in self.distractors)
        return out


@dataclass(frozen=True, slots=True)
class SyntheticScene:
    catalog: ClassCatalog
    domain_tag: str
    images: tuple[SceneImage, ...]

    def __post_init__(self) -> None:
        seen = set()
        for img in self.images:
            if img.image_id in seen:
                raise ValidationError(f"duplicate scene image id {img.image_id}")
            seen.add(img.image_id)
            for obj in img.objects:
                if obj.class_id > len(self.catalog):
                    raise ValidationError(
                        f"scene image {img.image_id} plants unknown class {obj.class_id}"
                    )

    def image(self, image_id: int) -> SceneImage:
        for img in self.images:
            if img.image_id == image_id:
                return img
        raise RecordNotFoundError(f"scene has no image {image_id}")

    def ground_truth(self) -> GroundTruthSet:
        return GroundTruthSet(
            image_sizes={img.image_id: (img.width, img.height) for img in self.images},
            boxes_by_image={
                img.image_id: tuple(
                    GroundTruthBox(box=o.box, class_id=o.class_id) for o in img.objects
                )
                for img in self.images
                if img.objects
            },
            catalog=self.catalog,
        )

    def support_set(self) -> list[SupportTriple]:
        """First planted exemplar of each class, scanning images in order."""
        chosen: dict[int, SupportTriple] = {}
        for img in sorted(self.images, key=lambda im: im.image_id):
            for obj in img.objects:
                if obj.class_id not in chosen:
                    chosen[obj.class_id] = SupportTriple(
                        image_ref=f"scene://{img.image_id}",
                        box=obj.box,
                        class_id=obj.class_id,
                        class_name=self.catalog.name_of(obj.class_id),
                        domain_tag=self.domain_tag,
                    )
        for class_id, name in self.catalog.classes:
            if class_id not in chosen:
                raise ValidationError(f"scene never plants class {class_id} ({name})")
        return [chosen[cid] for cid in sorted(chosen)]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "domain_tag": self.domain_tag,
            "classes": [{"id": cid, "name": name} for cid, name in self.catalog.classes],
            "images": [
                {
                    "image_id": img.image_id,
                    "width": img.width,
                    "height": img.height,
                    "objects": [
                        {"box": list(o.box.as_xyxy()), "class_id": o.class_id}
                        for o in img.objects
                    ],
                    "distractors": [list(b.as_xyxy()) for b in img.distractors],
                }
                for img in self.images
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SyntheticScene":
        try:
            catalog = ClassCatalog(
                tuple((c["id"], c["name"]) for c in payload["classes"])
            )
            images = tuple(
                SceneImage(
                    image_id=img["image_id"],
                    width=img["width"],
                    height=img["height"],
                    objects=tuple(
                        PlantedObject(box=BoundingBox(*o["box"]), class_id=o["class_id"])
                        for o in img["objects"]
                    ),
                    distractors=tuple(BoundingBox(*b) for b in img["distractors"]),
                )
                for img in payload["images"]
            )
            return cls(catalog=catalog, domain_tag=payload["domain_tag"], images=images)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed scene document: {exc!r}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SyntheticScene":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read scene file {path}: {exc}") from exc
        return cls.from_dict(payload)


def generate_scene(
    catalog: ClassCatalog,
    n_images: int,
    objects_per_image: int = 2,
    distractors_per_image: int = 6,
    image_size: tuple[int, int] = (640, 480),
    object_size: tuple[int, int] = (60, 50),
    distractor_size: tuple[int, int] = (40, 40),
    small_object_size: tuple[int, int] = (20, 20),
    small_object_fraction: float = 0.0,
    domain_tag: str = "synthetic",
    seed: int = 0,
) -> SyntheticScene:
    """Plant non-overlapping boxes on a grid.

    Each placement occupies its own 80x80 grid cell, so every pair of
    boxes in an image has zero IoU. The first placements cycle through
    the catalog so every class is planted at least once (scene-wide
    support coverage); later ones draw classes at random.
    """
    width, height = image_size
    cell = 80
    for label, (w, h) in (
        ("object", object_size),
        ("distractor", distractor_size),
        ("small object", small_object_size),
    ):
        if not (0 < w < cell - 1 and 0 < h < cell - 1):
            raise ValidationError(f"{label} size {w}x{h} does not fit the {cell}px grid cell")
    cols, rows = width // cell, height // cell
    capacity = cols * rows
    if objects_per_image + distractors_per_image > capacity:
        raise ValidationError(
            f"{objects_per_image + distractors_per_image} placements exceed the "
            f"{capacity}-cell grid of a {width}x{height} image"
        )
    if n_images < 1:
        raise ValidationError("scene needs at least one image")
    rng = np.random.default_rng(seed)
    images = []
    class_cycle = 0
    n_classes = len(catalog)
    for image_id in range(1, n_images + 1):
        cells = rng.permutation(capacity)
        placements = objects_per_image + distractors_per_image
        objects = []
        distractors = []
        for slot in range(placements):
            cx = (int(cells[slot]) % cols) * cell
            cy = (int(cells[slot]) // cols) * cell
            if slot < objects_per_image:
                if class_cycle < n_classes:
                    class_id = class_cycle + 1
                    class_cycle += 1
                else:
                    class_id = int(rng.integers(1, n_classes + 1))
                if small_object_fraction > 0.0 and rng.random() < small_object_fraction:
                    w, h = small_object_size
                else:
                    w, h = object_size
                x = cx + int(rng.integers(0, cell - w - 1))
                y = cy + int(rng.integers(0, cell - h - 1))
                objects.append(
                    PlantedObject(box=BoundingBox(float(x), float(y), float(x + w), float(y + h)), class_id=class_id)
                )
            else:
                w, h = distractor_size
                x = cx + int(rng.integers(0, cell - w - 1))
                y = cy + int(rng.integers(0, cell - h - 1))
                distractors.append(BoundingBox(float(x), float(y), float(x + w), float(y + h)))
        images.append(
            SceneImage(
                image_id=image_id,
                width=width,
                height=height,
                objects=tuple(objects),
                distractors=tuple(distractors),
            )
        )
    return SyntheticScene(catalog=catalog, domain_tag=domain_tag, images=tuple(images))


class MockDetector:
    """Scores candidate boxes with the label-aware hash scheme."""

    def __init__(self, scene: SyntheticScene, noise_sigma: float = 0.0, seed: int = 0) -> None:
        if noise_sigma < 0.0:
            raise ValidationError(f"noise_sigma must be non-negative, got {noise_sigma!r}")
        self._scene = scene
        self._sigma = float(noise_sigma)
        self._seed = int(seed)

    def detect(self, request: DetectorRequest) -> ScoreTensor:
        image = self._scene.image(request.image_id)
        candidates = image.candidate_boxes()
        entries = request.prompt_set.entries
        counts = request.prompt_set.per_class_counts()
        rng = np.random.default_rng([self._seed, request.image_id])
        rows = []
        for index, (box, class_id) in enumerate(candidates):
            flat = []
            for entry in entries:
                if class_id is not None and entry.class_id == class_id:
                    base, span = OWN_CLASS_BASE, OWN_CLASS_SPAN
                else:
                    base, span = CROSS_CLASS_BASE, CROSS_CLASS_SPAN
                value = base + span * unit_hash(entry.text, request.image_id, index)
                if self._sigma > 0.0:
                    value += rng.normal(0.0, self._sigma)
                flat.append(quantize_score(min(max(value, 0.0), 1.0)))
            row = []
            cursor = 0
            for m in counts:
                row.append(tuple(flat[cursor : cursor + m]))
                cursor += m
            rows.append(tuple(row))
        return ScoreTensor(
            image_ref=request.image_id,
            boxes=tuple(box for box, _ in candidates),
            phrase_counts=counts,
            scores=tuple(rows),
        )


_SHAPES = ("rounded", "elongated", "angular", "flattened", "tapered")
_COLORS = ("dark gray", "pale", "reddish", "mottled", "banded")
_TEXTURES = ("rough", "smooth", "grainy", "pitted", "striated")


def mock_description(class_name: str) -> str:
    """Deterministic one-sentence description mentioning the class word."""
    shape = _SHAPES[int(unit_hash("shape", class_name) * len(_SHAPES))]
    color = _COLORS[int(unit_hash("color", class_name) * len(_COLORS))]
    texture = _TEXTURES[int(unit_hash("texture", class_name) * len(_TEXTURES))]
    return f"A {shape}, {color} {class_name} with a {texture} texture and uneven edges."


class MockCaptioner:
    """Answers caption requests from class-name templates.

    The class is recovered from the instruction text (longest catalog
    name contained in it), mirroring how a real captioner only ever
    sees the instruction.
    """

    def __init__(self, catalog: ClassCatalog) -> None:
        self._catalog = catalog

    def caption(self, request: CaptionRequest) -> str:
        best: str | None = None
        for _, name in self._catalog.classes:
            if name in request.instruction and (best is None or len(name) > len(best)):
                best = name
        if best is None:
            raise ProtocolError(
                f"caption instruction names no catalog class: {request.instruction!r}"
            )
        return mock_description(best)


def record_bundle(
    scene: SyntheticScene,
    out_dir: str | Path,
    dataset_id: str = "mock-scene",
    phrase_mode: str = "support-text",
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> Path:
    """Record the mock backends into a replay bundle.

    Produces caption records for every class, detect records for every
    scene image, and align records for every (candidate box, class
    description) pair, so replay runs can toggle calibration freely.
    """
    from ..prompts import build_phrase_library, build_prompt_set, render_instruction
    from .replay import write_bundle
    from .wire import align_record, caption_record, detect_record_from_tensor

    captioner = MockCaptioner(scene.catalog)
    descriptions: dict[int, str] = {}
    caption_records = []
    for triple in scene.support_set():
        instruction = render_instruction(triple)
        description = captioner.caption(
            CaptionRequest(image_ref=triple.image_ref, box=triple.box, instruction=instruction)
        )
        descriptions[triple.class_id] = description
        caption_records.append(
            caption_record(triple.class_id, triple.class_name, instruction, description)
        )
    library = build_phrase_library(scene.catalog, descriptions, phrase_mode)
    prompt_set = build_prompt_set(library, scene.catalog)
    detector = MockDetector(scene, noise_sigma=noise_sigma, seed=seed)
    aligner = MockAligner(scene, library)
    detect_records = []
    align_records = []
    for image in sorted(scene.images, key=lambda im: im.image_id):
        tensor = detector.detect(DetectorRequest(image_id=image.image_id, prompt_set=prompt_set))
        detect_records.append(detect_record_from_tensor(tensor, image.width, image.height))
        det_index = 0
        for box, _ in image.candidate_boxes():
            for entry in library.entries:
                alignment = aligner.align(
                    AlignRequest(image_ref=image.image_id, box=box, description=entry.description)
                )
                align_records.append(
                    align_record(image.image_id, det_index, box, entry.description, alignment)
                )
                det_index += 1
    return write_bundle(
        out_dir, dataset_id, prompt_set, detect_records, caption_records, align_records
    )


class MockAligner:
    """Oracle-informative alignment: high iff the crop overlaps an object
    of the described class."""

    def __init__(self, scene: SyntheticScene, library: PhraseLibrary) -> None:
        self._scene = scene
        self._class_by_description = {e.description: e.class_id for e in library.entries}

    def align(self, request: AlignRequest) -> float:
        class_id = self._class_by_description.get(request.description)
        if class_id is None:
            raise ProtocolError(f"unknown alignment description {request.description!r}")
        if not isinstance(request.image_ref, int):
            raise ProtocolError(f"mock aligner expects an image id, got {request.image_ref!r}")
        image = self._scene.image(request.image_ref)
        hit = any(
            o.class_id == class_id and iou(request.box, o.box) >= ALIGN_IOU_GATE
            for o in image.objects
        )
        base = ALIGN_MATCH_BASE if hit else ALIGN_MISMATCH_BASE
        jitter = ALIGN_SPAN * unit_hash(
            "align", request.image_ref, request.box.as_xyxy(), request.description
        )
        return quantize_score(base + jitter)
