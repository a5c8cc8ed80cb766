"""File formats: COCO annotations/results, support sets, and reports.

Everything written here is byte-deterministic: canonical JSON, no
timestamps, fixed column layouts.
"""

from __future__ import annotations

import json
from pathlib import Path

from .backends.wire import canonical_dumps, quantize_pixel, quantize_score
from .cocoeval import EvalReport, GroundTruthBox, GroundTruthSet
from .entities import ClassCatalog, Detection, SupportTriple
from .errors import ValidationError
from .geometry import BoundingBox


def _load_json(path: str | Path, what: str):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{what} file {path} does not exist")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} file {path} is not valid JSON: {exc}") from exc


def load_ground_truth(path: str | Path) -> GroundTruthSet:
    """Read a COCO annotation file into a GroundTruthSet.

    Category ids must be contiguous from 1 (they double as catalog
    ids); annotations without an explicit area fall back to box area.
    """
    payload = _load_json(path, "annotation")
    for key in ("images", "annotations", "categories"):
        if key not in payload or not isinstance(payload[key], list):
            raise ValidationError(f"annotation file {path} is missing the {key!r} array")

    categories = sorted(payload["categories"], key=lambda c: c.get("id", 0))
    catalog = ClassCatalog(tuple((c.get("id"), c.get("name", "")) for c in categories))

    image_sizes: dict[int, tuple[int, int]] = {}
    for img in payload["images"]:
        image_id = img.get("id")
        width, height = img.get("width"), img.get("height")
        if not isinstance(image_id, int) or image_id in image_sizes:
            raise ValidationError(f"annotation file {path}: bad or duplicate image id {image_id!r}")
        if not isinstance(width, (int, float)) or not isinstance(height, (int, float)) or width <= 0 or height <= 0:
            raise ValidationError(f"annotation file {path}: image {image_id} has bad size")
        image_sizes[image_id] = (int(width), int(height))

    boxes_by_image: dict[int, list[GroundTruthBox]] = {}
    for ann in payload["annotations"]:
        image_id = ann.get("image_id")
        if image_id not in image_sizes:
            raise ValidationError(f"annotation file {path}: annotation references unknown image {image_id!r}")
        bbox = ann.get("bbox")
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise ValidationError(f"annotation file {path}: annotation in image {image_id} has bad bbox {bbox!r}")
        x, y, w, h = bbox
        try:
            box = BoundingBox.from_xywh(float(x), float(y), float(w), float(h))
        except (TypeError, ValueError, ValidationError) as exc:
            raise ValidationError(
                f"annotation file {path}: annotation in image {image_id} has degenerate bbox {bbox!r}"
            ) from exc
        area = ann.get("area")
        if area is not None and (not isinstance(area, (int, float)) or area <= 0):
            raise ValidationError(f"annotation file {path}: annotation in image {image_id} has bad area {area!r}")
        boxes_by_image.setdefault(image_id, []).append(
            GroundTruthBox(
                box=box,
                class_id=ann.get("category_id"),
                iscrowd=bool(ann.get("iscrowd", 0)),
                area=float(area) if area is not None else None,
            )
        )
    return GroundTruthSet(
        image_sizes=image_sizes,
        boxes_by_image={k: tuple(v) for k, v in boxes_by_image.items()},
        catalog=catalog,
    )


def load_detections_coco(path: str | Path, ground_truth: GroundTruthSet) -> dict[int, list[Detection]]:
    """Read a COCO results array into per-image detection lists."""
    payload = _load_json(path, "results")
    if not isinstance(payload, list):
        raise ValidationError(f"results file {path} must be a JSON array")
    n_classes = len(ground_truth.catalog)
    out: dict[int, list[Detection]] = {}
    for i, entry in enumerate(payload):
        image_id = entry.get("image_id")
        class_id = entry.get("category_id")
        if image_id not in ground_truth.image_sizes:
            raise ValidationError(f"results file {path}: entry {i} references unknown image {image_id!r}")
        if not isinstance(class_id, int) or not (1 <= class_id <= n_classes):
            raise ValidationError(f"results file {path}: entry {i} references unknown class {class_id!r}")
        bbox = entry.get("bbox")
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise ValidationError(f"results file {path}: entry {i} has bad bbox {bbox!r}")
        score = entry.get("score")
        if not isinstance(score, (int, float)) or not (0.0 <= score <= 1.0):
            raise ValidationError(f"results file {path}: entry {i} has bad score {score!r}")
        try:
            box = BoundingBox.from_xywh(*(float(v) for v in bbox))
        except (TypeError, ValueError, ValidationError) as exc:
            raise ValidationError(f"results file {path}: entry {i} has degenerate bbox {bbox!r}") from exc
        out.setdefault(image_id, []).append(Detection.uncalibrated(box, class_id, float(score)))
    return out


def write_detections_coco(detections_by_image: dict[int, list[Detection]], path: str | Path) -> None:
    """Write detections as a standard COCO results array (xywh boxes)."""
    entries = []
    for image_id in sorted(detections_by_image):
        for d in detections_by_image[image_id]:
            x, y, w, h = d.box.as_xywh()
            entries.append(
                {
                    "image_id": image_id,
                    "category_id": d.class_id,
                    "bbox": [
                        quantize_pixel(x),
                        quantize_pixel(y),
                        quantize_pixel(w),
                        quantize_pixel(h),
                    ],
                    "score": quantize_score(d.calibrated_score),
                }
            )
    Path(path).write_text(canonical_dumps(entries) + "\n")


def load_support_set(path: str | Path, catalog: ClassCatalog | None = None) -> list[SupportTriple]:
    """Read the support-set file: one exemplar region per class.

    Format: JSON array of {class_id, class_name, image, bbox_xyxy,
    domain} objects.
    """
    payload = _load_json(path, "support set")
    if not isinstance(payload, list) or not payload:
        raise ValidationError(f"support set file {path} must be a non-empty JSON array")
    triples = []
    for i, entry in enumerate(payload):
        if not isinstance(entry, dict):
            raise ValidationError(f"support set file {path}: entry {i} is not an object")
        bbox = entry.get("bbox_xyxy")
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise ValidationError(f"support set file {path}: entry {i} has bad bbox_xyxy {bbox!r}")
        try:
            box = BoundingBox(*(float(v) for v in bbox))
        except (TypeError, ValueError, ValidationError) as exc:
            raise ValidationError(f"support set file {path}: entry {i} has degenerate bbox") from exc
        try:
            triples.append(
                SupportTriple(
                    image_ref=entry.get("image", ""),
                    box=box,
                    class_id=entry.get("class_id"),
                    class_name=entry.get("class_name", ""),
                    domain_tag=entry.get("domain", ""),
                )
            )
        except ValidationError as exc:
            raise ValidationError(f"support set file {path}: entry {i}: {exc}") from exc
    if catalog is not None:
        from .entities import validate_support_set

        validate_support_set(triples, catalog)
    return triples


def write_support_set(triples: list[SupportTriple], path: str | Path) -> None:
    entries = [
        {
            "class_id": t.class_id,
            "class_name": t.class_name,
            "image": t.image_ref,
            "bbox_xyxy": [quantize_pixel(v) for v in t.box.as_xyxy()],
            "domain": t.domain_tag,
        }
        for t in sorted(triples, key=lambda t: t.class_id)
    ]
    Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")


def write_ground_truth_coco(ground_truth: GroundTruthSet, path: str | Path) -> None:
    """Write a GroundTruthSet back out as a COCO annotation file."""
    annotations = []
    next_id = 1
    for image_id in sorted(ground_truth.boxes_by_image):
        for g in ground_truth.boxes_by_image[image_id]:
            x, y, w, h = g.box.as_xywh()
            annotations.append(
                {
                    "id": next_id,
                    "image_id": image_id,
                    "category_id": g.class_id,
                    "bbox": [quantize_pixel(v) for v in (x, y, w, h)],
                    "area": quantize_pixel(g.effective_area),
                    "iscrowd": int(g.iscrowd),
                }
            )
            next_id += 1
    payload = {
        "images": [
            {"id": image_id, "width": size[0], "height": size[1]}
            for image_id, size in sorted(ground_truth.image_sizes.items())
        ],
        "annotations": annotations,
        "categories": [{"id": cid, "name": name} for cid, name in ground_truth.catalog.classes],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Reports


def report_to_json(report: EvalReport, config: dict | None = None) -> str:
    payload = report.to_dict()
    if config is not None:
        payload["config"] = config
    return canonical_dumps(payload) + "\n"


_METRIC_COLUMNS = ("mAP", "AP50", "APs", "AR@1", "AR@10", "AR@100")


def _metric_cells(report: EvalReport) -> list[str]:
    values = (
        report.mean_ap,
        report.ap50,
        report.ap_small,
        report.ar_1,
        report.ar_10,
        report.ar_100,
    )
    return ["-" if v == -1.0 else f"{v * 100.0:.1f}" for v in values]


def format_report_table(rows: list[tuple[str, EvalReport]]) -> str:
    """Aligned-column text table; metric values are percents, one decimal.

    The training column is always "x": nothing in this engine is ever
    trained or fine-tuned.
    """
    header = ["method", "training", *_METRIC_COLUMNS]
    body = [[name, "x", *_metric_cells(report)] for name, report in rows]
    widths = [
        max(len(header[col]), *(len(row[col]) for row in body)) if body else len(header[col])
        for col in range(len(header))
    ]
    lines = []
    for row in [header, *body]:
        lines.append("  ".join(cell.ljust(widths[col]) for col, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def format_per_class_table(report: EvalReport, catalog: ClassCatalog) -> str:
    rows = []
    for class_id, name in catalog.classes:
        ap = report.per_class_ap.get(class_id, -1.0)
        rows.append((name, "-" if ap == -1.0 else f"{ap * 100.0:.1f}"))
    width = max(len("class"), *(len(r[0]) for r in rows))
    lines = [f"{'class'.ljust(width)}  AP"]
    for name, cell in rows:
        lines.append(f"{name.ljust(width)}  {cell}")
    return "\n".join(lines) + "\n"
