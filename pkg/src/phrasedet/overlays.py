"""Optional overlay rendering for eyeballing detections."""

from __future__ import annotations

import json
import logging
from pathlib import Path

from PIL import Image, ImageDraw

from .entities import Detection
from .errors import ValidationError

logger = logging.getLogger(__name__)

MIN_OVERLAY_SCORE = 0.3


def render_overlays(
    annotations_path: str | Path,
    detections_by_image: dict[int, list[Detection]],
    images_dir: str | Path | None,
    out_dir: str | Path,
    min_score: float = MIN_OVERLAY_SCORE,
) -> list[Path]:
    """Draw detections (red) and ground truth (green) per image.

    Real pixels are used when the annotation file names an image that
    exists under images_dir; otherwise boxes land on a blank canvas so
    synthetic scenes can be inspected too.
    """
    try:
        payload = json.loads(Path(annotations_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read annotations {annotations_path}: {exc}") from exc
    images = {img["id"]: img for img in payload.get("images", [])}
    gt_by_image: dict[int, list] = {}
    for ann in payload.get("annotations", []):
        gt_by_image.setdefault(ann["image_id"], []).append(ann["bbox"])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for image_id in sorted(detections_by_image):
        info = images.get(image_id)
        if info is None:
            continue
        canvas = None
        file_name = info.get("file_name")
        if images_dir and file_name:
            source = Path(images_dir) / file_name
            if source.exists():
                try:
                    canvas = Image.open(source).convert("RGB")
                except OSError as exc:
                    logger.warning("cannot open %s (%s); using a blank canvas", source, exc)
        if canvas is None:
            canvas = Image.new("RGB", (int(info["width"]), int(info["height"])), "white")
        draw = ImageDraw.Draw(canvas)
        for x, y, w, h in gt_by_image.get(image_id, []):
            draw.rectangle([x, y, x + w, y + h], outline="green", width=2)
        for det in detections_by_image[image_id]:
            if det.calibrated_score < min_score:
                continue
            draw.rectangle(list(det.box.as_xyxy()), outline="red", width=2)
            draw.text(
                (det.box.x1 + 2, det.box.y1 + 2),
                f"{det.class_id}:{det.calibrated_score:.2f}",
                fill="red",
            )
        target = out_dir / f"{image_id}.png"
        canvas.save(target)
        written.append(target)
    return written
