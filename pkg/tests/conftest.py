"""Shared fixtures and random-instance builders."""

from __future__ import annotations

import numpy as np
import pytest

from phrasedet.cocoeval import GroundTruthBox, GroundTruthSet
from phrasedet.entities import ClassCatalog, Detection
from phrasedet.geometry import BoundingBox


def quarter(rng: np.random.Generator, lo: float, hi: float) -> float:
    """Random quarter-integer in [lo, hi). Exact in binary floating point,
    so both evaluator routes see bit-identical geometry."""
    return float(rng.integers(int(lo * 4), int(hi * 4))) / 4.0


def random_box(rng: np.random.Generator, width: int, height: int) -> BoundingBox:
    x1 = quarter(rng, 0, width - 8)
    y1 = quarter(rng, 0, height - 8)
    w = quarter(rng, 1, min(width - x1, 160))
    h = quarter(rng, 1, min(height - y1, 160))
    return BoundingBox(x1, y1, x1 + w, y1 + h)


def random_eval_instance(
    rng: np.random.Generator,
    max_images: int = 5,
    max_dets_per_image: int = 30,
    max_classes: int = 4,
):
    """A random (detections, ground truth) pair exercising the sharp edges.

    Includes crowd regions, score ties, areas pinned to the small/large
    boundary, classes with zero ground truth, and empty images.
    """
    n_classes = int(rng.integers(1, max_classes + 1))
    catalog = ClassCatalog.from_names([f"class{i}" for i in range(1, n_classes + 1)])
    n_images = int(rng.integers(1, max_images + 1))
    image_ids = sorted(rng.choice(200, size=n_images, replace=False).tolist())
    sizes = {img: (320, 240) for img in image_ids}
    zero_gt_class = int(rng.integers(1, n_classes + 1)) if rng.random() < 0.4 else None

    boxes_by_image: dict[int, list[GroundTruthBox]] = {}
    for img in image_ids:
        gts = []
        for _ in range(int(rng.integers(0, 6))):
            class_id = int(rng.integers(1, n_classes + 1))
            if class_id == zero_gt_class:
                continue
            box = random_box(rng, *sizes[img])
            if rng.random() < 0.3:
                # pin the area to the small/large boundary; 32x32 = 1024
                box = BoundingBox(box.x1, box.y1, box.x1 + 32.0, box.y1 + 32.0)
            iscrowd = bool(rng.random() < 0.15)
            area = None
            if rng.random() < 0.25:
                area = float(rng.choice([512.0, 1024.0, 1024.25, 4096.0]))
            gts.append(GroundTruthBox(box=box, class_id=class_id, iscrowd=iscrowd, area=area))
        boxes_by_image[img] = gts
    ground_truth = GroundTruthSet(image_sizes=sizes, boxes_by_image=boxes_by_image, catalog=catalog)

    detections: dict[int, list[Detection]] = {}
    tie_scores = [round(float(s), 6) for s in rng.uniform(0.05, 0.95, size=4)]
    for img in image_ids:
        dets = []
        n_dets = int(rng.integers(0, max_dets_per_image + 1))
        for _ in range(n_dets):
            class_id = int(rng.integers(1, n_classes + 1))
            gts = [g for g in boxes_by_image[img] if g.class_id == class_id]
            if gts and rng.random() < 0.6:
                # near a ground-truth box so matching actually happens
                g = gts[int(rng.integers(len(gts)))]
                dx = float(rng.integers(-16, 17)) / 4.0
                dy = float(rng.integers(-16, 17)) / 4.0
                box = g.box.translate(dx, dy)
                if box.x2 > sizes[img][0] or box.y2 > sizes[img][1] or box.x1 < 0 or box.y1 < 0:
                    box = g.box
            else:
                box = random_box(rng, *sizes[img])
            score = float(rng.choice(tie_scores)) if rng.random() < 0.5 else round(
                float(rng.uniform(0.01, 0.99)), 6
            )
            dets.append(Detection.uncalibrated(box=box, class_id=class_id, score=score))
        dets.sort(key=lambda d: -d.calibrated_score)
        detections[img] = dets
    return detections, ground_truth


def to_oracle_dicts(detections, ground_truth):
    """Engine objects -> plain COCO-style dicts for the reference evaluator."""
    gts, dts = [], []
    ann_id = 1
    for img in sorted(ground_truth.image_sizes):
        for g in ground_truth.boxes_for(img):
            x1, y1, x2, y2 = g.box.as_xyxy()
            gts.append(
                {
                    "id": ann_id,
                    "image_id": img,
                    "category_id": g.class_id,
                    "bbox": [x1, y1, x2 - x1, y2 - y1],
                    "area": g.effective_area,
                    "iscrowd": int(g.iscrowd),
                }
            )
            ann_id += 1
    det_id = 1
    for img in sorted(detections):
        for d in detections[img]:
            x1, y1, x2, y2 = d.box.as_xyxy()
            dts.append(
                {
                    "id": det_id,
                    "image_id": img,
                    "category_id": d.class_id,
                    "bbox": [x1, y1, x2 - x1, y2 - y1],
                    "score": d.calibrated_score,
                }
            )
            det_id += 1
    img_ids = sorted(ground_truth.image_sizes)
    cat_ids = list(ground_truth.catalog.class_ids)
    return gts, dts, img_ids, cat_ids


@pytest.fixture
def three_class_catalog() -> ClassCatalog:
    return ClassCatalog.from_names(["scallop", "sea urchin", "starfish"])


@pytest.fixture
def tiny_scene(three_class_catalog, tmp_path):
    """A small noiseless synthetic scene saved to disk with its artifacts."""
    from phrasedet.pipeline import generate_scene_artifacts

    paths = generate_scene_artifacts(
        ["scallop", "sea urchin", "starfish"],
        tmp_path / "scene",
        n_images=4,
        seed=11,
        with_bundle=True,
    )
    return paths
