"""Shared fixtures: a tiny hand-written COCO world, no engine imports."""

import json
from pathlib import Path

import pytest

CLASS_NAMES = ["scallop", "sea urchin", "starfish"]

# one 64x64 object per image on an 80px-aligned cell, classes cycling
GT_BOX = (160.0, 160.0, 224.0, 224.0)
SMALL_BOX = (160.0, 160.0, 184.0, 184.0)  # 24x24 = 576 < 1024


def build_world(
    root: Path, n_images: int = 4, small: bool = False, size: tuple[int, int] = (640, 480)
) -> dict[str, Path]:
    """Write annotations + support set for a deterministic toy dataset."""
    root.mkdir(parents=True, exist_ok=True)
    box = SMALL_BOX if small else GT_BOX
    x1, y1, x2, y2 = box
    images = []
    annotations = []
    for i in range(1, n_images + 1):
        images.append(
            {"id": i, "width": size[0], "height": size[1], "file_name": f"img_{i}.png"}
        )
        class_id = (i - 1) % len(CLASS_NAMES) + 1
        annotations.append(
            {
                "id": i,
                "image_id": i,
                "category_id": class_id,
                "bbox": [x1, y1, x2 - x1, y2 - y1],
                "area": (x2 - x1) * (y2 - y1),
                "iscrowd": 0,
            }
        )
    payload = {
        "images": images,
        "annotations": annotations,
        "categories": [
            {"id": c + 1, "name": name} for c, name in enumerate(CLASS_NAMES)
        ],
    }
    annotations_path = root / "annotations.json"
    annotations_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    support = [
        {
            "class_id": c + 1,
            "class_name": name,
            "image": f"img_{c + 1}.png",
            "bbox_xyxy": list(box),
            "domain": "underwater",
        }
        for c, name in enumerate(CLASS_NAMES)
    ]
    support_path = root / "support.json"
    support_path.write_text(json.dumps(support, indent=2, sort_keys=True) + "\n")
    return {"annotations": annotations_path, "support": support_path}


def write_prompt_file(root: Path, per_class_phrases: list[list[str]]) -> Path:
    """Bare prompt array, 1-based indexes, ordered by class."""
    entries = []
    for c, phrases in enumerate(per_class_phrases, start=1):
        for m, text in enumerate(phrases, start=1):
            entries.append({"class_id": c, "phrase_index": m, "text": text})
    path = root / "prompts.json"
    path.write_text(json.dumps(entries) + "\n")
    return path


@pytest.fixture
def world(tmp_path):
    return build_world(tmp_path / "world")


@pytest.fixture
def small_world(tmp_path):
    return build_world(tmp_path / "small", small=True)


@pytest.fixture
def prompt_file(tmp_path):
    return write_prompt_file(
        tmp_path,
        [
            ["round scallop", "ribbed shell"],
            ["spiny sea urchin", "dark spines"],
            ["starfish", "five arms"],
        ],
    )
