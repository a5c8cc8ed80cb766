"""Category assignment, top-K selection, and selective calibration.

Per-phrase grounding scores are mean-pooled into one objectness value
per (box, class); the global top-K pairs become detections; small boxes
optionally get their score blended with an image-text alignment score.
Column c of every matrix corresponds to class id c+1 (catalog ids are
contiguous from 1).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .backends.base import AlignerBackend, AlignRequest
from .entities import Detection, PhraseLibrary, ScoreTensor
from .errors import BackendError, ValidationError
from .geometry import BoundingBox, box_area, iou

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 300
DEFAULT_CALIBRATION_WEIGHT = 0.02
# Boxes below 32x32 px^2 count as small and are eligible for calibration.
DEFAULT_SMALL_AREA_THRESHOLD = 32.0 * 32.0


@dataclass(frozen=True, slots=True)
class SelectionConfig:
    """Knobs for selection and calibration."""

    top_k: int = DEFAULT_TOP_K
    calibration_weight: float = DEFAULT_CALIBRATION_WEIGHT
    small_area_threshold: float = DEFAULT_SMALL_AREA_THRESHOLD
    calibration_enabled: bool = True
    strict_calibration: bool = False
    resort_after_calibration: bool = True
    nms_iou: float | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.top_k, int) or self.top_k < 1:
            raise ValidationError(f"top_k must be a positive int, got {self.top_k!r}")
        if not (0.0 <= self.calibration_weight <= 1.0):
            raise ValidationError(
                f"calibration_weight must lie in [0, 1], got {self.calibration_weight!r}"
            )
        if not (math.isfinite(self.small_area_threshold) and self.small_area_threshold > 0.0):
            raise ValidationError(
                f"small_area_threshold must be positive, got {self.small_area_threshold!r}"
            )
        if self.nms_iou is not None and not (0.0 < self.nms_iou < 1.0):
            raise ValidationError(f"nms_iou must lie in (0, 1), got {self.nms_iou!r}")


@dataclass(frozen=True)
class CategoryScoreMatrix:
    """Mean-pooled objectness per (box, class) for one image."""

    image_ref: int | str
    boxes: tuple[BoundingBox, ...]
    scores: np.ndarray  # shape (N, C), read-only

    def __post_init__(self) -> None:
        if self.scores.ndim != 2 or self.scores.shape[0] != len(self.boxes):
            raise ValidationError(
                f"score matrix shape {self.scores.shape} does not match {len(self.boxes)} boxes"
            )
        if self.scores.size and (self.scores.min() < 0.0 or self.scores.max() > 1.0):
            raise ValidationError("score matrix values must lie in [0, 1]")
        self.scores.setflags(write=False)


def assign_categories(tensor: ScoreTensor) -> CategoryScoreMatrix:
    """Mean-pool phrase scores into per-class objectness.

    Uses exactly-rounded summation, so permuting the phrases of a class
    changes nothing, bit for bit. Averaging (rather than max) keeps one
    lucky phrase from dominating the assignment.
    """
    n = tensor.num_boxes
    c = tensor.num_classes
    matrix = np.zeros((n, c), dtype=np.float64)
    for i, row in enumerate(tensor.scores):
        for col, per_phrase in enumerate(row):
            matrix[i, col] = math.fsum(per_phrase) / len(per_phrase)
    return CategoryScoreMatrix(image_ref=tensor.image_ref, boxes=tensor.boxes, scores=matrix)


def select_top_k(matrix: CategoryScoreMatrix, config: SelectionConfig) -> list[Detection]:
    """Keep the K best (box, class) pairs of the whole image.

    Flattens all N*C pairs; ties break toward the lower box index, then
    the lower class index. The same physical box may appear under
    several classes. Returns min(K, N*C) detections, best first.
    """
    n, c = matrix.scores.shape
    if n == 0:
        return []
    order = sorted(
        ((i, col) for i in range(n) for col in range(c)),
        key=lambda pair: (-matrix.scores[pair[0], pair[1]], pair[0], pair[1]),
    )
    detections = []
    for i, col in order[: config.top_k]:
        score = float(matrix.scores[i, col])
        detections.append(Detection.uncalibrated(matrix.boxes[i], col + 1, score))
    return detections


def calibrate(
    detections: list[Detection],
    image_ref: int | str,
    library: PhraseLibrary,
    aligner: AlignerBackend,
    config: SelectionConfig,
) -> list[Detection]:
    """Blend alignment evidence into small detections.

    Only boxes with area below the small-area threshold are touched;
    everything else passes through as the same object. A failed
    alignment query leaves that detection uncalibrated and is logged;
    if every query fails, strict mode aborts instead.
    """
    if not config.calibration_enabled:
        return list(detections)
    weight = config.calibration_weight
    out: list[Detection] = []
    attempts = 0
    failures = 0
    first_error: BackendError | None = None
    for det in detections:
        if box_area(det.box) >= config.small_area_threshold:
            out.append(det)
            continue
        attempts += 1
        description = library.description_for(det.class_id)
        try:
            alignment = aligner.align(
                AlignRequest(image_ref=image_ref, box=det.box, description=description)
            )
        except BackendError as exc:
            failures += 1
            first_error = first_error or exc
            logger.warning(
                "alignment failed for image %s box %s: %s; detection passes through uncalibrated",
                image_ref,
                det.box.as_xyxy(),
                exc,
            )
            out.append(det)
            continue
        if not (0.0 <= alignment <= 1.0):
            raise ValidationError(f"aligner returned {alignment!r}, outside [0, 1]")
        calibrated = (1.0 - weight) * det.raw_score + weight * alignment
        out.append(
            Detection(
                box=det.box,
                class_id=det.class_id,
                raw_score=det.raw_score,
                calibrated_score=calibrated,
                calibration_applied=True,
                alignment_score=alignment,
            )
        )
    if attempts and failures == attempts and config.strict_calibration:
        raise BackendError(f"aligner failed on all {attempts} small boxes") from first_error
    if config.resort_after_calibration:
        out.sort(key=lambda d: -d.calibrated_score)  # stable: ties keep incoming order
    return out


def class_wise_nms(detections: list[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy non-maximum suppression within each class.

    Optional ablation aid, off by default; the engine's selection
    normally relies on top-K alone.
    """
    kept: list[Detection] = []
    by_class: dict[int, list[Detection]] = {}
    for det in sorted(detections, key=lambda d: -d.calibrated_score):
        rivals = by_class.setdefault(det.class_id, [])
        if any(iou(det.box, other.box) > iou_threshold for other in rivals):
            continue
        rivals.append(det)
        kept.append(det)
    return kept


def poe_energy_check(raw_score: float, alignment_score: float, weight: float) -> tuple[float, float]:
    """Linear blend vs product-of-experts energy view of the same pair.

    Returns (linear, product) where linear = (1-w)*raw + w*alignment and
    product = exp(-(E_obj + E_vl)) with E = -log score. Zero scores have
    no finite energy and are rejected.
    """
    for label, value in (("raw_score", raw_score), ("alignment_score", alignment_score)):
        if not (0.0 < value <= 1.0):
            raise ValidationError(f"{label} must lie in (0, 1] for the energy view, got {value!r}")
    if not (0.0 <= weight <= 1.0):
        raise ValidationError(f"weight must lie in [0, 1], got {weight!r}")
    linear = (1.0 - weight) * raw_score + weight * alignment_score
    energy = -math.log(raw_score) - math.log(alignment_score)
    product = math.exp(-energy)
    return (linear, product)
