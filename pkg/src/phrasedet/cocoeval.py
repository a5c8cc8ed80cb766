"""Detection scoring under the standard COCO protocol.

Greedy IoU matching per (image, class) with crowd and ignore handling,
101-point interpolated precision over 10 IoU thresholds, small-object
breakdown, and recall at 1/10/100 detections. Semantics follow the
canonical public evaluator exactly, with one deliberate exception: the
precision denominator uses exact division (0/0 defined as 0) instead of
an epsilon guard, so perfect inputs score exactly 1.0. The divergence
is below 1e-15 and covered by the oracle-equivalence tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .entities import ClassCatalog, Detection
from .errors import ValidationError
from .geometry import BoundingBox, box_area, intersection_area

IOU_THRESHOLDS: tuple[float, ...] = tuple(np.linspace(0.5, 0.95, 10))
RECALL_POINTS = 101
MAX_DETS: tuple[int, ...] = (1, 10, 100)

# Inclusive on both ends, like the canonical evaluator: a ground-truth
# box of exactly 32*32 px^2 counts as small here and as medium there.
AREA_ALL: tuple[float, float] = (0.0, 1e10)
AREA_SMALL: tuple[float, float] = (0.0, 32.0 * 32.0)


@dataclass(frozen=True, slots=True)
class GroundTruthBox:
    """One annotated object; crowd regions match leniently and are ignored."""

    box: BoundingBox
    class_id: int
    iscrowd: bool = False
    area: float | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.class_id, int) or self.class_id < 1:
            raise ValidationError(f"ground truth class_id must be a positive int, got {self.class_id!r}")
        if self.area is not None and not self.area > 0.0:
            raise ValidationError(f"ground truth area must be positive, got {self.area!r}")

    @property
    def effective_area(self) -> float:
        return self.area if self.area is not None else box_area(self.box)


@dataclass
class GroundTruthSet:
    """All annotations of one dataset split, plus its image universe."""

    image_sizes: dict[int, tuple[int, int]]
    boxes_by_image: dict[int, tuple[GroundTruthBox, ...]]
    catalog: ClassCatalog

    def __post_init__(self) -> None:
        if not self.image_sizes:
            raise ValidationError("ground truth set has no images")
        n_classes = len(self.catalog)
        for image_id, boxes in self.boxes_by_image.items():
            if image_id not in self.image_sizes:
                raise ValidationError(f"annotations reference unknown image id {image_id}")
            for g in boxes:
                if g.class_id > n_classes:
                    raise ValidationError(
                        f"annotation in image {image_id} references unknown class id {g.class_id}"
                    )

    def boxes_for(self, image_id: int) -> tuple[GroundTruthBox, ...]:
        return self.boxes_by_image.get(image_id, ())


@dataclass(frozen=True)
class EvalReport:
    """Headline metrics of one evaluation; -1.0 marks undefined entries."""

    mean_ap: float
    ap50: float
    ap_small: float
    ar_1: float
    ar_10: float
    ar_100: float
    per_class_ap: dict[int, float] = field(default_factory=dict)
    config_fingerprint: str = ""

    def __post_init__(self) -> None:
        for label in ("mean_ap", "ap50", "ap_small", "ar_1", "ar_10", "ar_100"):
            value = getattr(self, label)
            if value != -1.0 and not (0.0 <= value <= 1.0):
                raise ValidationError(f"metric {label}={value!r} must lie in [0, 1] or be -1")
        for class_id, value in self.per_class_ap.items():
            if value != -1.0 and not (0.0 <= value <= 1.0):
                raise ValidationError(f"per-class AP for {class_id} is {value!r}")

    def to_dict(self) -> dict:
        return {
            "mean_ap": self.mean_ap,
            "ap50": self.ap50,
            "ap_small": self.ap_small,
            "ar_1": self.ar_1,
            "ar_10": self.ar_10,
            "ar_100": self.ar_100,
            "per_class_ap": {str(k): v for k, v in self.per_class_ap.items()},
            "config_fingerprint": self.config_fingerprint,
        }


def _pair_iou(det_box: BoundingBox, gt: GroundTruthBox) -> float:
    """Crowd ground truth uses intersection over the detection area."""
    inter = intersection_area(det_box, gt.box)
    if inter <= 0.0:
        return 0.0
    if gt.iscrowd:
        return inter / box_area(det_box)
    return inter / (box_area(det_box) + box_area(gt.box) - inter)


@dataclass
class _CellResult:
    """Match outcome of one (image, class, area range) cell."""

    scores: np.ndarray  # (D,) calibrated scores, best first
    matched: np.ndarray  # (T, D) bool
    det_ignored: np.ndarray  # (T, D) bool
    n_countable_gt: int


def _evaluate_cell(
    dets: list[Detection],
    gts: list[GroundTruthBox],
    thresholds: tuple[float, ...],
    area_range: tuple[float, float],
    max_det: int,
) -> _CellResult | None:
    if not dets and not gts:
        return None
    lo, hi = area_range
    scores = np.array([d.calibrated_score for d in dets], dtype=np.float64)
    order = np.argsort(-scores, kind="stable")[:max_det]
    dets = [dets[i] for i in order]
    scores = scores[order]

    gt_ignored = [g.iscrowd or g.effective_area < lo or g.effective_area > hi for g in gts]
    gt_order = sorted(range(len(gts)), key=lambda j: gt_ignored[j])  # countable first
    gts = [gts[j] for j in gt_order]
    gt_ig = [gt_ignored[j] for j in gt_order]

    n_det, n_gt = len(dets), len(gts)
    ious = np.array(
        [[_pair_iou(d.box, g) for g in gts] for d in dets], dtype=np.float64
    ).reshape(n_det, n_gt)

    n_thr = len(thresholds)
    matched = np.zeros((n_thr, n_det), dtype=bool)
    det_ignored = np.zeros((n_thr, n_det), dtype=bool)
    det_out_of_range = np.array(
        [box_area(d.box) < lo or box_area(d.box) > hi for d in dets], dtype=bool
    )
    for t_idx, threshold in enumerate(thresholds):
        gt_matched = [False] * n_gt
        for d in range(n_det):
            best = min(threshold, 1.0 - 1e-10)
            m = -1
            for k in range(n_gt):
                if gt_matched[k] and not gts[k].iscrowd:
                    continue
                # countable gts come first; once one is matched, stop
                # before the ignored tail
                if m > -1 and not gt_ig[m] and gt_ig[k]:
                    break
                if ious[d, k] < best:
                    continue
                best = ious[d, k]
                m = k
            if m == -1:
                continue
            gt_matched[m] = True
            matched[t_idx, d] = True
            det_ignored[t_idx, d] = gt_ig[m]
        # unmatched detections outside the area range never count as FP
        det_ignored[t_idx] |= ~matched[t_idx] & det_out_of_range
    return _CellResult(
        scores=scores,
        matched=matched,
        det_ignored=det_ignored,
        n_countable_gt=sum(1 for ig in gt_ig if not ig),
    )


def _precision_recall(
    tp_cum: np.ndarray, fp_cum: np.ndarray, n_gt: int, recall_grid: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """101-point interpolated precision and final recall per threshold row."""
    n_thr, n_det = tp_cum.shape
    precision = np.zeros((n_thr, len(recall_grid)), dtype=np.float64)
    recall = np.zeros(n_thr, dtype=np.float64)
    for t in range(n_thr):
        tp, fp = tp_cum[t], fp_cum[t]
        if n_det == 0:
            continue
        rc = tp / n_gt
        denominator = tp + fp
        pr = np.divide(tp, denominator, out=np.zeros_like(tp), where=denominator > 0)
        recall[t] = rc[-1]
        envelope = np.maximum.accumulate(pr[::-1])[::-1]
        indices = np.searchsorted(rc, recall_grid, side="left")
        valid = indices < n_det
        precision[t, valid] = envelope[indices[valid]]
    return precision, recall


def match_detections(
    detections: list[Detection],
    ground_truth: list[GroundTruthBox],
    iou_threshold: float,
    class_id: int,
) -> list[str]:
    """Greedy one-image matching at a single IoU threshold.

    Detections must arrive sorted by calibrated score, best first; only
    those of class_id are matched (against that class's ground truth)
    and labeled "tp", "fp" or "ignored" in their given order. Each
    countable ground-truth box is matched at most once; crowd boxes may
    absorb any number of detections, which are then ignored.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise ValidationError(f"iou_threshold must lie in (0, 1], got {iou_threshold!r}")
    class_dets = [d for d in detections if d.class_id == class_id]
    for earlier, later in zip(class_dets, class_dets[1:]):
        if later.calibrated_score > earlier.calibrated_score:
            raise ValidationError("detections must be sorted by calibrated score, best first")
    class_gts = [g for g in ground_truth if g.class_id == class_id]
    cell = _evaluate_cell(
        class_dets, class_gts, (iou_threshold,), AREA_ALL, max_det=max(len(class_dets), 1)
    )
    if cell is None:
        return []
    labels = []
    for d in range(len(class_dets)):
        if cell.det_ignored[0, d]:
            labels.append("ignored")
        elif cell.matched[0, d]:
            labels.append("tp")
        else:
            labels.append("fp")
    return labels


def average_precision(labels: list[str], n_gt: int, recall_points: int = RECALL_POINTS) -> float:
    """Interpolated AP from ordered match labels.

    labels run best-score first, each "tp", "fp" or "ignored"; n_gt
    counts countable ground truth. Precision is sampled at
    recall_points evenly spaced recall values (COCO uses 101) after
    taking the right-to-left precision envelope. Returns -1.0 when
    there is no countable ground truth.
    """
    if n_gt < 0:
        raise ValidationError(f"n_gt must be non-negative, got {n_gt}")
    if recall_points < 2:
        raise ValidationError(f"recall_points must be at least 2, got {recall_points}")
    if n_gt == 0:
        return -1.0
    allowed = {"tp", "fp", "ignored"}
    for label in labels:
        if label not in allowed:
            raise ValidationError(f"unknown match label {label!r}")
    flags = np.array([label == "tp" for label in labels if label != "ignored"] or [], dtype=bool)
    tp_cum = np.cumsum(flags, dtype=np.float64).reshape(1, -1)
    fp_cum = np.cumsum(~flags, dtype=np.float64).reshape(1, -1)
    grid = np.linspace(0.0, 1.0, recall_points)
    precision, _ = _precision_recall(tp_cum, fp_cum, n_gt, grid)
    return float(precision[0].mean())


def _accumulate_class(
    cells: list[_CellResult], max_det: int, recall_grid: np.ndarray
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Pool one class's cells at one maxDet cap; None means no countable GT."""
    if not cells:
        return None, None
    n_gt = sum(c.n_countable_gt for c in cells)
    if n_gt == 0:
        return None, None
    n_thr = cells[0].matched.shape[0]
    scores = np.concatenate([c.scores[:max_det] for c in cells])
    order = np.argsort(-scores, kind="stable")
    matched = np.concatenate([c.matched[:, :max_det] for c in cells], axis=1)[:, order]
    ignored = np.concatenate([c.det_ignored[:, :max_det] for c in cells], axis=1)[:, order]
    tp_cum = np.cumsum(matched & ~ignored, axis=1, dtype=np.float64)
    fp_cum = np.cumsum(~matched & ~ignored, axis=1, dtype=np.float64)
    if tp_cum.shape[1] == 0:
        tp_cum = np.zeros((n_thr, 0))
        fp_cum = np.zeros((n_thr, 0))
    return _precision_recall(tp_cum, fp_cum, n_gt, recall_grid)


def evaluate(
    detections_by_image: dict[int, list[Detection]],
    ground_truth: GroundTruthSet,
    config_fingerprint: str = "",
    max_dets: tuple[int, ...] = MAX_DETS,
) -> EvalReport:
    """Score detections against ground truth under the COCO protocol.

    Detections may carry any scores in [0, 1]; only the top
    max(max_dets) per (image, class) enter matching, best calibrated
    score first with stable ties. Classes without countable ground
    truth report -1.0 and stay out of every mean.
    """
    n_classes = len(ground_truth.catalog)
    for image_id, dets in detections_by_image.items():
        if image_id not in ground_truth.image_sizes:
            raise ValidationError(f"detections reference unknown image id {image_id}")
        for d in dets:
            if d.class_id > n_classes:
                raise ValidationError(
                    f"detection in image {image_id} references unknown class id {d.class_id}"
                )
    image_ids = sorted(ground_truth.image_sizes)
    recall_grid = np.linspace(0.0, 1.0, RECALL_POINTS)
    deepest = max(max_dets)
    thresholds = IOU_THRESHOLDS

    per_class_ap: dict[int, float] = {}
    ap50_values: list[float] = []
    ap_small_values: list[float] = []
    recall_by_cap: dict[int, list[float]] = {m: [] for m in max_dets}

    for class_id in ground_truth.catalog.class_ids:
        class_cells: dict[str, list[_CellResult]] = {"all": [], "small": []}
        for image_id in image_ids:
            dets = [
                d for d in detections_by_image.get(image_id, []) if d.class_id == class_id
            ]
            gts = [g for g in ground_truth.boxes_for(image_id) if g.class_id == class_id]
            for label, area_range in (("all", AREA_ALL), ("small", AREA_SMALL)):
                cell = _evaluate_cell(dets, gts, thresholds, area_range, deepest)
                if cell is not None:
                    class_cells[label].append(cell)

        precision_all, recall_all = _accumulate_class(class_cells["all"], deepest, recall_grid)
        if precision_all is None:
            per_class_ap[class_id] = -1.0
        else:
            per_class_ap[class_id] = float(precision_all.mean())
            ap50_values.append(float(precision_all[0].mean()))
            for cap in max_dets:
                if cap == deepest:
                    recall_by_cap[cap].append(float(recall_all.mean()))
                else:
                    _, recall_capped = _accumulate_class(class_cells["all"], cap, recall_grid)
                    recall_by_cap[cap].append(float(recall_capped.mean()))

        precision_small, _ = _accumulate_class(class_cells["small"], deepest, recall_grid)
        if precision_small is not None:
            ap_small_values.append(float(precision_small.mean()))

    valid_aps = [v for v in per_class_ap.values() if v != -1.0]

    def _mean(values: list[float]) -> float:
        return float(np.mean(values)) if values else -1.0

    recalls = {m: _mean(recall_by_cap[m]) for m in max_dets}
    return EvalReport(
        mean_ap=_mean(valid_aps),
        ap50=_mean(ap50_values),
        ap_small=_mean(ap_small_values),
        ar_1=recalls.get(1, -1.0),
        ar_10=recalls.get(10, -1.0),
        ar_100=recalls.get(100, -1.0),
        per_class_ap=per_class_ap,
        config_fingerprint=config_fingerprint,
    )
