"""COCO-protocol evaluation, checked against hand math and the reference oracle."""

import numpy as np
import pytest
from oracle_cocoeval import oracle_metrics

from conftest import random_eval_instance, to_oracle_dicts
from phrasedet.cocoeval import (
    GroundTruthBox,
    GroundTruthSet,
    average_precision,
    evaluate,
    match_detections,
)
from phrasedet.entities import ClassCatalog, Detection
from phrasedet.errors import ValidationError
from phrasedet.geometry import BoundingBox

CAT1 = ClassCatalog.from_names(["thing"])

HAND_AP = (51 * 1.0 + 50 * (2.0 / 3.0)) / 101.0


def gt_set(boxes_by_image, catalog=CAT1, size=(320, 240)):
    sizes = {img: size for img in boxes_by_image}
    return GroundTruthSet(image_sizes=sizes, boxes_by_image=boxes_by_image, catalog=catalog)


def gt(x1, y1, x2, y2, class_id=1, iscrowd=False, area=None):
    return GroundTruthBox(
        box=BoundingBox(x1, y1, x2, y2), class_id=class_id, iscrowd=iscrowd, area=area
    )


def det(x1, y1, x2, y2, score, class_id=1):
    return Detection.uncalibrated(BoundingBox(x1, y1, x2, y2), class_id, score)


def test_average_precision_hand_case():
    assert average_precision(["tp", "fp", "tp"], n_gt=2) == pytest.approx(HAND_AP, abs=1e-12)
    assert abs(average_precision(["tp", "fp", "tp"], 2) - 0.8350) < 1e-4


def test_average_precision_edge_cases():
    assert average_precision([], 0) == -1.0
    assert average_precision(["fp"], 0) == -1.0
    assert average_precision([], 3) == 0.0
    assert average_precision(["tp", "ignored", "fp", "tp"], 2) == pytest.approx(HAND_AP)
    assert average_precision(["tp", "tp"], 2) == 1.0
    with pytest.raises(ValidationError):
        average_precision(["tp", "??"], 2)
    with pytest.raises(ValidationError):
        average_precision([], -1)


def test_hand_case_through_full_evaluator_and_oracle():
    # two gts; det ranking produces [tp, fp, tp] at every IoU threshold
    truth = gt_set({1: [gt(0, 0, 10, 10), gt(100, 100, 110, 110)]})
    dets = {
        1: [
            det(0, 0, 10, 10, 0.9),
            det(200, 0, 210, 10, 0.8),
            det(100, 100, 110, 110, 0.7),
        ]
    }
    report = evaluate(dets, truth)
    assert report.mean_ap == pytest.approx(HAND_AP, abs=1e-9)
    assert report.ap50 == pytest.approx(HAND_AP, abs=1e-9)
    oracle = oracle_metrics(*to_oracle_dicts(dets, truth))
    assert report.mean_ap == pytest.approx(oracle["mAP"], abs=1e-6)
    assert report.ap50 == pytest.approx(oracle["AP50"], abs=1e-6)


def test_perfect_detections_score_exactly_one():
    truth = gt_set({1: [gt(0, 0, 50, 50)], 2: [gt(60, 60, 100, 100), gt(0, 0, 40, 40)]})
    dets = {
        1: [det(0, 0, 50, 50, 0.9)],
        2: [det(60, 60, 100, 100, 0.8), det(0, 0, 40, 40, 0.7)],
    }
    report = evaluate(dets, truth)
    assert report.mean_ap == 1.0  # exactly, not approximately
    assert report.ap50 == 1.0
    assert report.ar_100 == 1.0
    assert report.per_class_ap == {1: 1.0}


def test_zero_gt_class_reports_sentinel_and_stays_out_of_means():
    catalog = ClassCatalog.from_names(["a", "b"])
    truth = gt_set({1: [gt(0, 0, 50, 50, class_id=1)]}, catalog=catalog)
    dets = {1: [det(0, 0, 50, 50, 0.9, class_id=1), det(60, 60, 70, 70, 0.8, class_id=2)]}
    report = evaluate(dets, truth)
    assert report.per_class_ap == {1: 1.0, 2: -1.0}
    assert report.mean_ap == 1.0


def test_no_countable_gt_anywhere_reports_sentinels():
    truth = gt_set({1: [gt(0, 0, 50, 50, iscrowd=True)]})
    report = evaluate({1: [det(0, 0, 50, 50, 0.9)]}, truth)
    assert report.mean_ap == -1.0
    assert report.ap50 == -1.0
    assert report.ap_small == -1.0
    assert report.ar_100 == -1.0


def test_crowd_absorbs_detections_instead_of_penalizing():
    # one countable gt plus a crowd region swallowing two stray dets
    truth = gt_set({1: [gt(0, 0, 20, 20), gt(100, 100, 200, 200, iscrowd=True)]})
    dets = {
        1: [
            det(0, 0, 20, 20, 0.9),
            det(110, 110, 130, 130, 0.8),
            det(150, 150, 190, 190, 0.7),
        ]
    }
    report = evaluate(dets, truth)
    assert report.mean_ap == 1.0  # the crowd hits are ignored, not false positives


def test_gt_area_field_overrides_box_area_for_small_range():
    # box area 10000 but labeled area 900: counts as small
    truth = gt_set({1: [gt(0, 0, 100, 100, area=900.0)]})
    report = evaluate({1: [det(0, 0, 100, 100, 0.9)]}, truth)
    assert report.ap_small == 1.0


def test_small_area_bounds_are_inclusive_at_1024():
    # 32x32 boxes: area exactly 1024 stays inside [0, 1024]
    truth = gt_set({1: [gt(0, 0, 32, 32)]})
    report = evaluate({1: [det(0, 0, 32, 32, 0.9)]}, truth)
    assert report.ap_small == 1.0
    # one quarter-pixel more and it leaves the small range
    truth2 = gt_set({1: [gt(0, 0, 32, 32.25)]})
    report2 = evaluate({1: [det(0, 0, 32, 32.25, 0.9)]}, truth2)
    assert report2.ap_small == -1.0


def test_unmatched_out_of_range_detection_is_ignored_not_fp():
    truth = gt_set({1: [gt(0, 0, 20, 20)]})  # area 400: small
    dets = {1: [det(100, 100, 250, 250, 0.95), det(0, 0, 20, 20, 0.9)]}
    report = evaluate(dets, truth)
    # in the small range the big stray det is ignored, so AP_small is clean
    assert report.ap_small == 1.0
    # in the all range it is a plain false positive ranked first:
    # labels [fp, tp] give precision 1/2 at the single recall point, and
    # the envelope carries that across the whole grid
    assert report.mean_ap == pytest.approx(0.5, abs=1e-9)


def test_equal_iou_tie_matches_the_later_ground_truth():
    # det1 overlaps gts A and B with identical IoU (2/3); the reference
    # rule hands it to the later one, leaving A free for det2
    truth = gt_set({1: [gt(0, 0, 10, 10), gt(4, 0, 14, 10)]})
    dets = {1: [det(2, 0, 12, 10, 0.9), det(0, 0, 10, 10, 0.8)]}
    report = evaluate(dets, truth)
    assert report.ap50 == 1.0
    oracle = oracle_metrics(*to_oracle_dicts(dets, truth))
    assert report.ap50 == pytest.approx(oracle["AP50"], abs=1e-6)


def test_ar_caps_limit_detections_per_image_and_class():
    truth = gt_set({1: [gt(0, 0, 50, 50), gt(100, 100, 150, 150)]})
    dets = {1: [det(0, 0, 50, 50, 0.9), det(100, 100, 150, 150, 0.8)]}
    report = evaluate(dets, truth)
    assert report.ar_1 == 0.5
    assert report.ar_10 == 1.0
    assert report.ar_100 == 1.0


def test_max_det_truncation_applies_before_matching():
    # 101 junk dets outrank the only true hit, which the 100-cap drops
    gt_box = gt(0, 0, 50, 50)
    junk = [det(200 + i * 0.25, 200, 210 + i * 0.25, 210, 0.99) for i in range(101)]
    dets = {1: junk + [det(0, 0, 50, 50, 0.5)]}
    truth = gt_set({1: [gt_box]})
    report = evaluate(dets, truth)
    assert report.ar_100 == 0.0
    assert report.mean_ap == 0.0
    oracle = oracle_metrics(*to_oracle_dicts(dets, truth))
    assert report.mean_ap == pytest.approx(oracle["mAP"], abs=1e-6)
    assert report.ar_100 == pytest.approx(oracle["AR@100"], abs=1e-6)


def test_detections_for_unknown_image_or_class_are_rejected():
    truth = gt_set({1: [gt(0, 0, 50, 50)]})
    with pytest.raises(ValidationError):
        evaluate({2: [det(0, 0, 50, 50, 0.9)]}, truth)
    with pytest.raises(ValidationError):
        evaluate({1: [det(0, 0, 50, 50, 0.9, class_id=9)]}, truth)


def test_match_detections_labels():
    gts = [gt(0, 0, 10, 10), gt(100, 100, 200, 200, iscrowd=True)]
    dets = [
        det(0, 0, 10, 10, 0.9),
        det(120, 120, 140, 140, 0.8),
        det(300, 300, 310, 310, 0.7),
    ]
    assert match_detections(dets, gts, 0.5, class_id=1) == ["tp", "ignored", "fp"]
    with pytest.raises(ValidationError):
        match_detections(list(reversed(dets)), gts, 0.5, class_id=1)
    with pytest.raises(ValidationError):
        match_detections(dets, gts, 0.0, class_id=1)
    assert match_detections([], [], 0.5, class_id=1) == []


def test_report_serialization_and_fingerprint():
    truth = gt_set({1: [gt(0, 0, 50, 50)]})
    report = evaluate({1: [det(0, 0, 50, 50, 0.9)]}, truth, config_fingerprint="abc123")
    payload = report.to_dict()
    assert payload["config_fingerprint"] == "abc123"
    assert payload["mean_ap"] == 1.0
    assert payload["per_class_ap"] == {"1": 1.0}


@pytest.mark.parametrize("seed", range(20))
def test_matches_reference_oracle_on_random_instances(seed):
    rng = np.random.default_rng(seed + 1000)
    detections, truth = random_eval_instance(rng)
    report = evaluate(detections, truth)
    oracle = oracle_metrics(*to_oracle_dicts(detections, truth))
    assert report.mean_ap == pytest.approx(oracle["mAP"], abs=1e-6)
    assert report.ap50 == pytest.approx(oracle["AP50"], abs=1e-6)
    assert report.ap_small == pytest.approx(oracle["APs"], abs=1e-6)
    assert report.ar_1 == pytest.approx(oracle["AR@1"], abs=1e-6)
    assert report.ar_10 == pytest.approx(oracle["AR@10"], abs=1e-6)
    assert report.ar_100 == pytest.approx(oracle["AR@100"], abs=1e-6)
    for class_id, expected in oracle["per_class"].items():
        assert report.per_class_ap[class_id] == pytest.approx(expected, abs=1e-6)
