"""Synthetic engine behavior: world geometry, bands, determinism."""

import pytest

from conftest import CLASS_NAMES, GT_BOX
from phrasedet_adapters.engines import SyntheticEngineSet, _iou
from phrasedet_adapters.errors import AdapterError
from phrasedet_adapters.wire import render_instruction

PROMPTS = [
    {"class_id": 1, "phrase_index": 1, "text": "round scallop"},
    {"class_id": 1, "phrase_index": 2, "text": "ribbed shell"},
    {"class_id": 2, "phrase_index": 1, "text": "spiny sea urchin"},
    {"class_id": 3, "phrase_index": 1, "text": "starfish"},
]


@pytest.fixture
def engines(world):
    return SyntheticEngineSet(world["annotations"], seed=3, distractors_per_image=3)


def test_world_loads(engines):
    assert engines.image_ids == [1, 2, 3, 4]
    assert engines.class_names == {1: "scallop", 2: "sea urchin", 3: "starfish"}


def test_missing_annotations_rejected(tmp_path):
    with pytest.raises(AdapterError, match="does not exist"):
        SyntheticEngineSet(tmp_path / "nope.json")


def test_ground_proposes_gt_first_then_disjoint_distractors(engines):
    result = engines.ground(1, (640, 480), PROMPTS)
    assert result.boxes[0] == GT_BOX
    assert len(result.boxes) == 1 + 3
    for i, a in enumerate(result.boxes):
        for b in result.boxes[i + 1 :]:
            assert _iou(a, b) == 0.0


def test_ground_is_deterministic_per_seed(world):
    first = SyntheticEngineSet(world["annotations"], seed=3).ground(1, (640, 480), PROMPTS)
    second = SyntheticEngineSet(world["annotations"], seed=3).ground(1, (640, 480), PROMPTS)
    assert first == second
    other = SyntheticEngineSet(world["annotations"], seed=4).ground(1, (640, 480), PROMPTS)
    assert other.token_scores != first.token_scores


def test_spans_cover_phrases_sequentially(engines):
    result = engines.ground(1, (640, 480), PROMPTS)
    assert result.spans == ((0, 2), (2, 4), (4, 7), (7, 8))
    assert all(len(row) == 8 for row in result.token_scores)


def test_empty_span_simulation(world):
    engines = SyntheticEngineSet(
        world["annotations"], seed=3, empty_span_phrases=frozenset({"ribbed shell"})
    )
    result = engines.ground(1, (640, 480), PROMPTS)
    assert result.spans[1] == (2, 2)  # empty: start == end
    assert result.spans[2] == (2, 5)  # later phrases shift down
    assert all(len(row) == 6 for row in result.token_scores)


def test_band_separation(engines):
    # image 1 holds a class-1 object; its tokens are 0..3 (class 1) and 4..7
    result = engines.ground(1, (640, 480), PROMPTS)
    own = result.token_scores[0][:4]
    cross = result.token_scores[0][4:]
    assert all(0.86 <= v < 0.94 for v in own)
    assert all(0.06 <= v < 0.40 for v in cross)
    for row in result.token_scores[1:]:  # distractors are low everywhere
        assert all(v < 0.40 for v in row)


def test_ground_validates_size_and_image(engines):
    with pytest.raises(AdapterError, match="declared size"):
        engines.ground(1, (100, 100), PROMPTS)
    with pytest.raises(AdapterError, match="unknown image"):
        engines.ground(99, (640, 480), PROMPTS)


def test_describe_mentions_class_word_and_is_deterministic(engines):
    for name in CLASS_NAMES:
        instruction = render_instruction("underwater", name)
        description = engines.describe("img.png", None, instruction)
        assert name.lower() in description.lower()
        assert description == engines.describe("other.png", None, instruction)
        assert description.endswith(".")


def test_describe_rejects_off_template_instruction(engines):
    with pytest.raises(AdapterError, match="caption template"):
        engines.describe("img.png", None, "Describe the object please")


def test_align_gates_on_overlap_with_described_class(engines):
    described = engines.describe("x", None, render_instruction("underwater", "scallop"))
    hit = engines.align(1, GT_BOX, described)  # image 1 holds a scallop
    assert 0.9 <= hit <= 1.0
    miss_position = engines.align(1, (0.0, 0.0, 30.0, 30.0), described)
    assert 0.0 <= miss_position < 0.1
    urchin = engines.describe("x", None, render_instruction("underwater", "sea urchin"))
    miss_class = engines.align(1, GT_BOX, urchin)
    assert 0.0 <= miss_class < 0.1


def test_align_rejects_unknown_description(engines):
    with pytest.raises(AdapterError, match="no known class"):
        engines.align(1, GT_BOX, "A mysterious blob.")
    with pytest.raises(AdapterError, match="unknown image"):
        engines.align(42, GT_BOX, "A scallop.")


def test_segment_returns_mask_handle(engines):
    handle = engines.segment("img_1.png", GT_BOX)
    assert handle == {"image": "img_1.png", "box": list(GT_BOX)}
    with pytest.raises(AdapterError, match="degenerate"):
        engines.segment("img_1.png", (10.0, 10.0, 10.0, 20.0))
