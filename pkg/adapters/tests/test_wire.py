"""Wire-format building blocks: canonical text, quantization, prompt sets."""

import json

import pytest

from phrasedet_adapters.errors import AdapterError
from phrasedet_adapters.wire import (
    align_record,
    box_to_wire,
    canonical_text,
    caption_record,
    clip_box,
    detect_record,
    load_prompt_set,
    manifest_record,
    per_class_counts,
    prompt_fingerprint,
    quantize_pixel,
    quantize_score,
    render_instruction,
    validate_prompt_wire,
    write_record,
)

PROMPTS = [
    {"class_id": 1, "phrase_index": 1, "text": "round scallop"},
    {"class_id": 1, "phrase_index": 2, "text": "ribbed shell"},
    {"class_id": 2, "phrase_index": 1, "text": "spiny sea urchin"},
]


def test_canonical_text_sorts_and_compacts():
    assert canonical_text({"b": 1, "a": [1.5, "x"]}) == '{"a":[1.5,"x"],"b":1}'


def test_canonical_text_rejects_nan():
    with pytest.raises(ValueError):
        canonical_text({"a": float("nan")})


def test_quantize_score_rounds_and_clamps():
    assert quantize_score(0.1234561) == 0.123456
    assert quantize_score(1.0000005) == 1.0
    assert quantize_score(-5e-7) == 0.0


@pytest.mark.parametrize("bad", [1.01, -0.01, float("nan"), True, "0.5"])
def test_quantize_score_rejects(bad):
    with pytest.raises(AdapterError):
        quantize_score(bad)


def test_quantize_pixel():
    assert quantize_pixel(12.345) == 12.35
    with pytest.raises(AdapterError):
        quantize_pixel(float("inf"))


def test_box_to_wire_rejects_degenerate_after_rounding():
    with pytest.raises(AdapterError):
        box_to_wire((1.001, 0.0, 1.004, 10.0))


def test_clip_box():
    assert clip_box((-5.0, -5.0, 20.0, 90.0), 100.0, 80.0) == (0.0, 0.0, 20.0, 80.0)
    assert clip_box((700.0, 0.0, 710.0, 10.0), 640.0, 480.0) is None


def test_validate_prompt_wire_accepts_one_based():
    assert validate_prompt_wire(PROMPTS) == PROMPTS


@pytest.mark.parametrize(
    "entries",
    [
        [{"class_id": 1, "phrase_index": 0, "text": "x"}],  # zero-based
        [
            {"class_id": 1, "phrase_index": 1, "text": "x"},
            {"class_id": 3, "phrase_index": 1, "text": "y"},  # class gap
        ],
        [
            {"class_id": 1, "phrase_index": 1, "text": "x"},
            {"class_id": 1, "phrase_index": 3, "text": "y"},  # index gap
        ],
        [{"class_id": 1, "phrase_index": 1, "text": "  "}],  # blank text
        [],
    ],
)
def test_validate_prompt_wire_rejects(entries):
    with pytest.raises(AdapterError):
        validate_prompt_wire(entries)


def test_fingerprint_is_sha256_and_text_sensitive():
    fp = prompt_fingerprint(PROMPTS)
    assert len(fp) == 64 and set(fp) <= set("0123456789abcdef")
    changed = [dict(PROMPTS[0], text="flat scallop"), *PROMPTS[1:]]
    assert prompt_fingerprint(changed) != fp


def test_load_prompt_set_bare_array(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(PROMPTS))
    assert load_prompt_set(path) == PROMPTS


def test_load_prompt_set_engine_artifact(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(
        canonical_text(
            {"prompt_fingerprint": prompt_fingerprint(PROMPTS), "prompt_set": PROMPTS}
        )
    )
    assert load_prompt_set(path) == PROMPTS


def test_load_prompt_set_rejects_wrong_declared_fingerprint(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(canonical_text({"prompt_fingerprint": "0" * 64, "prompt_set": PROMPTS}))
    with pytest.raises(AdapterError, match="hash differently"):
        load_prompt_set(path)


def test_load_prompt_set_missing_file(tmp_path):
    with pytest.raises(AdapterError, match="does not exist"):
        load_prompt_set(tmp_path / "absent.json")


def test_per_class_counts():
    assert per_class_counts(PROMPTS) == [2, 1]


def test_render_instruction_exact_text():
    got = render_instruction("underwater", "scallop")
    assert got == (
        "This is a underwater image. The masked object is a scallop. "
        "Describe it in one short sentence using the word scallop"
    )
    with pytest.raises(AdapterError):
        render_instruction("  ", "scallop")


def test_records_round_trip_canonically(tmp_path):
    records = {
        "manifest.json": manifest_record("demo", PROMPTS),
        "caption.json": caption_record(1, "scallop", "instr text", "A scallop."),
        "detect.json": detect_record(
            7, 640, 480, [2, 1], [(0.0, 0.0, 40.0, 40.0)], [[[0.9, 0.8], [0.1]]]
        ),
        "align.json": align_record(7, 0, (0.0, 0.0, 20.0, 20.0), "A scallop.", 0.93),
    }
    for name, record in records.items():
        path = tmp_path / name
        write_record(path, record)
        text = path.read_text()
        assert text.endswith("\n")
        assert canonical_text(json.loads(text)) + "\n" == text


def test_manifest_embeds_matching_fingerprint():
    record = manifest_record("demo", PROMPTS)
    assert record["prompt_fingerprint"] == prompt_fingerprint(record["prompt_set"])
    assert record["schema_version"] == 1
