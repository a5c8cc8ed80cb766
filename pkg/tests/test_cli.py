"""CLI verbs and exit codes."""

import json
from pathlib import Path

import pytest

from phrasedet.cli import main


def run_args(paths, out, extra=()):
    return [
        "run",
        "--annotations", str(paths["annotations"]),
        "--support", str(paths["support"]),
        "--scene", str(paths["scene"]),
        "--output-dir", str(out),
        *extra,
    ]


def test_run_verb_success(tiny_scene, tmp_path, capsys):
    code = main(run_args(tiny_scene, tmp_path / "out"))
    assert code == 0
    out = capsys.readouterr().out
    assert "support-text + calibration" in out
    assert "100.0" in out
    assert (tmp_path / "out" / "detections.json").is_file()


def test_run_verb_flag_plumbing(tiny_scene, tmp_path, capsys):
    code = main(run_args(tiny_scene, tmp_path / "out", ["--no-calibration", "--seed", "3"]))
    assert code == 0
    out = capsys.readouterr().out
    assert "support-text " in out
    config = json.loads((tmp_path / "out" / "report.json").read_text())["config"]
    assert config["calibration"] is False
    assert config["seed"] == 3


def test_missing_scene_is_a_config_error(tiny_scene, tmp_path, capsys):
    args = run_args(tiny_scene, tmp_path / "out")
    scene_at = args.index("--scene")
    del args[scene_at : scene_at + 2]
    assert main(args) == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_backend_is_a_config_error(tiny_scene, tmp_path, capsys):
    assert main(run_args(tiny_scene, tmp_path / "o", ["--backend", "carrier-pigeon"])) == 2
    assert "backend" in capsys.readouterr().err


def test_backend_env_var_is_honored(tiny_scene, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PHRASEDET_BACKEND", "carrier-pigeon")
    args = run_args(tiny_scene, tmp_path / "out")
    assert main(args) == 2  # the bogus env backend was actually used
    capsys.readouterr()
    monkeypatch.setenv("PHRASEDET_BACKEND", f"replay:{tiny_scene['bundle']}")
    scene_at = args.index("--scene")
    del args[scene_at : scene_at + 2]
    assert main(args) == 0


def test_broken_bundle_is_a_backend_error(tiny_scene, tmp_path, capsys):
    Path(tiny_scene["bundle"], "detect", "1.json").unlink()
    args = run_args(tiny_scene, tmp_path / "out",
                    ["--backend", f"replay:{tiny_scene['bundle']}"])
    scene_at = args.index("--scene")
    del args[scene_at : scene_at + 2]
    assert main(args) == 3
    assert "backend error:" in capsys.readouterr().err


def test_ablate_verb_prints_all_methods(tiny_scene, tmp_path, capsys):
    args = run_args(tiny_scene, tmp_path / "out")
    args[0] = "ablate"
    assert main(args) == 0
    out = capsys.readouterr().out
    for name in ("class-name baseline", "support-text", "support-text + calibration",
                 "full-sentence"):
        assert name in out


def test_eval_verb(tiny_scene, tmp_path, capsys):
    assert main(run_args(tiny_scene, tmp_path / "out")) == 0
    capsys.readouterr()
    code = main([
        "eval",
        "--annotations", str(tiny_scene["annotations"]),
        "--results", str(tmp_path / "out" / "detections.json"),
    ])
    assert code == 0
    assert "results file" in capsys.readouterr().out
    assert main(["eval", "--annotations", "nope.json", "--results", "nope.json"]) == 2


def test_mock_scene_verb(tmp_path, capsys):
    code = main([
        "mock-scene",
        "--classes", "crab, kelp",
        "--out", str(tmp_path / "scene"),
        "--images", "3",
        "--bundle",
    ])
    assert code == 0
    out = capsys.readouterr().out
    for name in ("scene:", "annotations:", "support:", "bundle:"):
        assert name in out
    assert (tmp_path / "scene" / "bundle" / "manifest.json").is_file()
    assert main(["mock-scene", "--classes", " , ", "--out", str(tmp_path / "x")]) == 2


def test_validate_verb(tiny_scene, tmp_path, capsys):
    bundle = tiny_scene["bundle"]
    assert main(["validate", bundle, "--annotations", str(tiny_scene["annotations"])]) == 0
    assert "bundle ok" in capsys.readouterr().out
    detect = Path(bundle, "detect", "1.json")
    detect.write_text(json.dumps(json.loads(detect.read_text()), indent=2))
    assert main(["validate", bundle]) == 2
    assert "FAIL" in capsys.readouterr().err


def test_prompts_verb_matches_bundle_fingerprint(tiny_scene, tmp_path, capsys):
    out = tmp_path / "prompts"
    code = main([
        "prompts",
        "--annotations", str(tiny_scene["annotations"]),
        "--captions", tiny_scene["bundle"],
        "--out", str(out),
    ])
    assert code == 0
    printed = capsys.readouterr().out
    manifest = json.loads(Path(tiny_scene["bundle"], "manifest.json").read_text())
    assert manifest["prompt_fingerprint"] in printed
    prompt_set = json.loads((out / "prompt_set.json").read_text())
    assert prompt_set["prompt_fingerprint"] == manifest["prompt_fingerprint"]
    assert (out / "phrase_library.json").is_file()


def test_prompts_verb_class_name_mode_needs_no_captions(tiny_scene, tmp_path):
    out = tmp_path / "prompts"
    code = main([
        "prompts",
        "--annotations", str(tiny_scene["annotations"]),
        "--phrase-mode", "class-name",
        "--out", str(out),
    ])
    assert code == 0
    library = json.loads((out / "phrase_library.json").read_text())
    assert [e["phrases"] for e in library] == [["scallop"], ["sea urchin"], ["starfish"]]
    assert main([
        "prompts", "--annotations", str(tiny_scene["annotations"]), "--out", str(out),
    ]) == 2  # support-text without captions
