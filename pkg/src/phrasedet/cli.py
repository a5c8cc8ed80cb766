"""Command-line entry point.

Verbs: run (full pipeline), ablate (standard four-config suite),
eval (score an existing COCO results file), mock-scene (generate a
synthetic scene plus optional replay bundle), validate (check a
recorded bundle), prompts (build a phrase library from recorded
captions). Exit codes: 0 success, 2 config or input error, 3 backend
error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import BackendError, ConfigError, ValidationError

BACKEND_ENV = "PHRASEDET_BACKEND"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--annotations", required=True, help="COCO ground-truth JSON")
    parser.add_argument("--support", required=True, help="support set JSON")
    parser.add_argument(
        "--backend",
        default=None,
        help=f"mock | replay:<dir> | http:<url> (default: ${BACKEND_ENV} or mock)",
    )
    parser.add_argument("--scene", default=None, help="scene JSON for the mock backend")
    parser.add_argument(
        "--phrase-mode",
        default="support-text",
        choices=("class-name", "support-text", "full-sentence"),
    )
    parser.add_argument(
        "--no-calibration",
        dest="calibration",
        action="store_false",
        help="disable alignment calibration of small boxes",
    )
    parser.add_argument("--top-k", type=int, default=300)
    parser.add_argument("--calibration-weight", type=float, default=0.02)
    parser.add_argument("--small-area-threshold", type=float, default=1024.0)
    parser.add_argument("--nms-iou", type=float, default=None)
    parser.add_argument(
        "--strict-calibration",
        action="store_true",
        help="fail the image when every calibration call fails",
    )
    parser.add_argument(
        "--lenient",
        action="store_true",
        help="drop images whose backend calls fail instead of aborting",
    )
    parser.add_argument("--noise-sigma", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--output-dir", default="runs/out")
    parser.add_argument("--overlays", action="store_true")
    parser.add_argument("--images-dir", default=None)


def _build_config(args: argparse.Namespace):
    from .pipeline import RunConfig

    backend = args.backend or os.environ.get(BACKEND_ENV) or "mock"
    return RunConfig(
        annotations=args.annotations,
        support_set=args.support,
        backend=backend,
        scene=args.scene,
        phrase_mode=args.phrase_mode,
        calibration=args.calibration,
        top_k=args.top_k,
        calibration_weight=args.calibration_weight,
        small_area_threshold=args.small_area_threshold,
        nms_iou=args.nms_iou,
        strict_calibration=args.strict_calibration,
        lenient=args.lenient,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        workers=args.workers,
        output_dir=args.output_dir,
        overlays=args.overlays,
        images_dir=args.images_dir,
    )


def _cmd_run(args: argparse.Namespace) -> int:
    from .coco_io import format_report_table
    from .pipeline import method_name, run_pipeline

    cfg = _build_config(args)
    report = run_pipeline(cfg)
    print(format_report_table([(method_name(cfg), report)]))
    print(f"artifacts: {cfg.output_dir}")
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    from .coco_io import format_report_table
    from .pipeline import run_ablation_suite

    cfg = _build_config(args)
    rows = run_ablation_suite(cfg)
    print(format_report_table(rows))
    print(f"artifacts: {cfg.output_dir}")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    from .coco_io import format_report_table
    from .pipeline import evaluate_results_file

    report = evaluate_results_file(args.annotations, args.results, args.output_dir)
    print(format_report_table([("results file", report)]))
    return EXIT_OK


def _cmd_mock_scene(args: argparse.Namespace) -> int:
    from .pipeline import generate_scene_artifacts

    names = [n.strip() for n in args.classes.split(",") if n.strip()]
    if not names:
        raise ConfigError("--classes needs at least one class name")
    paths = generate_scene_artifacts(
        names,
        args.out,
        n_images=args.images,
        objects_per_image=args.objects_per_image,
        distractors_per_image=args.distractors_per_image,
        small_object_fraction=args.small_fraction,
        domain_tag=args.domain,
        seed=args.seed,
        with_bundle=args.bundle,
        noise_sigma=args.noise_sigma,
        phrase_mode=args.phrase_mode,
    )
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    from .backends.validator import validate_bundle
    from .coco_io import load_ground_truth

    catalog = None
    if args.annotations:
        catalog = load_ground_truth(args.annotations).catalog
    problems = validate_bundle(
        args.bundle, catalog=catalog, expected_fingerprint=args.fingerprint
    )
    if problems:
        for problem in problems:
            print(f"FAIL {problem}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"bundle ok: {args.bundle}")
    return EXIT_OK


def _cmd_prompts(args: argparse.Namespace) -> int:
    import json

    from .backends.replay import CAPTION_DIR
    from .backends.wire import (
        canonical_dumps,
        parse_caption_record,
        prompt_fingerprint,
        prompt_set_to_wire,
    )
    from .coco_io import load_ground_truth
    from .prompts import build_phrase_library, build_prompt_set, save_phrase_library

    catalog = load_ground_truth(args.annotations).catalog
    descriptions = None
    if args.phrase_mode != "class-name":
        if not args.captions:
            raise ConfigError(f"--captions is required for phrase mode {args.phrase_mode}")
        captions_dir = Path(args.captions)
        if (captions_dir / CAPTION_DIR).is_dir():
            captions_dir = captions_dir / CAPTION_DIR
        descriptions = {}
        for class_id in catalog.class_ids:
            path = captions_dir / f"{class_id}.json"
            if not path.is_file():
                raise ConfigError(f"missing caption record {path}")
            record = json.loads(path.read_text())
            parsed = parse_caption_record(record, where=str(path))
            if parsed["class_id"] != class_id:
                raise ConfigError(f"{path}: record is for class {parsed['class_id']}")
            descriptions[class_id] = parsed["description"]
    library = build_phrase_library(catalog, descriptions, args.phrase_mode)
    prompt_set = build_prompt_set(library, catalog)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_phrase_library(library, out / "phrase_library.json")
    wire = prompt_set_to_wire(prompt_set)
    fingerprint = prompt_fingerprint(prompt_set)
    (out / "prompt_set.json").write_text(
        canonical_dumps({"prompt_fingerprint": fingerprint, "prompt_set": wire}) + "\n"
    )
    print(f"prompt fingerprint: {fingerprint}")
    print(f"artifacts: {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phrasedet",
        description="Training-free phrase-grounded detection for unseen domains.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run the full pipeline once")
    _add_run_flags(run)
    run.set_defaults(handler=_cmd_run)

    ablate = sub.add_parser("ablate", help="run the standard four-config suite")
    _add_run_flags(ablate)
    ablate.set_defaults(handler=_cmd_ablate)

    ev = sub.add_parser("eval", help="evaluate an existing COCO results file")
    ev.add_argument("--annotations", required=True)
    ev.add_argument("--results", required=True)
    ev.add_argument("--output-dir", default=None)
    ev.set_defaults(handler=_cmd_eval)

    scene = sub.add_parser("mock-scene", help="generate a synthetic scene")
    scene.add_argument("--classes", required=True, help="comma-separated class names")
    scene.add_argument("--out", required=True)
    scene.add_argument("--images", type=int, default=10)
    scene.add_argument("--objects-per-image", type=int, default=2)
    scene.add_argument("--distractors-per-image", type=int, default=6)
    scene.add_argument("--small-fraction", type=float, default=0.0)
    scene.add_argument("--domain", default="synthetic")
    scene.add_argument("--seed", type=int, default=0)
    scene.add_argument("--bundle", action="store_true", help="also record a replay bundle")
    scene.add_argument("--noise-sigma", type=float, default=0.0)
    scene.add_argument(
        "--phrase-mode",
        default="support-text",
        choices=("class-name", "support-text", "full-sentence"),
    )
    scene.set_defaults(handler=_cmd_mock_scene)

    validate = sub.add_parser("validate", help="validate a recorded bundle")
    validate.add_argument("bundle")
    validate.add_argument("--annotations", default=None, help="cross-check class names")
    validate.add_argument("--fingerprint", default=None, help="expected prompt fingerprint")
    validate.set_defaults(handler=_cmd_validate)

    prompts = sub.add_parser("prompts", help="build a phrase library from captions")
    prompts.add_argument("--annotations", required=True)
    prompts.add_argument("--captions", default=None, help="bundle root or caption dir")
    prompts.add_argument(
        "--phrase-mode",
        default="support-text",
        choices=("class-name", "support-text", "full-sentence"),
    )
    prompts.add_argument("--out", required=True)
    prompts.set_defaults(handler=_cmd_prompts)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
