"""Command line for the adapter passes and the HTTP server."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import SPAN_POOLING_MODES, AdapterConfig
from .errors import AdapterError, EngineLoadError
from .produce import produce_align_records, produce_caption_records, produce_detect_records
from .server import AdapterServer

EXIT_OK = 0
EXIT_ENGINE = 1
EXIT_CONFIG = 2


def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--engine",
        choices=("synthetic", "real"),
        default="synthetic",
        help="synthetic world (default) or real checkpoints",
    )
    parser.add_argument(
        "--annotations", help="COCO annotation JSON (defines the synthetic world)"
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--distractors", type=int, default=2, help="synthetic distractors per image")
    parser.add_argument("--device", default="cpu")


def _build_engines(args: argparse.Namespace):
    if args.engine == "real":
        from .real import RealEngineSet

        return RealEngineSet(AdapterConfig(device=args.device))
    if not args.annotations:
        raise AdapterError("the synthetic engine needs --annotations")
    from .engines import SyntheticEngineSet

    return SyntheticEngineSet(
        args.annotations, seed=args.seed, distractors_per_image=args.distractors
    )


def _build_config(args: argparse.Namespace) -> AdapterConfig:
    return AdapterConfig(
        device=getattr(args, "device", "cpu"),
        span_pooling=getattr(args, "span_pooling", "mean"),
        small_area_threshold=getattr(args, "threshold", 1024.0),
        dataset_id=getattr(args, "dataset_id", "dataset"),
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="phrasedet-adapters",
        description="Produce wire-schema bundles from model checkpoints or a synthetic world.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("captions", help="caption each support exemplar")
    p.add_argument("--support", required=True, help="support set JSON")
    p.add_argument("--out", required=True, help="output caption record directory")
    _add_engine_flags(p)

    p = sub.add_parser("detect", help="score all images; writes a complete bundle")
    p.add_argument("--prompts", required=True, help="prompt set JSON (engine artifact or bare array)")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--captions", help="caption record directory to embed")
    p.add_argument("--dataset-id", default="dataset")
    p.add_argument("--span-pooling", choices=SPAN_POOLING_MODES, default="mean")
    _add_engine_flags(p)

    p = sub.add_parser("align", help="score small detections against class descriptions")
    p.add_argument("--bundle", required=True, help="bundle to add align records to")
    p.add_argument("--detections", required=True, help="engine detections JSON")
    p.add_argument("--library", required=True, help="phrase library JSON")
    p.add_argument("--threshold", type=float, default=1024.0, help="small box area bound")
    _add_engine_flags(p)

    p = sub.add_parser("serve", help="serve /v1/detect, /v1/caption, /v1/align")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8800)
    p.add_argument("--span-pooling", choices=SPAN_POOLING_MODES, default="mean")
    _add_engine_flags(p)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        engines = _build_engines(args)
        config = _build_config(args)
        if args.verb == "captions":
            out = produce_caption_records(args.support, engines, args.out)
            print(f"caption records: {out}")
        elif args.verb == "detect":
            if args.annotations is None:
                raise AdapterError("detect needs --annotations to list the images")
            out = produce_detect_records(
                args.annotations, args.prompts, args.out, engines, config,
                captions_dir=args.captions,
            )
            print(f"bundle: {out}")
        elif args.verb == "align":
            out = produce_align_records(
                args.bundle, args.detections, args.library, engines, config
            )
            print(f"align records: {out}")
        elif args.verb == "serve":
            if not args.annotations:
                raise AdapterError("serve needs --annotations for image sizes")
            server = AdapterServer(
                args.annotations, engines, config, host=args.host, port=args.port
            )
            print(f"serving on {server.base_url}")
            server.serve_forever()
    except EngineLoadError as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
