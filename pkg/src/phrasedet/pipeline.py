"""End-to-end orchestration: config, staged run, ablation suite.

Stages: support set -> captions -> phrase library -> prompt set ->
per-image detection -> category assignment -> top-K -> calibration ->
COCO evaluation -> artifacts. Images are processed by a small worker
pool and gathered by image id, so concurrency never changes output
bytes; with identical config and seed, two runs write identical files.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from .assignment import (
    SelectionConfig,
    assign_categories,
    calibrate,
    class_wise_nms,
    select_top_k,
)
from .backends.base import CaptionRequest, DetectorRequest
from .backends.http import HttpBackend
from .backends.mock import MockAligner, MockCaptioner, MockDetector, SyntheticScene
from .backends.replay import ReplayAligner, ReplayBundle, ReplayCaptioner, ReplayDetector
from .backends.wire import canonical_dumps, prompt_fingerprint, prompt_set_to_wire
from .coco_io import (
    format_per_class_table,
    format_report_table,
    load_ground_truth,
    load_support_set,
    report_to_json,
    write_detections_coco,
)
from .cocoeval import EvalReport, GroundTruthSet, evaluate
from .entities import ClassCatalog, Detection
from .errors import BackendError, ConfigError, ValidationError
from .prompts import (
    PHRASE_MODES,
    build_phrase_library,
    build_prompt_set,
    render_instruction,
    save_phrase_library,
)

logger = logging.getLogger(__name__)

BACKEND_KINDS = ("mock", "replay", "http")


@dataclass(frozen=True)
class RunConfig:
    """Everything one run depends on.

    The fingerprint hashes the canonical form, which drops fields that
    cannot change detections or metrics (output location, overlay
    rendering, worker count).
    """

    annotations: str
    support_set: str
    backend: str = "mock"
    scene: str | None = None
    phrase_mode: str = "support-text"
    calibration: bool = True
    top_k: int = 300
    calibration_weight: float = 0.02
    small_area_threshold: float = 32.0 * 32.0
    nms_iou: float | None = None
    strict_calibration: bool = False
    lenient: bool = False
    noise_sigma: float = 0.0
    seed: int = 0
    workers: int = 1
    output_dir: str = "runs/out"
    overlays: bool = False
    images_dir: str | None = None

    def backend_kind(self) -> tuple[str, str | None]:
        """Split the backend field into (kind, argument)."""
        if self.backend == "mock":
            return ("mock", None)
        # bare URLs are accepted as shorthand for http:<url>
        if self.backend.startswith(("http://", "https://")):
            return ("http", self.backend)
        for kind in ("replay", "http"):
            prefix = kind + ":"
            if self.backend.startswith(prefix) and len(self.backend) > len(prefix):
                return (kind, self.backend[len(prefix):])
        raise ConfigError(
            f"backend must be mock, replay:<dir> or http:<url>, got {self.backend!r}"
        )

    def selection(self) -> SelectionConfig:
        try:
            return SelectionConfig(
                top_k=self.top_k,
                calibration_weight=self.calibration_weight,
                small_area_threshold=self.small_area_threshold,
                calibration_enabled=self.calibration,
                strict_calibration=self.strict_calibration,
                nms_iou=self.nms_iou,
            )
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self) -> None:
        kind, _ = self.backend_kind()
        if self.phrase_mode not in PHRASE_MODES:
            raise ConfigError(
                f"phrase_mode must be one of {PHRASE_MODES}, got {self.phrase_mode!r}"
            )
        self.selection()
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError(f"workers must be a positive int, got {self.workers!r}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an int, got {self.seed!r}")
        if self.noise_sigma < 0.0:
            raise ConfigError(f"noise_sigma must be non-negative, got {self.noise_sigma!r}")
        if kind == "mock":
            if not self.scene:
                raise ConfigError("the mock backend needs a scene file (set scene=...)")
            if not Path(self.scene).exists():
                raise ConfigError(f"scene file {self.scene} does not exist")
        elif self.noise_sigma > 0.0:
            raise ConfigError("noise_sigma applies to the mock backend only")
        if kind == "replay":
            _, root = self.backend_kind()
            if not Path(root).is_dir():
                raise ConfigError(f"replay bundle {root} is not a directory")

    def canonical_dict(self) -> dict:
        payload = dataclasses.asdict(self)
        for transient in ("output_dir", "overlays", "images_dir", "workers"):
            payload.pop(transient)
        return payload

    def fingerprint(self) -> str:
        return hashlib.sha256(canonical_dumps(self.canonical_dict()).encode()).hexdigest()


@contextmanager
def _stage(stage: str, key: object):
    """Re-raise backend errors with the failing stage and key named."""
    try:
        yield
    except BackendError as exc:
        raise type(exc)(f"{stage} stage failed for {key}: {exc}") from exc


def _build_backends(cfg: RunConfig, catalog: ClassCatalog):
    """Returns (detector, captioner, aligner_factory, dataset_id)."""
    kind, argument = cfg.backend_kind()
    if kind == "mock":
        scene = SyntheticScene.load(cfg.scene)
        if scene.catalog != catalog:
            raise ConfigError(
                "scene classes do not match the annotation categories; regenerate the scene"
            )
        detector = MockDetector(scene, noise_sigma=cfg.noise_sigma, seed=cfg.seed)
        captioner = MockCaptioner(scene.catalog)
        return detector, captioner, (lambda library: MockAligner(scene, library)), "mock"
    if kind == "replay":
        bundle = ReplayBundle(argument)
        if cfg.calibration and not bundle.has_alignments():
            raise ConfigError(
                f"calibration is on but bundle {argument} holds no align records; "
                "run with calibration off or record alignments first"
            )
        return (
            ReplayDetector(bundle),
            ReplayCaptioner(bundle),
            (lambda library: ReplayAligner(bundle)),
            bundle.dataset_id,
        )
    backend = HttpBackend(argument)
    return backend, backend, (lambda library: backend), argument


def method_name(cfg: RunConfig) -> str:
    if cfg.phrase_mode == "class-name":
        name = "class-name baseline"
    elif cfg.phrase_mode == "full-sentence":
        name = "full-sentence"
    else:
        name = "support-text"
    if cfg.calibration and cfg.phrase_mode != "class-name":
        name += " + calibration"
    return name


def run_pipeline(cfg: RunConfig, write_artifacts: bool = True) -> EvalReport:
    """Execute one full run and (optionally) write its artifacts.

    Writes detections.json (COCO results), report.json, report.txt,
    phrase_library.json and prompt_set.json under cfg.output_dir.
    """
    cfg.validate()
    ground_truth = load_ground_truth(cfg.annotations)
    catalog = ground_truth.catalog
    support = load_support_set(cfg.support_set, catalog)
    detector, captioner, aligner_factory, _ = _build_backends(cfg, catalog)

    descriptions: dict[int, str] = {}
    if cfg.phrase_mode != "class-name":
        for triple in sorted(support, key=lambda t: t.class_id):
            instruction = render_instruction(triple)
            with _stage("caption", f"class {triple.class_id} ({triple.class_name})"):
                descriptions[triple.class_id] = captioner.caption(
                    CaptionRequest(
                        image_ref=triple.image_ref, box=triple.box, instruction=instruction
                    )
                )
    library = build_phrase_library(catalog, descriptions, cfg.phrase_mode)
    prompt_set = build_prompt_set(library, catalog)
    selection = cfg.selection()
    aligner = aligner_factory(library) if cfg.calibration else None

    def process(image_id: int) -> list[Detection]:
        with _stage("detect", f"image {image_id}"):
            tensor = detector.detect(DetectorRequest(image_id=image_id, prompt_set=prompt_set))
        matrix = assign_categories(tensor)
        detections = select_top_k(matrix, selection)
        if selection.nms_iou is not None:
            detections = class_wise_nms(detections, selection.nms_iou)
        if cfg.calibration:
            with _stage("align", f"image {image_id}"):
                detections = calibrate(detections, image_id, library, aligner, selection)
        return detections

    image_ids = sorted(ground_truth.image_sizes)
    detections_by_image: dict[int, list[Detection]] = {}

    def guarded(image_id: int) -> list[Detection]:
        if not cfg.lenient:
            return process(image_id)
        try:
            return process(image_id)
        except BackendError as exc:
            logger.warning("image %s failed (%s); recording zero detections", image_id, exc)
            return []

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for image_id, result in zip(image_ids, pool.map(guarded, image_ids)):
                detections_by_image[image_id] = result
    else:
        for image_id in image_ids:
            detections_by_image[image_id] = guarded(image_id)

    report = evaluate(detections_by_image, ground_truth, cfg.fingerprint())

    if write_artifacts:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_detections_coco(detections_by_image, out / "detections.json")
        (out / "report.json").write_text(report_to_json(report, cfg.canonical_dict()))
        table = format_report_table([(method_name(cfg), report)])
        per_class = format_per_class_table(report, catalog)
        (out / "report.txt").write_text(table + "\n" + per_class)
        save_phrase_library(library, out / "phrase_library.json")
        (out / "prompt_set.json").write_text(
            canonical_dumps(
                {
                    "prompt_fingerprint": prompt_fingerprint(prompt_set),
                    "prompt_set": prompt_set_to_wire(prompt_set),
                }
            )
            + "\n"
        )
        if cfg.overlays:
            from .overlays import render_overlays

            render_overlays(
                cfg.annotations, detections_by_image, cfg.images_dir, out / "overlays"
            )
    return report


ABLATION_CONFIGS: tuple[tuple[str, str, bool], ...] = (
    ("class-name baseline", "class-name", False),
    ("support-text", "support-text", False),
    ("support-text + calibration", "support-text", True),
    ("full-sentence", "full-sentence", False),
)


def run_ablation_suite(cfg: RunConfig) -> list[tuple[str, EvalReport]]:
    """Run the four standard configurations and write a combined table."""
    rows: list[tuple[str, EvalReport]] = []
    out = Path(cfg.output_dir)
    for name, phrase_mode, calibration in ABLATION_CONFIGS:
        sub = dataclasses.replace(
            cfg,
            phrase_mode=phrase_mode,
            calibration=calibration,
            output_dir=str(out / name.replace(" ", "_").replace("+", "plus")),
        )
        rows.append((name, run_pipeline(sub)))
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.txt").write_text(format_report_table(rows))
    (out / "ablation.json").write_text(
        canonical_dumps([{"method": name, **report.to_dict()} for name, report in rows]) + "\n"
    )
    return rows


def evaluate_results_file(
    annotations: str, results: str, output_dir: str | None = None
) -> EvalReport:
    """Evaluator-only entry point: score an existing COCO results file."""
    from .coco_io import load_detections_coco

    ground_truth = load_ground_truth(annotations)
    detections = load_detections_coco(results, ground_truth)
    pseudo_config = {"annotations": annotations, "results": results, "verb": "eval"}
    fingerprint = hashlib.sha256(canonical_dumps(pseudo_config).encode()).hexdigest()
    report = evaluate(detections, ground_truth, fingerprint)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report_to_json(report, pseudo_config))
        (out / "report.txt").write_text(
            format_report_table([("results file", report)])
            + "\n"
            + format_per_class_table(report, ground_truth.catalog)
        )
    return report


def generate_scene_artifacts(
    class_names: list[str],
    out_dir: str | Path,
    n_images: int = 10,
    objects_per_image: int = 2,
    distractors_per_image: int = 6,
    small_object_fraction: float = 0.0,
    domain_tag: str = "synthetic",
    seed: int = 0,
    with_bundle: bool = False,
    noise_sigma: float = 0.0,
    phrase_mode: str = "support-text",
) -> dict[str, str]:
    """Generate a synthetic scene plus everything a run needs on disk.

    Writes scene.json, COCO annotations.json, support.json, and
    optionally a replay bundle recorded from the mock backends.
    Returns the paths keyed by artifact name.
    """
    from .backends.mock import generate_scene, record_bundle
    from .coco_io import write_ground_truth_coco, write_support_set

    catalog = ClassCatalog.from_names(class_names)
    scene = generate_scene(
        catalog,
        n_images=n_images,
        objects_per_image=objects_per_image,
        distractors_per_image=distractors_per_image,
        small_object_fraction=small_object_fraction,
        domain_tag=domain_tag,
        seed=seed,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "scene": str(out / "scene.json"),
        "annotations": str(out / "annotations.json"),
        "support": str(out / "support.json"),
    }
    scene.save(paths["scene"])
    write_ground_truth_coco(scene.ground_truth(), paths["annotations"])
    write_support_set(scene.support_set(), paths["support"])
    if with_bundle:
        paths["bundle"] = str(out / "bundle")
        record_bundle(
            scene,
            paths["bundle"],
            phrase_mode=phrase_mode,
            noise_sigma=noise_sigma,
            seed=seed,
        )
    return paths
