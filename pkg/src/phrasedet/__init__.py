"""Training-free phrase-grounded detection for unseen domains.

One support exemplar per class is captioned under a domain-aware
instruction, the caption is split into short grounding phrases, a
frozen open-vocabulary detector scores every phrase, phrase scores are
mean-pooled into per-class box confidences, the global top-K pairs
survive, and small boxes are blended with an alignment score before
COCO-style evaluation.
"""

from __future__ import annotations

from .assignment import (
    DEFAULT_CALIBRATION_WEIGHT,
    DEFAULT_SMALL_AREA_THRESHOLD,
    DEFAULT_TOP_K,
    SelectionConfig,
    assign_categories,
    calibrate,
    select_top_k,
)
from .cocoeval import EvalReport, GroundTruthBox, GroundTruthSet, evaluate
from .entities import ClassCatalog, Detection, PhraseLibrary, ScoreTensor, SupportTriple
from .errors import (
    BackendError,
    BackendUnavailableError,
    ConfigError,
    EngineError,
    ProtocolError,
    RecordNotFoundError,
    StaleBundleError,
    ValidationError,
)
from .geometry import BoundingBox, box_area, iou
from .pipeline import (
    RunConfig,
    evaluate_results_file,
    generate_scene_artifacts,
    run_ablation_suite,
    run_pipeline,
)
from .prompts import (
    INSTRUCTION_TEMPLATE,
    PHRASE_MODES,
    build_phrase_library,
    build_prompt_set,
    extract_phrases,
    render_instruction,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "BackendError",
    "BackendUnavailableError",
    "ClassCatalog",
    "ConfigError",
    "DEFAULT_CALIBRATION_WEIGHT",
    "DEFAULT_SMALL_AREA_THRESHOLD",
    "DEFAULT_TOP_K",
    "Detection",
    "EngineError",
    "EvalReport",
    "GroundTruthBox",
    "GroundTruthSet",
    "INSTRUCTION_TEMPLATE",
    "PHRASE_MODES",
    "PhraseLibrary",
    "ProtocolError",
    "RecordNotFoundError",
    "RunConfig",
    "ScoreTensor",
    "SelectionConfig",
    "StaleBundleError",
    "SupportTriple",
    "ValidationError",
    "assign_categories",
    "box_area",
    "build_phrase_library",
    "build_prompt_set",
    "calibrate",
    "evaluate",
    "evaluate_results_file",
    "extract_phrases",
    "generate_scene_artifacts",
    "iou",
    "render_instruction",
    "run_ablation_suite",
    "run_pipeline",
    "select_top_k",
]
