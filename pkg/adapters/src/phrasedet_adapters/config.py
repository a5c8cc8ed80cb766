"""Adapter configuration."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import AdapterError

SPAN_POOLING_MODES = ("mean", "max")


@dataclass(frozen=True)
class AdapterConfig:
    """Checkpoints, device, and production knobs for the four models.

    Box and text thresholds default to zero: every candidate the
    detector proposes is kept up to its internal query budget, and the
    downstream engine does all ranking. span_pooling picks how a
    phrase's token scores collapse to one number; "mean" is the
    documented default, "max" exists for A/B comparison.
    """

    detector_checkpoint: str = "IDEA-Research/grounding-dino-tiny"
    segmenter_checkpoint: str = "facebook/sam-vit-huge"
    captioner_checkpoint: str = "nvidia/DAM-3B"
    aligner_checkpoint: str = "Salesforce/blip-itm-base-coco"
    device: str = "cpu"
    box_threshold: float = 0.0
    text_threshold: float = 0.0
    span_pooling: str = "mean"
    small_area_threshold: float = 1024.0
    dataset_id: str = "dataset"

    def validate(self) -> None:
        for label, value in (
            ("box_threshold", self.box_threshold),
            ("text_threshold", self.text_threshold),
        ):
            if not (0.0 <= value < 1.0):
                raise AdapterError(f"{label} must lie in [0, 1), got {value!r}")
        if self.span_pooling not in SPAN_POOLING_MODES:
            raise AdapterError(
                f"span_pooling must be one of {SPAN_POOLING_MODES}, got {self.span_pooling!r}"
            )
        if self.small_area_threshold <= 0.0:
            raise AdapterError(
                f"small_area_threshold must be positive, got {self.small_area_threshold!r}"
            )
        if not self.device.strip():
            raise AdapterError("device must be non-empty")
        if not self.dataset_id.strip():
            raise AdapterError("dataset_id must be non-empty")
