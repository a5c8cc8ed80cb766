"""Real checkpoint wrappers behind the same engine interface.

Everything here needs the `models` extra (torch, transformers, Pillow)
plus downloaded checkpoints, so imports are lazy and failures raise
EngineLoadError with the install hint. None of this is exercised by the
desk test suite; the bundle format produced through these wrappers is
identical to the synthetic one and is what the engine validator checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .config import AdapterConfig
from .engines import Box, GroundingResult
from .errors import AdapterError, EngineLoadError


def _import_runtime():
    try:
        import torch  # noqa: F401
        import transformers  # noqa: F401
        from PIL import Image  # noqa: F401
    except ImportError as exc:
        raise EngineLoadError(
            "real engines need the models extra: pip install 'phrasedet-adapters[models]'"
        ) from exc
    import torch
    import transformers
    from PIL import Image

    return torch, transformers, Image


def _open_image(Image: Any, image_ref: str):
    try:
        return Image.open(image_ref).convert("RGB")
    except OSError as exc:
        raise AdapterError(f"image {image_ref!r} is unreadable: {exc}") from exc


@dataclass
class RealEngineSet:
    """The four released checkpoints loaded on demand, one per role."""

    config: AdapterConfig
    _models: dict[str, Any] = field(init=False, default_factory=dict)

    def __post_init__(self) -> None:
        self.config.validate()

    def _load(self, role: str, checkpoint: str, loader: str):
        if role not in self._models:
            torch, transformers, _ = _import_runtime()
            try:
                processor = transformers.AutoProcessor.from_pretrained(checkpoint)
                model = getattr(transformers, loader).from_pretrained(checkpoint)
            except (OSError, ValueError, EnvironmentError) as exc:
                raise EngineLoadError(f"cannot load {role} checkpoint {checkpoint!r}: {exc}") from exc
            model.to(self.config.device).eval()
            self._models[role] = (processor, model)
        return self._models[role]

    # -- segmenter -------------------------------------------------------------

    def segment(self, image_ref: str, box: Box) -> object:
        torch, _, Image = _import_runtime()
        processor, model = self._load("segmenter", self.config.segmenter_checkpoint, "SamModel")
        image = _open_image(Image, image_ref)
        inputs = processor(image, input_boxes=[[list(box)]], return_tensors="pt").to(
            self.config.device
        )
        with torch.no_grad():
            outputs = model(**inputs)
        masks = processor.image_processor.post_process_masks(
            outputs.pred_masks.cpu(), inputs["original_sizes"].cpu(), inputs["reshaped_input_sizes"].cpu()
        )
        return {"image": image_ref, "mask": masks[0][0][0].numpy()}

    # -- captioner ---------------------------------------------------------------

    def describe(self, image_ref: str, mask: object, instruction: str) -> str:
        torch, _, Image = _import_runtime()
        processor, model = self._load(
            "captioner", self.config.captioner_checkpoint, "AutoModelForCausalLM"
        )
        image = _open_image(Image, image_ref)
        inputs = processor(images=image, text=instruction, return_tensors="pt").to(
            self.config.device
        )
        with torch.no_grad():
            generated = model.generate(**inputs, max_new_tokens=60, do_sample=False)
        text = processor.batch_decode(generated, skip_special_tokens=True)[0]
        return text.strip()

    # -- grounding detector ---------------------------------------------------------

    def ground(
        self, image_id: int, size: tuple[int, int], prompts: list[dict]
    ) -> GroundingResult:
        torch, _, Image = _import_runtime()
        processor, model = self._load(
            "detector", self.config.detector_checkpoint, "GroundingDinoForObjectDetection"
        )
        image = _open_image(Image, str(image_id))
        text = ". ".join(entry["text"] for entry in prompts) + "."
        inputs = processor(images=image, text=text, return_tensors="pt").to(self.config.device)
        with torch.no_grad():
            outputs = model(**inputs)
        # sigmoid logits: (queries, tokens); token offsets recover each
        # phrase's span inside the concatenated prompt text
        logits = outputs.logits.sigmoid()[0].cpu()
        boxes_cxcywh = outputs.pred_boxes[0].cpu()
        encoding = processor.tokenizer(text, return_offsets_mapping=True)
        spans = _spans_from_offsets(
            [entry["text"] for entry in prompts], text, encoding["offset_mapping"]
        )
        width, height = size
        boxes: list[Box] = []
        for cx, cy, w, h in boxes_cxcywh.tolist():
            boxes.append(
                (
                    (cx - w / 2) * width,
                    (cy - h / 2) * height,
                    (cx + w / 2) * width,
                    (cy + h / 2) * height,
                )
            )
        return GroundingResult(
            boxes=tuple(boxes),
            token_scores=tuple(tuple(row) for row in logits.tolist()),
            spans=tuple(spans),
        )

    # -- aligner --------------------------------------------------------------------

    def align(self, image_id: int, box: Box, description: str) -> float:
        torch, _, Image = _import_runtime()
        processor, model = self._load(
            "aligner", self.config.aligner_checkpoint, "BlipForImageTextRetrieval"
        )
        image = _open_image(Image, str(image_id))
        crop = image.crop(tuple(int(v) for v in box))
        inputs = processor(images=crop, text=description, return_tensors="pt").to(
            self.config.device
        )
        with torch.no_grad():
            outputs = model(**inputs)
        # two-way matching head -> probability that text matches the crop
        probs = torch.softmax(outputs.itm_score, dim=-1)
        return float(probs[0, 1])


def _spans_from_offsets(
    phrases: list[str], text: str, offsets: list[tuple[int, int]]
) -> list[tuple[int, int]]:
    """Map each phrase to its half-open token span via character offsets."""
    spans: list[tuple[int, int]] = []
    cursor = 0
    for phrase in phrases:
        start_char = text.index(phrase, cursor)
        end_char = start_char + len(phrase)
        cursor = end_char
        first = last = None
        for t, (s, e) in enumerate(offsets):
            if e <= s:  # special tokens
                continue
            if s >= start_char and e <= end_char:
                first = t if first is None else first
                last = t
        if first is None:
            spans.append((0, 0))
        else:
            spans.append((first, last + 1))
    return spans
