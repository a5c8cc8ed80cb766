"""Model adapters producing v1 wire-schema bundles for the detection engine."""

from .config import AdapterConfig
from .engines import GroundingResult, SyntheticEngineSet
from .errors import AdapterError, EngineLoadError
from .produce import (
    produce_align_records,
    produce_caption_records,
    produce_detect_records,
)
from .server import AdapterServer
from .wire import (
    INSTRUCTION_TEMPLATE,
    load_prompt_set,
    prompt_fingerprint,
    render_instruction,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "AdapterServer",
    "EngineLoadError",
    "GroundingResult",
    "INSTRUCTION_TEMPLATE",
    "SyntheticEngineSet",
    "load_prompt_set",
    "produce_align_records",
    "produce_caption_records",
    "produce_detect_records",
    "prompt_fingerprint",
    "render_instruction",
]
