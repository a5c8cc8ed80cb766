"""Model backends: mock world, replay bundles, and HTTP clients.

All three expose the same small request/response contract, so the
engine cannot tell them apart except by latency.
"""

from .base import (
    AlignerBackend,
    AlignRequest,
    CaptionerBackend,
    CaptionRequest,
    DetectorBackend,
    DetectorRequest,
    MaskRequest,
)

__all__ = [
    "AlignerBackend",
    "AlignRequest",
    "CaptionerBackend",
    "CaptionRequest",
    "DetectorBackend",
    "DetectorRequest",
    "MaskRequest",
]
