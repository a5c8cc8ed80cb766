"""HTTP backend: the same wire records served by a remote process.

POST /v1/detect, /v1/caption and /v1/align carry JSON request bodies
and return the corresponding wire records. Transport failures and 5xx
responses are retried with exponential backoff; 4xx and malformed
bodies are protocol errors and are not retried. A semaphore caps the
number of in-flight requests.
"""

from __future__ import annotations

import logging
import threading
import time

import httpx

from ..entities import ScoreTensor
from ..errors import BackendUnavailableError, ProtocolError
from .base import AlignRequest, CaptionRequest, DetectorRequest
from .wire import (
    SCHEMA_VERSION,
    box_to_wire,
    parse_caption_record,
    prompt_set_to_wire,
    quantize_score,
    tensor_from_detect_record,
)

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0
DEFAULT_RETRIES = 2
DEFAULT_BACKOFF = 0.5
DEFAULT_MAX_IN_FLIGHT = 4

DETECT_PATH = "/v1/detect"
CAPTION_PATH = "/v1/caption"
ALIGN_PATH = "/v1/align"


class HttpBackend:
    """Detector, captioner and aligner speaking to one base URL.

    An injected httpx.Client (e.g. with a mock transport) replaces the
    real one in tests; the instance is safe for concurrent use.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        client: httpx.Client | None = None,
    ) -> None:
        self._base_url = base_url.rstrip("/")
        self._retries = max(0, int(retries))
        self._backoff = backoff
        self._semaphore = threading.BoundedSemaphore(max_in_flight)
        self._client = client or httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        url = self._base_url + path
        last_error: Exception | None = None
        for attempt in range(self._retries + 1):
            if attempt:
                delay = self._backoff * 2 ** (attempt - 1)
                logger.warning("retrying %s after %s (sleep %.2fs)", url, last_error, delay)
                time.sleep(delay)
            try:
                with self._semaphore:
                    response = self._client.post(url, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = BackendUnavailableError(
                    f"{url} answered {response.status_code}"
                )
                continue
            if response.status_code != 200:
                raise ProtocolError(f"{url} answered {response.status_code}: {response.text[:200]}")
            try:
                body = response.json()
            except ValueError as exc:
                raise ProtocolError(f"{url} returned a non-JSON body") from exc
            if not isinstance(body, dict):
                raise ProtocolError(f"{url} returned {type(body).__name__}, expected an object")
            return body
        raise BackendUnavailableError(
            f"{url} unreachable after {self._retries + 1} attempts: {last_error}"
        )

    # -- protocol methods ----------------------------------------------------

    def detect(self, request: DetectorRequest) -> ScoreTensor:
        body = self._post(
            DETECT_PATH,
            {
                "schema_version": SCHEMA_VERSION,
                "image_id": request.image_id,
                "prompt_set": prompt_set_to_wire(request.prompt_set),
            },
        )
        tensor = tensor_from_detect_record(
            body,
            expected_counts=request.prompt_set.per_class_counts(),
            where=f"detect response for image {request.image_id}",
        )
        if tensor.image_ref != request.image_id:
            raise ProtocolError(
                f"detect response for image {request.image_id} carries image id {tensor.image_ref}"
            )
        return tensor

    def caption(self, request: CaptionRequest) -> str:
        body = self._post(
            CAPTION_PATH,
            {
                "schema_version": SCHEMA_VERSION,
                "image_ref": request.image_ref,
                "box": box_to_wire(request.box),
                "instruction": request.instruction,
            },
        )
        record = parse_caption_record(body, "caption response")
        return record["description"]

    def align(self, request: AlignRequest) -> float:
        body = self._post(
            ALIGN_PATH,
            {
                "schema_version": SCHEMA_VERSION,
                "image_ref": request.image_ref,
                "box": box_to_wire(request.box),
                "description": request.description,
            },
        )
        if body.get("schema_version") != SCHEMA_VERSION:
            raise ProtocolError("align response has a wrong schema_version")
        if "alignment" not in body:
            raise ProtocolError("align response is missing the alignment field")
        return quantize_score(body["alignment"], "align response alignment")
