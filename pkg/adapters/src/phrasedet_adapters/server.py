"""HTTP service speaking the v1 wire protocol over an engine set.

POST /v1/detect, /v1/caption, /v1/align with the JSON bodies defined in
docs/wire-schema-v1.md. Malformed requests get 400 (the client treats
any non-200 below 500 as a protocol error and will not retry); an
engine crash gets 500. Built on the stdlib threading HTTP server so a
bundle producer can double as a live backend with zero dependencies.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .config import AdapterConfig
from .engines import EngineSet
from .errors import AdapterError
from .produce import pool_result
from .wire import (
    SCHEMA_VERSION,
    canonical_text,
    caption_record,
    detect_record,
    per_class_counts,
    quantize_score,
    validate_prompt_wire,
)

logger = logging.getLogger(__name__)

_INSTRUCTION_NAME = re.compile(
    r"The masked object is a (.+?)\. Describe it in one short sentence"
)


class _BadRequest(Exception):
    pass


class AdapterServer:
    """Serves one engine set; start() binds a thread, shutdown() stops it."""

    def __init__(
        self,
        annotations: str | Path,
        engines: EngineSet,
        config: AdapterConfig | None = None,
        host: str = "127.0.0.1",
        port: int = 0,
    ) -> None:
        self._engines = engines
        self._config = config or AdapterConfig()
        self._config.validate()
        payload = json.loads(Path(annotations).read_text())
        self._sizes = {img["id"]: (int(img["width"]), int(img["height"])) for img in payload["images"]}
        self._class_ids = {cat["name"]: cat["id"] for cat in payload["categories"]}
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # noqa: N802
                logger.debug("%s - %s", self.address_string(), fmt % args)

            def do_POST(self):  # noqa: N802
                try:
                    body = self._read_body()
                    if self.path == "/v1/detect":
                        response = outer._detect(body)
                    elif self.path == "/v1/caption":
                        response = outer._caption(body)
                    elif self.path == "/v1/align":
                        response = outer._align(body)
                    else:
                        self._reply(404, {"error": f"no such endpoint {self.path}"})
                        return
                except (_BadRequest, AdapterError) as exc:
                    self._reply(400, {"error": str(exc)})
                except Exception as exc:  # noqa: BLE001
                    logger.exception("engine failure")
                    self._reply(500, {"error": str(exc)})
                else:
                    self._reply(200, response)

            def _read_body(self) -> dict:
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                try:
                    body = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise _BadRequest(f"request body is not valid JSON: {exc}") from exc
                if not isinstance(body, dict):
                    raise _BadRequest("request body must be a JSON object")
                if body.get("schema_version") != SCHEMA_VERSION:
                    raise _BadRequest("request schema_version must be 1")
                return body

            def _reply(self, status: int, payload: dict) -> None:
                data = (canonical_text(payload) + "\n").encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    # -- endpoint bodies ---------------------------------------------------------

    def _detect(self, body: dict) -> dict:
        image_id = body.get("image_id")
        if not isinstance(image_id, int):
            raise _BadRequest(f"image_id must be an int, got {image_id!r}")
        if image_id not in self._sizes:
            raise _BadRequest(f"unknown image id {image_id}")
        prompts = validate_prompt_wire(body.get("prompt_set"), "request prompt_set")
        width, height = self._sizes[image_id]
        result = self._engines.ground(image_id, (width, height), prompts)
        boxes, scores = pool_result(result, prompts, self._config.span_pooling)
        return detect_record(
            image_id, width, height, per_class_counts(prompts), boxes, scores
        )

    def _caption(self, body: dict) -> dict:
        instruction = body.get("instruction")
        box = body.get("box")
        if not isinstance(instruction, str) or not instruction.strip():
            raise _BadRequest("instruction must be a non-empty string")
        if not isinstance(box, list) or len(box) != 4:
            raise _BadRequest(f"box must be [x1, y1, x2, y2], got {box!r}")
        match = _INSTRUCTION_NAME.search(instruction)
        if match is None or match.group(1) not in self._class_ids:
            raise _BadRequest(f"instruction names no known class: {instruction!r}")
        name = match.group(1)
        image_ref = str(body.get("image_ref", ""))
        mask = self._engines.segment(image_ref, tuple(float(v) for v in box))
        description = self._engines.describe(image_ref, mask, instruction)
        return caption_record(self._class_ids[name], name, instruction, description)

    def _align(self, body: dict) -> dict:
        image_ref = body.get("image_ref")
        box = body.get("box")
        description = body.get("description")
        if not isinstance(image_ref, int):
            raise _BadRequest(f"image_ref must be an image id, got {image_ref!r}")
        if not isinstance(box, list) or len(box) != 4:
            raise _BadRequest(f"box must be [x1, y1, x2, y2], got {box!r}")
        if not isinstance(description, str) or not description.strip():
            raise _BadRequest("description must be a non-empty string")
        alignment = self._engines.align(image_ref, tuple(float(v) for v in box), description)
        return {"schema_version": SCHEMA_VERSION, "alignment": quantize_score(alignment)}

    # -- lifecycle ------------------------------------------------------------------

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "AdapterServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> "AdapterServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.shutdown()

    def serve_forever(self) -> None:
        logger.info("serving on %s", self.base_url)
        try:
            self._httpd.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            self._httpd.server_close()
