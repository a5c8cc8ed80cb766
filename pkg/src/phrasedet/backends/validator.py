"""Validator for version-1 replay bundles.

Checks layout, schema, canonical-bytes identity (re-serializing every
parsed record must reproduce the file exactly), fingerprint integrity,
and the caption contract (each description mentions its class word).
Returns a list of problems so callers can report them all at once.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from ..entities import ClassCatalog
from ..errors import ProtocolError
from .replay import ALIGN_DIR, CAPTION_DIR, DETECT_DIR, MANIFEST_NAME
from .wire import (
    canonical_dumps,
    parse_align_record,
    parse_caption_record,
    parse_manifest,
    tensor_from_detect_record,
)

_ALIGN_NAME = re.compile(r"^(\d+)_(\d+)\.json$")


def _load_checked(path: Path, problems: list[str]):
    """Parse a record file and verify its bytes are canonical."""
    try:
        text = path.read_text()
    except OSError as exc:
        problems.append(f"{path.name}: unreadable ({exc})")
        return None
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        problems.append(f"{path.name}: invalid JSON ({exc})")
        return None
    if canonical_dumps(record) + "\n" != text:
        problems.append(f"{path.name}: not in canonical form (re-serialization differs)")
    return record


def validate_bundle(
    root: str | Path,
    catalog: ClassCatalog | None = None,
    expected_fingerprint: str | None = None,
) -> list[str]:
    """Validate one bundle directory; an empty list means it passes."""
    root = Path(root)
    problems: list[str] = []
    if not root.is_dir():
        return [f"{root} is not a directory"]

    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        return [f"{MANIFEST_NAME} is missing"]
    manifest = _load_checked(manifest_path, problems)
    prompt_set = None
    if manifest is not None:
        try:
            _, fingerprint, prompt_set = parse_manifest(manifest)
            if expected_fingerprint is not None and fingerprint != expected_fingerprint:
                problems.append(
                    f"{MANIFEST_NAME}: fingerprint {fingerprint[:12]}... does not match the "
                    f"expected {expected_fingerprint[:12]}... (stale bundle)"
                )
        except ProtocolError as exc:
            problems.append(str(exc))

    expected_counts = prompt_set.per_class_counts() if prompt_set is not None else None

    detect_dir = root / DETECT_DIR
    if detect_dir.is_dir():
        for path in sorted(detect_dir.glob("*.json")):
            record = _load_checked(path, problems)
            if record is None:
                continue
            try:
                tensor = tensor_from_detect_record(
                    record, expected_counts=expected_counts, where=f"detect/{path.name}"
                )
                if f"{tensor.image_ref}.json" != path.name:
                    problems.append(
                        f"detect/{path.name}: carries image id {tensor.image_ref}"
                    )
            except ProtocolError as exc:
                problems.append(str(exc))

    caption_dir = root / CAPTION_DIR
    if caption_dir.is_dir():
        for path in sorted(caption_dir.glob("*.json")):
            record = _load_checked(path, problems)
            if record is None:
                continue
            try:
                parsed = parse_caption_record(record, f"caption/{path.name}")
            except ProtocolError as exc:
                problems.append(str(exc))
                continue
            if f"{parsed['class_id']}.json" != path.name:
                problems.append(f"caption/{path.name}: carries class id {parsed['class_id']}")
            if parsed["class_name"].lower() not in parsed["description"].lower():
                problems.append(
                    f"caption/{path.name}: description never mentions the class word "
                    f"{parsed['class_name']!r}"
                )
            if catalog is not None:
                try:
                    expected_name = catalog.name_of(parsed["class_id"])
                except Exception:
                    expected_name = None
                if expected_name != parsed["class_name"]:
                    problems.append(
                        f"caption/{path.name}: class {parsed['class_id']} named "
                        f"{parsed['class_name']!r}, catalog says {expected_name!r}"
                    )

    align_dir = root / ALIGN_DIR
    if align_dir.is_dir():
        for path in sorted(align_dir.glob("*.json")):
            match = _ALIGN_NAME.match(path.name)
            if match is None:
                problems.append(f"align/{path.name}: file name is not <image_id>_<det_index>.json")
                continue
            record = _load_checked(path, problems)
            if record is None:
                continue
            try:
                parsed = parse_align_record(record, f"align/{path.name}")
            except ProtocolError as exc:
                problems.append(str(exc))
                continue
            if (parsed["image_id"], parsed["det_index"]) != (
                int(match.group(1)),
                int(match.group(2)),
            ):
                problems.append(
                    f"align/{path.name}: file name does not match record ids "
                    f"({parsed['image_id']}, {parsed['det_index']})"
                )
    return problems


def assert_valid_bundle(
    root: str | Path,
    catalog: ClassCatalog | None = None,
    expected_fingerprint: str | None = None,
) -> None:
    problems = validate_bundle(root, catalog=catalog, expected_fingerprint=expected_fingerprint)
    if problems:
        summary = "\n  ".join(problems)
        raise ProtocolError(f"bundle {root} failed validation:\n  {summary}")
