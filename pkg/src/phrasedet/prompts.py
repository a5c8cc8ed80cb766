"""Turn support exemplars into detector prompts.

A captioner describes each exemplar region under a domain-aware
instruction; the description is segmented into short attribute phrases;
the phrases for the whole catalog form one flat, ordered prompt set that
is sent to the grounding detector for every test image.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .entities import ClassCatalog, PhraseEntry, PhraseLibrary, SupportTriple
from .errors import ValidationError

INSTRUCTION_TEMPLATE = (
    "This is a {domain} image. The masked object is a {name}. "
    "Describe it in one short sentence using the word {name}"
)

PHRASE_MODES = ("class-name", "support-text", "full-sentence")

MAX_PHRASE_WORDS = 12
MIN_PHRASE_CHARS = 2

# Leading filler stripped from a segment: articles plus the bare
# connectives that survive the split boundaries.
_LEADING_FILLER = frozenset(
    {"a", "an", "the", "and", "with", "of", "in", "on", "at", "by", "for", "to"}
)
_PUNCT_SPLIT = re.compile(r"[.,;]+")
# "with" introduces a new attribute group; interior "and" does not split.
_WITH_SPLIT = re.compile(r"\bwith\b", flags=re.IGNORECASE)
_MIDPOINT_CONJUNCTIONS = frozenset({"and", "or", "with"})


def render_instruction(support: SupportTriple) -> str:
    """Domain-aware caption instruction for one support exemplar.

    Plain slot filling: the domain tag and class name are inserted
    verbatim (no article correction), and the class name appears twice.
    """
    domain = support.domain_tag.strip()
    if not domain:
        raise ValidationError(f"support for class {support.class_id} has an empty domain tag")
    name = support.class_name.strip()
    return INSTRUCTION_TEMPLATE.format(domain=domain, name=name)


def _strip_leading_filler(words: list[str]) -> list[str]:
    while words and words[0].lower() in _LEADING_FILLER:
        words = words[1:]
    return words


def _cap_segment(words: list[str], max_words: int) -> list[list[str]]:
    """Enforce the phrase length cap.

    Over-long segments re-split at the conjunction nearest the midpoint
    (earlier one on a tie); without a conjunction they are truncated.
    """
    if len(words) <= max_words:
        return [words]
    midpoint = len(words) / 2.0
    conj = [i for i, w in enumerate(words) if w.lower() in _MIDPOINT_CONJUNCTIONS]
    if not conj:
        return [words[:max_words]]
    pivot = min(conj, key=lambda i: (abs(i - midpoint), i))
    halves = []
    for half in (words[:pivot], words[pivot + 1 :]):
        half = _strip_leading_filler(half)
        if half:
            halves.extend(_cap_segment(half, max_words))
    return halves


def extract_phrases(description: str, class_name: str, max_words: int = MAX_PHRASE_WORDS) -> list[str]:
    """Segment a one-sentence description into grounding phrases.

    Splits on commas, periods and semicolons, then on the standalone
    word "with"; strips leading articles and bare connectives; drops
    fragments shorter than two characters; caps phrases at max_words
    words; deduplicates keeping first occurrence. An unusable
    description falls back to the bare class name.
    """
    phrases: list[str] = []
    seen: set[str] = set()
    for chunk in _PUNCT_SPLIT.split(description):
        for raw in _WITH_SPLIT.split(chunk):
            words = _strip_leading_filler(raw.split())
            for capped in _cap_segment(words, max_words) if words else []:
                phrase = " ".join(capped)
                if len(phrase) < MIN_PHRASE_CHARS or phrase in seen:
                    continue
                seen.add(phrase)
                phrases.append(phrase)
    if not phrases:
        fallback = class_name.strip()
        if not fallback:
            raise ValidationError("cannot fall back to an empty class name")
        return [fallback]
    return phrases


def _single_phrase(text: str, class_name: str) -> list[str]:
    phrase = " ".join(text.split()).strip(" .,;")
    if len(phrase) >= MIN_PHRASE_CHARS:
        return [phrase]
    fallback = class_name.strip()
    if not fallback:
        raise ValidationError("cannot fall back to an empty class name")
    return [fallback]


def build_phrase_library(
    catalog: ClassCatalog,
    descriptions: dict[int, str],
    phrase_mode: str = "support-text",
) -> PhraseLibrary:
    """Assemble the per-class phrase sets for one run.

    class-name ignores descriptions entirely; support-text segments
    them; full-sentence keeps each description as a single phrase.
    """
    if phrase_mode not in PHRASE_MODES:
        raise ValidationError(f"unknown phrase mode {phrase_mode!r}; expected one of {PHRASE_MODES}")
    entries = []
    for class_id, class_name in catalog.classes:
        if phrase_mode == "class-name":
            description = class_name
            phrases = [class_name]
        else:
            if class_id not in descriptions:
                raise ValidationError(f"no description for class {class_id} ({class_name})")
            description = descriptions[class_id]
            if phrase_mode == "support-text":
                phrases = extract_phrases(description, class_name)
            else:
                phrases = _single_phrase(description, class_name)
        entries.append(
            PhraseEntry(
                class_id=class_id,
                class_name=class_name,
                description=description,
                phrases=tuple(phrases),
            )
        )
    return PhraseLibrary(entries=tuple(entries))


@dataclass(frozen=True, slots=True)
class PromptEntry:
    """One phrase with its (class id, 1-based phrase index) coordinates."""

    class_id: int
    phrase_index: int
    text: str


@dataclass(frozen=True, slots=True)
class PromptSet:
    """Flat detector prompt list, ordered by class id then phrase index."""

    entries: tuple[PromptEntry, ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValidationError("prompt set is empty")
        expected_class = 0
        expected_index = 0
        for e in self.entries:
            if e.class_id == expected_class:
                expected_index += 1
            elif e.class_id == expected_class + 1:
                expected_class += 1
                expected_index = 1
            else:
                raise ValidationError(
                    f"prompt set ordering broken at class {e.class_id}, phrase {e.phrase_index}"
                )
            if e.phrase_index != expected_index:
                raise ValidationError(
                    f"prompt set phrase indices for class {e.class_id} are not contiguous "
                    f"(got {e.phrase_index}, expected {expected_index})"
                )
            if not e.text or not e.text.strip():
                raise ValidationError(f"empty prompt text at class {e.class_id}")

    def per_class_counts(self) -> tuple[int, ...]:
        counts: list[int] = []
        for e in self.entries:
            if e.class_id == len(counts):
                counts[-1] += 1
            else:
                counts.append(1)
        return tuple(counts)


def build_prompt_set(library: PhraseLibrary, catalog: ClassCatalog | None = None) -> PromptSet:
    """Flatten a phrase library into the detector's prompt order.

    With a catalog given, the library must cover every catalog class.
    """
    if not library.entries:
        raise ValidationError("phrase library is empty")
    if catalog is not None:
        covered = {e.class_id for e in library.entries}
        for class_id, name in catalog.classes:
            if class_id not in covered:
                raise ValidationError(f"phrase library is missing class {class_id} ({name})")
    entries = []
    for entry in library.entries:
        for m, text in enumerate(entry.phrases, start=1):
            entries.append(PromptEntry(class_id=entry.class_id, phrase_index=m, text=text))
    return PromptSet(entries=tuple(entries))


def library_to_dict(library: PhraseLibrary) -> list[dict]:
    return [
        {
            "class_id": e.class_id,
            "class_name": e.class_name,
            "description": e.description,
            "phrases": list(e.phrases),
        }
        for e in library.entries
    ]


def library_from_dict(payload: list[dict]) -> PhraseLibrary:
    if not isinstance(payload, list) or not payload:
        raise ValidationError("phrase library document must be a non-empty JSON array")
    entries = []
    for item in payload:
        try:
            entries.append(
                PhraseEntry(
                    class_id=item["class_id"],
                    class_name=item["class_name"],
                    description=item["description"],
                    phrases=tuple(item["phrases"]),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed phrase library entry {item!r}") from exc
    return PhraseLibrary(entries=tuple(entries))


def save_phrase_library(library: PhraseLibrary, path: str | Path) -> None:
    Path(path).write_text(json.dumps(library_to_dict(library), indent=2, sort_keys=True) + "\n")


def load_phrase_library(path: str | Path) -> PhraseLibrary:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"phrase library {path} is not valid JSON: {exc}") from exc
    return library_from_dict(payload)
