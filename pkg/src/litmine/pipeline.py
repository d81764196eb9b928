"""End-to-end document pipeline: block dump in, pre-annotation JSON out.

Pre-annotations use character offsets into the reconstructed content (never
token indices) so the review surface can highlight raw text directly.  The
interchange shape is ``{"content": ..., "labels": [...], "connections": [...]}``.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass

from . import layout as layout_mod
from .corpus import ExtractionSchema
from .extractor import Model
from .features import _load_data, tokenize

logger = logging.getLogger(__name__)


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class Label:
    id: str
    start: int  # character offset into content
    end: int
    type: str
    confidence: float


@dataclass(frozen=True)
class Connection:
    head: str  # label id
    tail: str
    type: str
    confidence: float


@dataclass(frozen=True)
class PreAnnotation:
    doc_id: str
    content: str
    labels: tuple[Label, ...]
    connections: tuple[Connection, ...]
    model_version: int

    def to_obj(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "content": self.content,
            "labels": [
                {"id": l.id, "start": l.start, "end": l.end,
                 "type": l.type, "confidence": l.confidence}
                for l in self.labels
            ],
            "connections": [
                {"head": c.head, "tail": c.tail, "type": c.type, "confidence": c.confidence}
                for c in self.connections
            ],
            "model_version": self.model_version,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "PreAnnotation":
        try:
            pre = cls(
                doc_id=str(obj["doc_id"]),
                content=str(obj["content"]),
                labels=tuple(
                    Label(id=str(l["id"]), start=int(l["start"]), end=int(l["end"]),
                          type=str(l["type"]), confidence=float(l.get("confidence", 0.0)))
                    for l in obj.get("labels", ())
                ),
                connections=tuple(
                    Connection(head=str(c["head"]), tail=str(c["tail"]), type=str(c["type"]),
                               confidence=float(c.get("confidence", 0.0)))
                    for c in obj.get("connections", ())
                ),
                model_version=int(obj.get("model_version", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise PipelineError(f"malformed pre-annotation: {exc}") from exc
        pre.validate()
        return pre

    def validate(self, schema: ExtractionSchema | None = None) -> None:
        """Structural invariants; raises PipelineError naming the offender."""
        seen: set[str] = set()
        for l in self.labels:
            if l.id in seen:
                raise PipelineError(f"duplicate label id {l.id!r}")
            seen.add(l.id)
            if not (0 <= l.start < l.end <= len(self.content)):
                raise PipelineError(
                    f"label {l.id!r}: offsets ({l.start}, {l.end}) out of range "
                    f"for content of length {len(self.content)}")
        for c in self.connections:
            for end_name, ref in (("head", c.head), ("tail", c.tail)):
                if ref not in seen:
                    raise PipelineError(f"connection {end_name} references unknown label {ref!r}")
            if c.head == c.tail:
                raise PipelineError(f"connection head == tail ({c.head!r})")
        if schema is not None:
            for l in self.labels:
                if l.type not in schema.entity_types:
                    raise PipelineError(f"label {l.id!r}: type {l.type!r} not in schema")
            for c in self.connections:
                if c.type not in schema.relation_types:
                    raise PipelineError(f"connection type {c.type!r} not in schema")

    def surface(self, label: Label) -> str:
        return self.content[label.start:label.end]


def preannotation_to_json(pre: PreAnnotation) -> str:
    """Canonical serialization: stable key order, 2-space indent, trailing newline."""
    return json.dumps(pre.to_obj(), sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def preannotation_from_json(text: str) -> PreAnnotation:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PipelineError(f"invalid pre-annotation JSON: {exc}") from exc
    return PreAnnotation.from_obj(obj)


# ---------------------------------------------------------------------------
# Sentence splitting


@dataclass(frozen=True)
class SentenceSpan:
    text: str
    start: int
    end: int


_BOUNDARY_RE = re.compile(r"[.!?]+[)\]\"'”’]*\s+(?=[A-Z0-9À-Þ])")

_default_abbreviations: tuple[str, ...] | None = None


def default_abbreviations() -> tuple[str, ...]:
    global _default_abbreviations
    if _default_abbreviations is None:
        _default_abbreviations = tuple(_load_data("abbreviations.json"))
    return _default_abbreviations


def sentence_split(text: str, abbreviations: tuple[str, ...] | None = None) -> list[SentenceSpan]:
    """Split on terminal punctuation + whitespace + capital/digit.

    Never splits inside parentheses or after a configured abbreviation
    ("Fig.", "e.g.", ...).  Offsets are exact into the input.
    """
    abbrevs = abbreviations if abbreviations is not None else default_abbreviations()
    boundaries = []
    depth = 0
    pos = 0
    for m in _BOUNDARY_RE.finditer(text):
        depth = _paren_depth(text, pos, m.start(), depth)
        pos = m.start()
        if depth > 0:
            continue
        # word ending at the punctuation, including the period itself
        stop = m.start()
        while stop < len(text) and text[stop] in ".!?":
            stop += 1
        word_start = stop
        while word_start > 0 and not text[word_start - 1].isspace():
            word_start -= 1
        word = text[word_start:stop]
        if word in abbrevs or (len(word) == 2 and word[0].isupper() and word[1] == "."):
            continue  # "J. Smith" style initials
        boundaries.append(m.end())
    spans = []
    start = 0
    for b in boundaries + [len(text)]:
        chunk = text[start:b]
        lo = start + (len(chunk) - len(chunk.lstrip()))
        hi = start + len(chunk.rstrip())
        if hi > lo:
            spans.append(SentenceSpan(text=text[lo:hi], start=lo, end=hi))
        start = b
    return spans


def _paren_depth(text: str, lo: int, hi: int, depth: int) -> int:
    for ch in text[lo:hi]:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
    return depth


# ---------------------------------------------------------------------------
# Pipeline

# Layout categories whose blocks carry the public bibliographic fields, and
# the entity type each category argues for.
FRONT_MATTER_CATEGORIES = ("title", "author", "abstract", "other")
CATEGORY_FIELD_PRIORS = {"title": "Title", "author": "Author"}
CATEGORY_LOGIT_BONUS = 1.0


def select_blocks(doc: layout_mod.DocumentLayout,
                  sections: list[layout_mod.FunctionalSection],
                  section_kinds: tuple[str, ...] = ("method", "experiment"),
                  include_front_matter: bool = True) -> list[str]:
    """Block ids to extract from, in reading order."""
    wanted: set[str] = set()
    for section in sections:
        if section.kind in section_kinds:
            wanted.update(section.block_ids)
    if include_front_matter:
        for bid in doc.reading_order:
            block = doc.block(bid)
            if block.page != 0:
                break
            if block.category == "heading":
                break
            if block.category in FRONT_MATTER_CATEGORIES:
                wanted.add(bid)
    return [bid for bid in doc.reading_order if bid in wanted]


def run_pipeline(block_dump: dict, model: Model,
                 section_kinds: tuple[str, ...] = ("method", "experiment"),
                 include_front_matter: bool = True,
                 section_lexicon: dict[str, list[str]] | None = None) -> PreAnnotation:
    """Layout → reading order → section filter → sentences → extraction."""
    doc_id, blocks = layout_mod.parse_block_dump(block_dump)
    if not blocks:
        raise PipelineError(f"document {doc_id!r} has no blocks")
    doc = layout_mod.build_layout(doc_id, blocks)
    sections = layout_mod.locate_sections(doc, lexicon=section_lexicon)
    selected = select_blocks(doc, sections, section_kinds, include_front_matter)

    content_parts: list[str] = []
    offsets: list[tuple[int, layout_mod.Block]] = []
    pos = 0
    for bid in selected:
        block = doc.block(bid)
        offsets.append((pos, block))
        content_parts.append(block.text)
        pos += len(block.text) + 1  # joined with "\n"
    content = "\n".join(content_parts)

    labels: list[Label] = []
    connections: list[Connection] = []
    counter = 0
    for block_start, block in offsets:
        bonus = None
        prior_type = CATEGORY_FIELD_PRIORS.get(block.category or "")
        if prior_type and prior_type in model.schema.entity_types:
            bonus = {prior_type: CATEGORY_LOGIT_BONUS}
        for sent in sentence_split(block.text):
            tokens = tokenize(sent.text)
            if not tokens:
                continue
            if len(tokens) > model.max_sentence_len:
                logger.warning("%s: skipping %d-token sentence in block %s",
                               doc_id, len(tokens), block.id)
                continue
            words = [t.text for t in tokens]
            result = model.extract(words, class_bonus=bonus)
            base = block_start + sent.start
            sent_labels: list[str] = []
            for ent in result.entities:
                label = Label(
                    id=f"L{counter:04d}",
                    start=base + tokens[ent.start].start,
                    end=base + tokens[ent.end - 1].end,
                    type=ent.type,
                    confidence=round(ent.confidence, 6),
                )
                counter += 1
                labels.append(label)
                sent_labels.append(label.id)
            for rel in result.relations:
                connections.append(Connection(
                    head=sent_labels[rel.head],
                    tail=sent_labels[rel.tail],
                    type=rel.type,
                    confidence=round(rel.confidence, 6),
                ))
    pre = PreAnnotation(
        doc_id=doc_id,
        content=content,
        labels=tuple(labels),
        connections=tuple(connections),
        model_version=model.version,
    )
    pre.validate(model.schema)
    return pre
