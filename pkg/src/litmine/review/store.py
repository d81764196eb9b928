"""Durable review-record store: append-only log with per-record checksums.

Record frame: ``[u32 payload length][u32 CRC-32 of payload][payload JSON]``,
all little-endian.  A crash can only damage the tail, so loading stops at the
first incomplete or checksum-failing frame, truncates it away, and keeps
every earlier committed record.  Compaction rewrites the latest snapshot per
document through a temp file + atomic rename.
"""

from __future__ import annotations

import json
import logging
import os
import struct
import threading
import time
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

from ..corpus import Dataset, EntitySpan, ExtractionSchema, RelationTriple, Sentence
from ..features import tokenize
from ..pipeline import PreAnnotation, sentence_split

logger = logging.getLogger(__name__)

_FRAME_HEADER = struct.Struct("<II")

STATUSES = ("pending", "in_review", "verified", "rejected")

# Legal status transitions; terminal states allow no further moves.
TRANSITIONS: dict[str, set[str]] = {
    "pending": {"in_review"},
    "in_review": {"verified", "rejected"},
    "verified": set(),
    "rejected": set(),
}


class StoreError(RuntimeError):
    pass


class IllegalTransition(StoreError):
    pass


@dataclass(frozen=True)
class ReviewRecord:
    doc_id: str
    status: str
    pre: PreAnnotation
    corrected: PreAnnotation | None = None
    reviewer: str = ""
    created_at: float = 0.0
    updated_at: float = 0.0
    model_version: int = 0

    def __post_init__(self):
        if self.status not in STATUSES:
            raise StoreError(f"unknown status {self.status!r}")
        terminal = self.status in ("verified", "rejected")
        if terminal and self.corrected is None:
            raise StoreError(f"status {self.status!r} requires a corrected pre-annotation")
        if not terminal and self.corrected is not None:
            raise StoreError(f"status {self.status!r} must not carry corrections")

    def to_obj(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "status": self.status,
            "pre": self.pre.to_obj(),
            "corrected": self.corrected.to_obj() if self.corrected else None,
            "reviewer": self.reviewer,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "model_version": self.model_version,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "ReviewRecord":
        return cls(
            doc_id=str(obj["doc_id"]),
            status=str(obj["status"]),
            pre=PreAnnotation.from_obj(obj["pre"]),
            corrected=PreAnnotation.from_obj(obj["corrected"]) if obj.get("corrected") else None,
            reviewer=str(obj.get("reviewer", "")),
            created_at=float(obj.get("created_at", 0.0)),
            updated_at=float(obj.get("updated_at", 0.0)),
            model_version=int(obj.get("model_version", 0)),
        )

    def summary(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "status": self.status,
            "labels": len((self.corrected or self.pre).labels),
            "connections": len((self.corrected or self.pre).connections),
            "reviewer": self.reviewer,
            "updated_at": self.updated_at,
            "model_version": self.model_version,
        }


def check_transition(old: str, new: str) -> None:
    if new == old:
        return
    if new not in TRANSITIONS.get(old, set()):
        raise IllegalTransition(f"illegal status transition {old!r} -> {new!r}")


class ReviewStore:
    """Latest-snapshot-wins record store over the append-only log."""

    def __init__(self, path: str | Path, compact_slack: int = 64):
        self.path = Path(path)
        self.compact_slack = compact_slack
        self._lock = threading.RLock()
        self._records: dict[str, ReviewRecord] = {}
        self._frames = 0
        self.recovered_bytes = 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            self._replay()
        if self._frames > len(self._records) + compact_slack:
            self.compact()

    def _replay(self) -> None:
        raw = self.path.read_bytes()
        off = 0
        good_end = 0
        while off + _FRAME_HEADER.size <= len(raw):
            length, crc = _FRAME_HEADER.unpack_from(raw, off)
            start = off + _FRAME_HEADER.size
            end = start + length
            if end > len(raw):
                break  # partially written trailing frame
            payload = raw[start:end]
            if zlib.crc32(payload) != crc:
                break  # corrupt tail
            try:
                record = ReviewRecord.from_obj(json.loads(payload.decode("utf-8")))
            except (json.JSONDecodeError, UnicodeDecodeError, KeyError, ValueError) as exc:
                raise StoreError(f"{self.path}: undecodable committed record: {exc}") from exc
            self._records[record.doc_id] = record
            self._frames += 1
            good_end = end
            off = end
        if good_end < len(raw):
            self.recovered_bytes = len(raw) - good_end
            logger.warning("%s: discarding %d bytes of partially written tail",
                           self.path, self.recovered_bytes)
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)

    def _append(self, record: ReviewRecord) -> None:
        payload = json.dumps(record.to_obj(), ensure_ascii=False).encode("utf-8")
        frame = _FRAME_HEADER.pack(len(payload), zlib.crc32(payload)) + payload
        with open(self.path, "ab") as fh:
            fh.write(frame)
            fh.flush()
            os.fsync(fh.fileno())
        self._records[record.doc_id] = record
        self._frames += 1

    # -- public API ----------------------------------------------------------

    def create(self, pre: PreAnnotation, model_version: int = 0) -> ReviewRecord:
        with self._lock:
            if pre.doc_id in self._records:
                raise StoreError(f"record for {pre.doc_id!r} already exists")
            now = time.time()
            record = ReviewRecord(
                doc_id=pre.doc_id, status="pending", pre=pre,
                created_at=now, updated_at=now, model_version=model_version,
            )
            self._append(record)
            return record

    def get(self, doc_id: str) -> ReviewRecord:
        with self._lock:
            record = self._records.get(doc_id)
            if record is None:
                raise KeyError(doc_id)
            return record

    def list(self, status: str | None = None) -> list[ReviewRecord]:
        with self._lock:
            records = sorted(self._records.values(), key=lambda r: r.doc_id)
        if status is not None:
            records = [r for r in records if r.status == status]
        return records

    def transition(self, doc_id: str, status: str,
                   corrected: PreAnnotation | None = None,
                   reviewer: str = "") -> ReviewRecord:
        """Move a record through the pending -> in_review -> verified/rejected machine."""
        with self._lock:
            old = self.get(doc_id)
            check_transition(old.status, status)
            if status == old.status and corrected == old.corrected:
                if status == "in_review" and reviewer and reviewer != old.reviewer:
                    raise IllegalTransition(
                        f"record {doc_id!r} already claimed by {old.reviewer!r}")
                return old  # idempotent re-submission
            if status == old.status:
                raise IllegalTransition(
                    f"record {doc_id!r} already {status!r} with different content")
            record = replace(
                old, status=status, corrected=corrected,
                reviewer=reviewer or old.reviewer, updated_at=time.time(),
            )
            self._append(record)
            return record

    def compact(self) -> None:
        """Rewrite only the latest snapshots; crash-safe via temp file + rename."""
        with self._lock:
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            with open(tmp, "wb") as fh:
                for doc_id in sorted(self._records):
                    payload = json.dumps(
                        self._records[doc_id].to_obj(), ensure_ascii=False).encode("utf-8")
                    fh.write(_FRAME_HEADER.pack(len(payload), zlib.crc32(payload)) + payload)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
            self._frames = len(self._records)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)


# ---------------------------------------------------------------------------
# Export verified records back into a training corpus


@dataclass(frozen=True)
class QuarantinedLabel:
    doc_id: str
    label_id: str
    reason: str


def export_verified(records: list[ReviewRecord], schema: ExtractionSchema,
                    ) -> tuple[Dataset, list[QuarantinedLabel]]:
    """Re-tokenize verified pre-annotations into a Dataset.

    Character offsets must align exactly with token boundaries; anything
    that does not (or that crosses a sentence boundary, or carries an
    out-of-schema type) is quarantined with a reason, never silently dropped.
    """
    sentences: list[Sentence] = []
    quarantined: list[QuarantinedLabel] = []
    for record in records:
        if record.status != "verified" or record.corrected is None:
            continue
        pre = record.corrected
        label_site: dict[str, tuple[int, int]] = {}  # label id -> (sentence idx, entity idx)
        doc_sentences: list[dict] = []
        for sent in sentence_split(pre.content):
            tokens = tokenize(sent.text)
            if not tokens:
                continue
            doc_sentences.append({
                "span": (sent.start, sent.end),
                "tokens": tokens,
                "entities": [],
                "relations": [],
            })
        for label in pre.labels:
            site = None
            for si, entry in enumerate(doc_sentences):
                lo, hi = entry["span"]
                if lo <= label.start and label.end <= hi:
                    site = (si, entry)
                    break
            if site is None:
                quarantined.append(QuarantinedLabel(
                    pre.doc_id, label.id, "label crosses or falls outside sentence boundaries"))
                continue
            si, entry = site
            local_start = label.start - entry["span"][0]
            local_end = label.end - entry["span"][0]
            tok_start = next((i for i, t in enumerate(entry["tokens"]) if t.start == local_start), None)
            tok_end = next((i + 1 for i, t in enumerate(entry["tokens"]) if t.end == local_end), None)
            if tok_start is None or tok_end is None or tok_end <= tok_start:
                quarantined.append(QuarantinedLabel(
                    pre.doc_id, label.id, "offsets not aligned to token boundaries"))
                continue
            if label.type not in schema.entity_types:
                quarantined.append(QuarantinedLabel(
                    pre.doc_id, label.id, f"entity type {label.type!r} not in schema"))
                continue
            entry["entities"].append((tok_start, tok_end, label.type))
            label_site[label.id] = (si, len(entry["entities"]) - 1)
        for conn in pre.connections:
            head = label_site.get(conn.head)
            tail = label_site.get(conn.tail)
            if head is None or tail is None:
                quarantined.append(QuarantinedLabel(
                    pre.doc_id, f"{conn.head}->{conn.tail}",
                    "connection endpoint was quarantined"))
                continue
            if head[0] != tail[0]:
                quarantined.append(QuarantinedLabel(
                    pre.doc_id, f"{conn.head}->{conn.tail}",
                    "connection crosses sentence boundaries"))
                continue
            if conn.type not in schema.relation_types:
                quarantined.append(QuarantinedLabel(
                    pre.doc_id, f"{conn.head}->{conn.tail}",
                    f"relation type {conn.type!r} not in schema"))
                continue
            doc_sentences[head[0]]["relations"].append((head[1], tail[1], conn.type))
        for entry in doc_sentences:
            sentences.append(Sentence(
                tokens=tuple(t.text for t in entry["tokens"]),
                entities=tuple(EntitySpan(s, e, t) for s, e, t in entry["entities"]),
                relations=tuple(RelationTriple(h, t, ty) for h, t, ty in entry["relations"]),
            ))
    ds = Dataset(schema=schema, sentences=tuple(sentences), provenance="review-export")
    return ds, quarantined
