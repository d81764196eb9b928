"""Block classification, reading order, and functional-section location.

Input is a block dump produced by any external PDF text extractor; this
module never opens PDF binaries.  All functions are pure and deterministic
over immutable inputs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .features import _load_data

CATEGORIES = (
    "title", "author", "abstract", "heading", "paragraph",
    "table", "figure", "caption", "formula", "reference", "other",
)

SECTION_KINDS = ("method", "experiment", "other")


class LayoutError(ValueError):
    """Malformed block dump."""


@dataclass(frozen=True)
class Block:
    id: str
    page: int
    bbox: tuple[float, float, float, float]  # (x0, y0, x1, y1), origin top-left
    text: str
    font_size: float | None = None
    category: str | None = None

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise LayoutError(f"block {self.id}: degenerate bbox {self.bbox}")
        if self.page < 0:
            raise LayoutError(f"block {self.id}: negative page")
        if self.category is not None and self.category not in CATEGORIES:
            raise LayoutError(f"block {self.id}: unknown category {self.category!r}")


@dataclass(frozen=True)
class DocumentLayout:
    doc_id: str
    blocks: tuple[Block, ...]
    reading_order: tuple[str, ...]

    def __post_init__(self):
        ids = [b.id for b in self.blocks]
        if sorted(self.reading_order) != sorted(ids):
            raise LayoutError("reading_order is not a permutation of block ids")

    def block(self, block_id: str) -> Block:
        for b in self.blocks:
            if b.id == block_id:
                return b
        raise KeyError(block_id)


@dataclass(frozen=True)
class FunctionalSection:
    kind: str                    # method | experiment | other
    block_ids: tuple[str, ...]   # contiguous range in reading order
    score: float                 # confidence in [0, 1]


def parse_block_dump(obj: dict) -> tuple[str, list[Block]]:
    """Parse the block-dump JSON: {"doc_id", "pages": [{"page", "blocks": [...]}]}."""
    try:
        doc_id = str(obj["doc_id"])
        pages = obj["pages"]
    except (KeyError, TypeError) as exc:
        raise LayoutError(f"bad block dump: {exc}") from exc
    blocks: list[Block] = []
    seen: set[str] = set()
    for page_obj in pages:
        page = int(page_obj["page"])
        for b in page_obj.get("blocks", ()):
            try:
                blk = Block(
                    id=str(b["id"]),
                    page=page,
                    bbox=tuple(float(v) for v in b["bbox"]),
                    text=str(b.get("text", "")),
                    font_size=float(b["font_size"]) if b.get("font_size") is not None else None,
                    category=b.get("category"),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise LayoutError(f"bad block on page {page}: {exc}") from exc
            if blk.id in seen:
                raise LayoutError(f"duplicate block id {blk.id!r}")
            seen.add(blk.id)
            blocks.append(blk)
    return doc_id, blocks


def load_block_dump(path: str | Path) -> tuple[str, list[Block]]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LayoutError(f"{path}: invalid JSON: {exc}") from exc
    return parse_block_dump(obj)


# ---------------------------------------------------------------------------
# Block classification

_CAPTION_RE = re.compile(r"^(fig(ure)?\.?|table|tab\.|scheme)\s*\d", re.IGNORECASE)
_REFERENCE_LINE_RE = re.compile(r"^\s*(\[\d+\]|\d+\.)\s")
_FORMULA_CHARS = set("=+<>^_{}\\∑∏∫√±×·≤≥≈Δαβγλμσπθω")


def _digit_density(text: str) -> float:
    stripped = [c for c in text if not c.isspace()]
    if not stripped:
        return 0.0
    return sum(c.isdigit() for c in stripped) / len(stripped)


def _looks_tabular(text: str) -> bool:
    # Digit-heavy text laid out as aligned columns: several lines, most of
    # them carrying 2+ whitespace-separated cells.
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        return False
    multi_cell = sum(1 for ln in lines if len(ln.split()) >= 2)
    return _digit_density(text) >= 0.30 and multi_cell >= max(2, len(lines) // 2)


def _looks_heading(text: str) -> bool:
    stripped = text.strip()
    if not stripped or "\n" in stripped or len(stripped) > 80:
        return False
    if re.match(r"^\d+(\.\d+)*\.?\s+\S", stripped):
        return True
    words = stripped.split()
    if len(words) > 10 or stripped.endswith((".", ";", ",")):
        return False
    caps = sum(1 for w in words if w[:1].isupper())
    return caps >= max(1, len(words) // 2)


def _looks_formula(text: str) -> bool:
    stripped = text.strip()
    if not stripped or len(stripped) > 120 or "\n" in stripped:
        return False
    symbolic = sum(1 for c in stripped if c in _FORMULA_CHARS)
    return symbolic >= 2 and symbolic / max(len(stripped), 1) > 0.03


def _looks_reference_list(text: str) -> bool:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        return bool(lines) and bool(_REFERENCE_LINE_RE.match(lines[0])) and "[" in lines[0]
    hits = sum(1 for ln in lines if _REFERENCE_LINE_RE.match(ln))
    return hits >= max(2, len(lines) // 2)


def classify_blocks(blocks: list[Block]) -> list[Block]:
    """Fill in a category for every block; input categories are preserved.

    Heuristics use font-size percentile, page position, and text statistics.
    Unknowns fall back to "paragraph" for prose and "other" otherwise.
    """
    if not blocks:
        return []
    sizes = sorted(b.font_size for b in blocks if b.font_size is not None)
    max_size = sizes[-1] if sizes else None
    median_size = sizes[len(sizes) // 2] if sizes else None
    page_bottom = {}
    for b in blocks:
        page_bottom[b.page] = max(page_bottom.get(b.page, 0.0), b.bbox[3])

    # Title: the largest-font block in the top region of page 0.
    title_id = None
    candidates = [
        b for b in blocks
        if b.page == 0 and b.category is None and b.text.strip()
        and b.bbox[1] <= 0.35 * page_bottom.get(0, 1.0)
    ]
    if candidates and max_size is not None:
        top = [b for b in candidates if b.font_size == max_size]
        if top:
            title_id = min(top, key=lambda b: (b.bbox[1], b.bbox[0])).id

    out: list[Block] = []
    prev_category: str | None = None
    for b in sorted(blocks, key=lambda b: (b.page, b.bbox[1], b.bbox[0])):
        if b.category is not None:
            cat = b.category
        elif b.id == title_id:
            cat = "title"
        else:
            cat = _classify_one(b, prev_category, median_size, title_id)
        out.append(replace(b, category=cat))
        prev_category = cat
    original_pos = {b.id: i for i, b in enumerate(blocks)}
    out.sort(key=lambda b: original_pos[b.id])
    return out


def _classify_one(b: Block, prev_category: str | None, median_size: float | None,
                  title_id: str | None) -> str:
    text = b.text.strip()
    if not text:
        return "figure"  # image-only block in a text dump
    lower = text.lower()
    if lower.startswith("abstract"):
        return "abstract"
    if _CAPTION_RE.match(text):
        return "caption"
    if _looks_tabular(b.text):
        return "table"
    if _looks_reference_list(b.text):
        return "reference"
    if _looks_formula(text):
        return "formula"
    if b.page == 0 and prev_category == "title" and len(text) <= 200 and "\n" not in text:
        return "author"
    if _looks_heading(text):
        return "heading"
    if len(text) >= 40 or " " in text:
        return "paragraph"
    return "other"


# ---------------------------------------------------------------------------
# Reading order

# Two blocks share a column when their horizontal overlap covers at least
# half of the narrower block's width.
COLUMN_OVERLAP_RATIO = 0.5


def _same_column(a: Block, b: Block) -> bool:
    overlap = min(a.bbox[2], b.bbox[2]) - max(a.bbox[0], b.bbox[0])
    narrower = min(a.bbox[2] - a.bbox[0], b.bbox[2] - b.bbox[0])
    return overlap >= COLUMN_OVERLAP_RATIO * narrower


def reading_order(blocks: list[Block]) -> list[str]:
    """Column-aware top-to-bottom order: (page, column, y0, x0)."""
    order: list[str] = []
    pages = sorted({b.page for b in blocks})
    for page in pages:
        page_blocks = sorted(
            (b for b in blocks if b.page == page),
            key=lambda b: (b.bbox[0], b.bbox[1], b.id),
        )
        # Greedy x-overlap clustering into columns, left to right.
        columns: list[list[Block]] = []
        for b in page_blocks:
            for col in columns:
                if any(_same_column(b, other) for other in col):
                    col.append(b)
                    break
            else:
                columns.append([b])
        columns.sort(key=lambda col: min(b.bbox[0] for b in col))
        for col in columns:
            col.sort(key=lambda b: (b.bbox[1], b.bbox[0], b.id))
            order.extend(b.id for b in col)
    return order


def build_layout(doc_id: str, blocks: list[Block]) -> DocumentLayout:
    categorized = classify_blocks(blocks)
    return DocumentLayout(
        doc_id=doc_id,
        blocks=tuple(categorized),
        reading_order=tuple(reading_order(categorized)),
    )


# ---------------------------------------------------------------------------
# Functional-section location


def default_section_lexicon() -> dict[str, list[str]]:
    return _load_data("section_lexicon.json")


def _stem(word: str) -> str:
    w = word.lower().strip(".:;,()")
    return w[:-1] if w.endswith("s") and not w.endswith("ss") else w


def _keyword_match(heading: str, keywords: list[str]) -> float:
    """Strength of the lexicon match: 1.0 for a hit in the first 3 words, else 0.7."""
    words = [_stem(w) for w in heading.split() if _stem(w)]
    stems = [_stem(k) for k in keywords]
    for pos, w in enumerate(words):
        for k in stems:
            if w == k or (len(k) >= 4 and w.startswith(k)):
                return 1.0 if pos < 3 else 0.7
    return 0.0


def locate_sections(doc: DocumentLayout,
                    lexicon: dict[str, list[str]] | None = None) -> list[FunctionalSection]:
    """Assign contiguous reading-order ranges to method/experiment sections.

    Headings are matched against the (configurable) keyword lexicon; each
    section runs from its heading to the next heading.  With no recognized
    heading at all, the whole document forms one "other" section, score 0.
    """
    lex = lexicon if lexicon is not None else default_section_lexicon()
    ordered = [doc.block(bid) for bid in doc.reading_order]
    n = len(ordered)
    if n == 0:
        return []

    heading_idx = [i for i, b in enumerate(ordered) if b.category == "heading"]
    if not heading_idx:
        return [FunctionalSection("other", tuple(b.id for b in ordered), 0.0)]

    sections: list[FunctionalSection] = []
    if heading_idx[0] > 0:
        sections.append(
            FunctionalSection("other", tuple(b.id for b in ordered[: heading_idx[0]]), 0.0)
        )
    for j, start in enumerate(heading_idx):
        stop = heading_idx[j + 1] if j + 1 < len(heading_idx) else n
        heading = ordered[start]
        kind, strength = "other", 0.0
        for candidate in ("method", "experiment"):
            s = _keyword_match(heading.text, lex.get(candidate, []))
            if s > strength:
                kind, strength = candidate, s
        # Front-matter penalty: a keyword hit in the first few percent of the
        # document is usually a TOC line or running header, not the section.
        prior = 0.5 if start / max(n, 1) < 0.05 and n > 10 else 1.0
        score = min(max(strength * prior, 0.0), 1.0)
        if score == 0.0:
            kind = "other"
        sections.append(FunctionalSection(kind, tuple(b.id for b in ordered[start:stop]), score))
    return sections
