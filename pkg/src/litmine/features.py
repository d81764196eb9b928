"""Tokenization, part-of-speech tagging, binary POS coding, and width embeddings.

POS tags are coded in 6 bits per token (big-endian binary of tagset index + 1,
so all-zero always means padding).  A span of up to 10 tokens therefore maps
to a fixed 60-component 0/1 vector.  Span widths index a learned 25-dim
embedding table that is trained along with the rest of the model.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

MAX_SPAN_LEN = 10
POS_BITS = 6
POS_VECTOR_DIM = MAX_SPAN_LEN * POS_BITS  # 60
WIDTH_DIM = 25


def _load_data(name: str):
    return json.loads(resources.files("litmine.data").joinpath(name).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Tokenizer


@dataclass(frozen=True)
class Token:
    text: str
    start: int  # character offset into the input, inclusive
    end: int    # exclusive

# Punctuation peeled off token edges one character at a time.  '-' and '/'
# never appear here so hyphenated terms and formula ratios stay intact.
_EDGE_PUNCT = set(".,;:!?()[]{}<>\"'`“”‘’«»%…")


def tokenize(text: str) -> list[Token]:
    """Whitespace tokenization with edge punctuation split off.

    Offsets index the original string, so ``text[t.start:t.end] == t.text``
    for every token and the token sequence plus the skipped separators
    reconstructs the input exactly.
    """
    tokens: list[Token] = []
    for m in re.finditer(r"\S+", text):
        chunk, base = m.group(), m.start()
        lo, hi = 0, len(chunk)
        lead: list[Token] = []
        while lo < hi and chunk[lo] in _EDGE_PUNCT:
            if chunk[lo] == "." and lo + 1 < hi and chunk[lo + 1].isdigit():
                break  # ".5" style decimals keep their leading period
            lead.append(Token(chunk[lo], base + lo, base + lo + 1))
            lo += 1
        trail: list[Token] = []
        while hi > lo and chunk[hi - 1] in _EDGE_PUNCT:
            trail.append(Token(chunk[hi - 1], base + hi - 1, base + hi))
            hi -= 1
        tokens.extend(lead)
        if hi > lo:
            tokens.append(Token(chunk[lo:hi], base + lo, base + hi))
        tokens.extend(reversed(trail))
    return tokens


# ---------------------------------------------------------------------------
# POS tagset and tagger


class TagsetError(ValueError):
    pass


@dataclass(frozen=True)
class PosTagset:
    """Ordered tag inventory; at most 63 tags fit the 6-bit code budget."""

    tags: tuple[str, ...]
    code_bits: int = POS_BITS

    def __post_init__(self):
        limit = (1 << self.code_bits) - 1  # code 0 is reserved for padding
        if not (1 <= len(self.tags) <= limit):
            raise TagsetError(f"tagset must have 1..{limit} tags, got {len(self.tags)}")
        if len(set(self.tags)) != len(self.tags):
            raise TagsetError("duplicate tag names")

    def index(self, tag: str) -> int:
        try:
            return self.tags.index(tag)
        except ValueError:
            raise TagsetError(f"unknown POS tag {tag!r}") from None

    @classmethod
    def from_file(cls, path: str | Path) -> "PosTagset":
        return cls(tags=tuple(json.loads(Path(path).read_text(encoding="utf-8"))))


def default_tagset() -> PosTagset:
    """The fixed 45-tag Penn-Treebank-style tagset shipped with the package."""
    return PosTagset(tags=tuple(_load_data("tagset.json")))


_PUNCT_TAGS = {
    ".": ".", "!": ".", "?": ".",
    ",": ",",
    ":": ":", ";": ":", "...": ":", "--": ":", "…": ":",
    "(": "(", "[": "(", "{": "(", "<": "(",
    ")": ")", "]": ")", "}": ")", ">": ")",
    "\"": "''", "'": "''", "”": "''", "’": "''", "''": "''",
    "`": "``", "``": "``", "“": "``", "‘": "``",
    "#": "#", "$": "$",
}

_NUMBER_RE = re.compile(r"^[+-]?\d+([.,/:x×-]\d+)*%?$")

_SUFFIX_RULES = (
    ("ing", "VBG"),
    ("ed", "VBN"),
    ("ly", "RB"),
    ("tion", "NN"), ("sion", "NN"), ("ment", "NN"), ("ness", "NN"), ("ity", "NN"),
    ("ous", "JJ"), ("ful", "JJ"), ("ive", "JJ"), ("ible", "JJ"), ("able", "JJ"), ("ic", "JJ"),
)

_default_lexicon: dict[str, str] | None = None


def default_tagger_lexicon() -> dict[str, str]:
    global _default_lexicon
    if _default_lexicon is None:
        _default_lexicon = _load_data("tagger_lexicon.json")
    return _default_lexicon


def pos_tag(tokens: list[str], lexicon: dict[str, str] | None = None) -> list[str]:
    """Rule tagger: lexicon lookup, then punctuation/number/suffix rules, fallback NN.

    Total and deterministic; every output tag belongs to the default tagset.
    """
    lex = lexicon if lexicon is not None else default_tagger_lexicon()
    tags = []
    for tok in tokens:
        tags.append(_tag_one(tok, lex))
    return tags


def _tag_one(tok: str, lex: dict[str, str]) -> str:
    if tok in lex:
        return lex[tok]
    lower = tok.lower()
    if lower in lex:
        return lex[lower]
    if tok in _PUNCT_TAGS:
        return _PUNCT_TAGS[tok]
    if _NUMBER_RE.match(tok):
        return "CD"
    if not any(ch.isalnum() for ch in tok):
        return "SYM"
    if tok[0].islower() or tok[0].isdigit():
        for suffix, tag in _SUFFIX_RULES:
            if len(lower) > len(suffix) + 2 and lower.endswith(suffix):
                return tag
    if tok[0].isupper():
        return "NNP"
    if len(tok) > 3 and tok.endswith("s") and not tok.endswith("ss") and tok[0].islower():
        return "NNS"
    return "NN"


# ---------------------------------------------------------------------------
# Binary POS coding


class SpanTooLongError(ValueError):
    pass


def encode_pos(tags: list[str] | tuple[str, ...], tagset: PosTagset,
               max_span_len: int = MAX_SPAN_LEN) -> np.ndarray:
    """Code a tag sequence into the fixed 0/1 vector of ``max_span_len * 6`` dims.

    Token i contributes bits ``6i..6i+5`` holding the big-endian binary of
    (tagset index + 1); positions past the sequence stay zero.
    """
    if len(tags) > max_span_len:
        raise SpanTooLongError(f"{len(tags)} tags exceed max span length {max_span_len}")
    vec = np.zeros(max_span_len * POS_BITS, dtype=np.float64)
    for i, tag in enumerate(tags):
        write_pos_code(vec, i, tag, tagset)
    return vec


def write_pos_code(vec: np.ndarray, slot: int, tag: str, tagset: PosTagset) -> None:
    """Write one tag's 6-bit code into slot ``slot`` of a POS vector."""
    code = tagset.index(tag) + 1
    base = slot * POS_BITS
    for b in range(POS_BITS):
        vec[base + b] = (code >> (POS_BITS - 1 - b)) & 1


# ---------------------------------------------------------------------------
# Width embedding table


def init_width_table(rng: np.random.Generator, max_span_len: int = MAX_SPAN_LEN,
                     dim: int = WIDTH_DIM) -> np.ndarray:
    """Fresh trainable width table: one row per width 1..max_span_len."""
    return rng.normal(0.0, 0.1, size=(max_span_len, dim))


def width_lookup(table: np.ndarray, k: int) -> np.ndarray:
    """Row for span width k (1-based); the row is a trainable parameter."""
    if not (1 <= k <= table.shape[0]):
        raise ValueError(f"span width {k} out of range 1..{table.shape[0]}")
    return table[k - 1]
