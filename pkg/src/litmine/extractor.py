"""Span enumeration, feature fusion, and the joint span/relation classifiers.

A span's feature vector concatenates the max-pooled token vectors over the
span, the 60-dim binary POS code, the learned width-embedding row, and the
sentence vector: dim = d_tok + 60 + 25 + d_sent.

An ordered entity pair's feature vector concatenates the separately pooled
head and tail vectors, the pooled between-context vector (zero when the
context is empty), a 60-dim POS code over the first tokens of head and tail,
a 60-dim POS code over the context tokens adjacent to the pair boundaries,
and both width rows: dim = 3*d_tok + 170.

Span classification is softmax over k+1 classes with "none" at index 0;
relation classification is per-type sigmoid with an argmax-over-threshold
decode that emits at most one triple per ordered pair.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import ExtractionSchema
from .encoder import EncoderConfig, TokenEncoding, ToyEncoder, load_precomputed
from .features import (MAX_SPAN_LEN, POS_VECTOR_DIM, WIDTH_DIM, PosTagset,
                       encode_pos, pos_tag, width_lookup, write_pos_code)

DEFAULT_REL_THRESHOLD = 0.4
DEFAULT_MAX_SENTENCE_LEN = 256

# Tokens per entity / per context side contributing to the pair POS codes:
# two groups of 5 slots fill the same fixed 60-dim budget as a span code.
PAIR_POS_SLOTS = MAX_SPAN_LEN // 2


class ExtractorError(ValueError):
    pass


@dataclass(frozen=True)
class SpanCandidate:
    start: int
    end: int  # exclusive

    @property
    def width(self) -> int:
        return self.end - self.start


def enumerate_spans(n: int, max_span_len: int = MAX_SPAN_LEN) -> list[SpanCandidate]:
    """All contiguous spans of width 1..min(max_span_len, n), ordered by (start, width)."""
    if n < 0:
        raise ValueError("sentence length must be >= 0")
    spans = []
    for start in range(n):
        for width in range(1, min(max_span_len, n - start) + 1):
            spans.append(SpanCandidate(start, start + width))
    return spans


def span_feature_dim(d_tok: int, d_sent: int) -> int:
    return d_tok + POS_VECTOR_DIM + WIDTH_DIM + d_sent


def relation_feature_dim(d_tok: int) -> int:
    return 3 * d_tok + 2 * POS_VECTOR_DIM + 2 * WIDTH_DIM


def _max_pool(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Component-wise max over rows; also returns the argmax rows for backprop."""
    idx = np.argmax(vectors, axis=0)
    return vectors[idx, np.arange(vectors.shape[1])], idx


def span_features(span: SpanCandidate, enc: TokenEncoding, pos_tags: list[str] | tuple[str, ...],
                  width_table: np.ndarray, tagset: PosTagset) -> np.ndarray:
    vec, _ = _span_features_cached(span, enc, pos_tags, width_table, tagset)
    return vec


def _span_features_cached(span, enc, pos_tags, width_table, tagset):
    d_tok = enc.token_vectors.shape[1]
    pooled, pool_idx = _max_pool(enc.token_vectors[span.start:span.end])
    pos_vec = encode_pos(list(pos_tags[span.start:span.end]), tagset)
    width_vec = width_lookup(width_table, span.width)
    x = np.concatenate([pooled, pos_vec, width_vec, enc.sentence_vector])
    return x, {"pool_idx": pool_idx, "d_tok": d_tok, "span": span}


def pair_candidates(n_entities: int) -> list[tuple[int, int]]:
    """All ordered (head, tail) index pairs with head != tail: N*(N-1) pairs."""
    return [(i, j) for i in range(n_entities) for j in range(n_entities) if i != j]


def _context_range(head: SpanCandidate, tail: SpanCandidate) -> tuple[int, int]:
    """Token range strictly between the two spans; empty when they touch or overlap."""
    if head.end <= tail.start:
        return head.end, tail.start
    if tail.end <= head.start:
        return tail.end, head.start
    return 0, 0


def _pair_pos_vector(head_tags, tail_tags, tagset: PosTagset) -> np.ndarray:
    """Head tokens fill slots 0..4, tail tokens slots 5..9 (first 5 of each)."""
    vec = np.zeros(POS_VECTOR_DIM, dtype=np.float64)
    for i, tag in enumerate(head_tags[:PAIR_POS_SLOTS]):
        write_pos_code(vec, i, tag, tagset)
    for i, tag in enumerate(tail_tags[:PAIR_POS_SLOTS]):
        write_pos_code(vec, PAIR_POS_SLOTS + i, tag, tagset)
    return vec


def _context_pos_vector(ctx_tags, tagset: PosTagset) -> np.ndarray:
    """Junction code: up to 5 context tokens off each pair boundary (text order)."""
    vec = np.zeros(POS_VECTOR_DIM, dtype=np.float64)
    for i, tag in enumerate(ctx_tags[:PAIR_POS_SLOTS]):
        write_pos_code(vec, i, tag, tagset)
    for i, tag in enumerate(ctx_tags[-PAIR_POS_SLOTS:] if ctx_tags else []):
        write_pos_code(vec, PAIR_POS_SLOTS + i, tag, tagset)
    return vec


def relation_features(head: SpanCandidate, tail: SpanCandidate, enc: TokenEncoding,
                      pos_tags, width_table: np.ndarray, tagset: PosTagset) -> np.ndarray:
    vec, _ = _relation_features_cached(head, tail, enc, pos_tags, width_table, tagset)
    return vec


def _relation_features_cached(head, tail, enc, pos_tags, width_table, tagset):
    d_tok = enc.token_vectors.shape[1]
    head_pool, head_idx = _max_pool(enc.token_vectors[head.start:head.end])
    tail_pool, tail_idx = _max_pool(enc.token_vectors[tail.start:tail.end])
    ctx_lo, ctx_hi = _context_range(head, tail)
    if ctx_hi > ctx_lo:
        ctx_pool, ctx_idx = _max_pool(enc.token_vectors[ctx_lo:ctx_hi])
        ctx_tags = list(pos_tags[ctx_lo:ctx_hi])
    else:
        ctx_pool, ctx_idx = np.zeros(d_tok), None
        ctx_tags = []
    pos_pair = _pair_pos_vector(pos_tags[head.start:head.end], pos_tags[tail.start:tail.end], tagset)
    pos_ctx = _context_pos_vector(ctx_tags, tagset)
    x = np.concatenate([
        head_pool, tail_pool, ctx_pool, pos_pair, pos_ctx,
        width_lookup(width_table, head.width), width_lookup(width_table, tail.width),
    ])
    cache = {
        "head": head, "tail": tail, "head_idx": head_idx, "tail_idx": tail_idx,
        "ctx": (ctx_lo, ctx_hi), "ctx_idx": ctx_idx, "d_tok": d_tok,
    }
    return x, cache


# ---------------------------------------------------------------------------
# Classifier math


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def classify_spans(features: np.ndarray, weight: np.ndarray,
                   bias: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Softmax span classification: (labels, probabilities) per row.

    Label 0 is the none class; ties break toward the lowest class index
    (np.argmax picks the first maximum).
    """
    logits = features @ weight.T + bias
    probs = softmax(logits)
    labels = np.argmax(probs, axis=-1)
    return labels, probs


def decode_relation_scores(scores: np.ndarray, threshold: float = DEFAULT_REL_THRESHOLD) -> int | None:
    """At most one relation per ordered pair: argmax type iff score > threshold (strict)."""
    best = int(np.argmax(scores))
    if scores[best] > threshold:
        return best
    return None


@dataclass(frozen=True)
class PredictedEntity:
    start: int
    end: int
    type: str
    confidence: float


@dataclass(frozen=True)
class PredictedRelation:
    head: int  # index into the predicted entity list
    tail: int
    type: str
    confidence: float


@dataclass(frozen=True)
class ExtractionResult:
    entities: tuple[PredictedEntity, ...]
    relations: tuple[PredictedRelation, ...]


# ---------------------------------------------------------------------------
# The joint model


@dataclass
class SentenceSamples:
    """One sentence's training samples (gold plus sampled negatives)."""

    tokens: list[str]
    pos_tags: list[str]
    span_samples: list[tuple[SpanCandidate, int]]                  # (span, class index)
    pair_samples: list[tuple[SpanCandidate, SpanCandidate, np.ndarray]]  # multi-hot targets


class Model:
    """Schema-bound joint extraction model: encoder + width table + two heads."""

    def __init__(self, schema: ExtractionSchema, tagset: PosTagset, encoder,
                 params: dict[str, np.ndarray], max_span_len: int = MAX_SPAN_LEN,
                 rel_threshold: float = DEFAULT_REL_THRESHOLD,
                 max_sentence_len: int = DEFAULT_MAX_SENTENCE_LEN, version: int = 1):
        self.schema = schema
        self.tagset = tagset
        self.encoder = encoder
        self.params = params
        self.max_span_len = max_span_len
        self.rel_threshold = rel_threshold
        self.max_sentence_len = max_sentence_len
        self.version = version

    @classmethod
    def create(cls, schema: ExtractionSchema, tagset: PosTagset, encoder,
               rng: np.random.Generator, max_span_len: int = MAX_SPAN_LEN,
               width_dim: int = WIDTH_DIM, rel_threshold: float = DEFAULT_REL_THRESHOLD,
               max_sentence_len: int = DEFAULT_MAX_SENTENCE_LEN, version: int = 1) -> "Model":
        k = len(schema.entity_types)
        r = len(schema.relation_types)
        d_tok, d_sent = encoder.d_tok, encoder.d_sent
        params = dict(encoder.params)
        params["width"] = rng.normal(0.0, 0.1, size=(max_span_len, width_dim))
        # Zero-initialized heads: uniform class probabilities before training.
        params["span_w"] = np.zeros((k + 1, span_feature_dim(d_tok, d_sent)))
        params["span_b"] = np.zeros(k + 1)
        params["rel_w"] = np.zeros((r, relation_feature_dim(d_tok)))
        params["rel_b"] = np.zeros(r)
        encoder.params = params  # encoder views the shared tensor dict
        return cls(schema, tagset, encoder, params, max_span_len=max_span_len,
                   rel_threshold=rel_threshold, max_sentence_len=max_sentence_len,
                   version=version)

    # -- inference ----------------------------------------------------------

    def effective_pos_tags(self, tokens, pos_tags=None) -> list[str]:
        if pos_tags is not None:
            return list(pos_tags)
        return pos_tag(list(tokens))

    def _decide_spans(self, enc: TokenEncoding, n_tokens: int, tags,
                      class_bonus: dict[str, float] | None = None):
        spans = enumerate_spans(n_tokens, self.max_span_len)
        xs = np.stack([
            span_features(s, enc, tags, self.params["width"], self.tagset) for s in spans
        ])
        logits = xs @ self.params["span_w"].T + self.params["span_b"]
        if class_bonus:
            for type_name, bonus in class_bonus.items():
                if type_name in self.schema.entity_types:
                    logits[:, 1 + self.schema.entity_types.index(type_name)] += bonus
        probs = softmax(logits)
        labels = np.argmax(probs, axis=-1)
        return [(span, int(lab), float(probs[i, lab]))
                for i, (span, lab) in enumerate(zip(spans, labels))]

    def span_decisions(self, tokens, pos_tags=None,
                       class_bonus: dict[str, float] | None = None):
        """Classify every enumerated span: list of (span, class index, probability)."""
        tokens = list(tokens)
        if len(tokens) > self.max_sentence_len:
            raise ExtractorError(
                f"sentence of {len(tokens)} tokens exceeds limit {self.max_sentence_len}")
        if not tokens:
            return []
        tags = self.effective_pos_tags(tokens, pos_tags)
        enc = self.encoder.encode(tokens, train=False)
        return self._decide_spans(enc, len(tokens), tags, class_bonus)

    def extract(self, tokens, pos_tags=None,
                class_bonus: dict[str, float] | None = None) -> ExtractionResult:
        """Two-stage extraction: classify spans, drop none, pair, classify relations."""
        tokens = list(tokens)
        if len(tokens) > self.max_sentence_len:
            raise ExtractorError(
                f"sentence of {len(tokens)} tokens exceeds limit {self.max_sentence_len}")
        if not tokens:
            return ExtractionResult((), ())
        tags = self.effective_pos_tags(tokens, pos_tags)
        enc = self.encoder.encode(tokens, train=False)
        decisions = self._decide_spans(enc, len(tokens), tags, class_bonus)
        entities = [
            PredictedEntity(span.start, span.end,
                            self.schema.entity_types[label - 1], prob)
            for span, label, prob in decisions if label != 0
        ]
        relations: list[PredictedRelation] = []
        if len(entities) >= 2 and self.schema.relation_types:
            ent_spans = [SpanCandidate(e.start, e.end) for e in entities]
            for i, j in pair_candidates(len(entities)):
                xr = relation_features(ent_spans[i], ent_spans[j], enc, tags,
                                       self.params["width"], self.tagset)
                scores = sigmoid(xr @ self.params["rel_w"].T + self.params["rel_b"])
                choice = decode_relation_scores(scores, self.rel_threshold)
                if choice is not None:
                    relations.append(PredictedRelation(
                        i, j, self.schema.relation_types[choice], float(scores[choice])))
        return ExtractionResult(tuple(entities), tuple(relations))

    # -- training -----------------------------------------------------------

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(t) for name, t in self.params.items()}

    def loss_and_grads(self, batch: list[SentenceSamples], train: bool = True,
                       rng: np.random.Generator | None = None,
                       grads: dict[str, np.ndarray] | None = None):
        """Joint loss over a batch: mean CE over span samples + mean BCE over pairs.

        Per pair, the BCE sums the per-type binary cross-entropies against the
        multi-hot target.  Returns (total, ce, bce, grads).
        """
        if grads is None:
            grads = self.zero_grads()
        n_span = sum(len(s.span_samples) for s in batch)
        n_pair = sum(len(s.pair_samples) for s in batch)
        ce_total, bce_total = 0.0, 0.0
        for samples in batch:
            ce, bce = self._sentence_loss(samples, n_span, n_pair, train, rng, grads)
            ce_total += ce
            bce_total += bce
        total = ce_total + bce_total
        if not np.isfinite(total):
            raise ExtractorError(
                f"non-finite loss (ce={ce_total}, bce={bce_total}); aborting")
        return total, ce_total, bce_total, grads

    def _sentence_loss(self, samples: SentenceSamples, n_span: int, n_pair: int,
                       train: bool, rng, grads) -> tuple[float, float]:
        if not samples.tokens or (not samples.span_samples and not samples.pair_samples):
            return 0.0, 0.0
        enc, enc_cache = self.encoder.forward(samples.tokens, train=train, rng=rng)
        d_tok = enc.token_vectors.shape[1]
        width = self.params["width"]
        d_tokens = np.zeros_like(enc.token_vectors)
        d_sentence = np.zeros_like(enc.sentence_vector)
        ce = 0.0
        if samples.span_samples:
            xs, caches, targets = [], [], []
            for span, label in samples.span_samples:
                x, cache = _span_features_cached(span, enc, samples.pos_tags, width, self.tagset)
                xs.append(x)
                caches.append(cache)
                targets.append(label)
            xs = np.stack(xs)
            targets = np.array(targets)
            logits = xs @ self.params["span_w"].T + self.params["span_b"]
            zmax = logits.max(axis=1, keepdims=True)
            logsumexp = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
            ce = float((logsumexp - logits[np.arange(len(targets)), targets]).sum() / n_span)
            dlogits = softmax(logits)
            dlogits[np.arange(len(targets)), targets] -= 1.0
            dlogits /= n_span
            grads["span_w"] += dlogits.T @ xs
            grads["span_b"] += dlogits.sum(axis=0)
            dxs = dlogits @ self.params["span_w"]
            off_w = d_tok + POS_VECTOR_DIM
            off_c = off_w + width.shape[1]
            for row, cache in enumerate(caches):
                span = cache["span"]
                np.add.at(d_tokens[span.start:span.end],
                          (cache["pool_idx"], np.arange(d_tok)), dxs[row, :d_tok])
                grads["width"][span.width - 1] += dxs[row, off_w:off_c]
                d_sentence += dxs[row, off_c:]
        bce = 0.0
        if samples.pair_samples:
            xr, caches, targets = [], [], []
            for head, tail, target in samples.pair_samples:
                x, cache = _relation_features_cached(head, tail, enc, samples.pos_tags,
                                                     width, self.tagset)
                xr.append(x)
                caches.append(cache)
                targets.append(target)
            xr = np.stack(xr)
            targets = np.stack(targets)
            logits = xr @ self.params["rel_w"].T + self.params["rel_b"]
            # softplus(z) - t*z, summed over types, averaged over pairs
            bce = float((np.logaddexp(0.0, logits) - targets * logits).sum() / n_pair)
            dlogits = (sigmoid(logits) - targets) / n_pair
            grads["rel_w"] += dlogits.T @ xr
            grads["rel_b"] += dlogits.sum(axis=0)
            dxr = dlogits @ self.params["rel_w"]
            wd = width.shape[1]
            off_pos = 3 * d_tok
            off_w1 = off_pos + 2 * POS_VECTOR_DIM
            for row, cache in enumerate(caches):
                head, tail = cache["head"], cache["tail"]
                cols = np.arange(d_tok)
                np.add.at(d_tokens[head.start:head.end],
                          (cache["head_idx"], cols), dxr[row, :d_tok])
                np.add.at(d_tokens[tail.start:tail.end],
                          (cache["tail_idx"], cols), dxr[row, d_tok:2 * d_tok])
                ctx_lo, ctx_hi = cache["ctx"]
                if cache["ctx_idx"] is not None:
                    np.add.at(d_tokens[ctx_lo:ctx_hi],
                              (cache["ctx_idx"], cols), dxr[row, 2 * d_tok:3 * d_tok])
                grads["width"][head.width - 1] += dxr[row, off_w1:off_w1 + wd]
                grads["width"][tail.width - 1] += dxr[row, off_w1 + wd:off_w1 + 2 * wd]
        self.encoder.backward(enc_cache, d_tokens, d_sentence, grads)
        return ce, bce


# ---------------------------------------------------------------------------
# Checkpoint serialization: magic + u32 header length + JSON header + f32 blobs

CHECKPOINT_MAGIC = b"LMCK"
CHECKPOINT_FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: Model, path: str | Path) -> None:
    names = sorted(model.params)
    manifest = []
    blobs = []
    for name in names:
        tensor = np.ascontiguousarray(model.params[name], dtype="<f4")
        blob = tensor.tobytes()
        manifest.append({
            "name": name,
            "shape": list(model.params[name].shape),
            "digest": hashlib.sha256(blob).hexdigest(),
        })
        blobs.append(blob)
    enc = model.encoder
    header: dict = {
        "format": "litmine-checkpoint",
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_version": model.version,
        "schema": model.schema.to_obj(),
        "tagset": list(model.tagset.tags),
        "encoder": enc.config.to_obj(),
        "max_span_len": model.max_span_len,
        "rel_threshold": model.rel_threshold,
        "max_sentence_len": model.max_sentence_len,
        "tensors": manifest,
    }
    if isinstance(enc, ToyEncoder):
        header["vocab"] = enc.vocab
        header["vocab_digest"] = hashlib.sha256("\x00".join(enc.vocab).encode()).hexdigest()
    else:
        header["precomputed_source"] = enc.source
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path, precomputed_path: str | Path | None = None) -> Model:
    from .corpus import ExtractionSchema  # local alias keeps import cycle away

    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC or len(raw) < 8:
        raise CheckpointError(f"{path}: not a model checkpoint")
    (header_len,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8:8 + header_len].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    if header.get("format") != "litmine-checkpoint":
        raise CheckpointError(f"{path}: unknown checkpoint format")
    body = raw[8 + header_len:]
    params: dict[str, np.ndarray] = {}
    off = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        blob = body[off:off + 4 * count]
        if len(blob) != 4 * count:
            raise CheckpointError(f"{path}: truncated tensor {entry['name']!r}")
        if hashlib.sha256(blob).hexdigest() != entry["digest"]:
            raise CheckpointError(f"{path}: digest mismatch for tensor {entry['name']!r}")
        params[entry["name"]] = np.frombuffer(blob, dtype="<f4").reshape(shape).astype(np.float64)
        off += 4 * count
    if off != len(body):
        raise CheckpointError(f"{path}: {len(body) - off} trailing bytes after tensors")

    schema = ExtractionSchema.from_obj(header["schema"])
    tagset = PosTagset(tags=tuple(header["tagset"]))
    enc_config = EncoderConfig.from_obj(header["encoder"])
    if enc_config.kind == "toy":
        vocab = header["vocab"]
        digest = hashlib.sha256("\x00".join(vocab).encode()).hexdigest()
        if digest != header.get("vocab_digest"):
            raise CheckpointError(f"{path}: vocabulary digest mismatch")
        encoder = ToyEncoder(enc_config, vocab, params=params)
    else:
        source = precomputed_path or header.get("precomputed_source")
        if not source:
            raise CheckpointError(f"{path}: no precomputed-embedding source recorded")
        encoder = load_precomputed(source)
        encoder.params = params
    return Model(
        schema=schema, tagset=tagset, encoder=encoder, params=params,
        max_span_len=int(header["max_span_len"]),
        rel_threshold=float(header["rel_threshold"]),
        max_sentence_len=int(header["max_sentence_len"]),
        version=int(header["model_version"]),
    )
