"""Joint training with negative sampling, evaluation metrics, and k-fold runs.

The training loss is the sum of a cross-entropy term over span samples
(gold entities plus sampled non-entity spans targeting the none class) and a
binary cross-entropy term over ordered gold-entity pairs (multi-hot relation
targets; sampled no-relation pairs target all zeros).

Metrics use exact-boundary matching: an entity counts as correct iff
(start, end, type) all match gold; a relation iff (head span, tail span,
type) match, with symmetric relation types compared unordered.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Dataset, ExtractionSchema, Sentence, split_kfold
from .encoder import EncoderConfig, ToyEncoder
from .extractor import (DEFAULT_REL_THRESHOLD, ExtractionResult, Model,
                        SentenceSamples, SpanCandidate, enumerate_spans)
from .features import MAX_SPAN_LEN, WIDTH_DIM, PosTagset, default_tagset, pos_tag


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 2
    learning_rate: float = 5e-5
    dropout: float = 0.1
    max_neg_entities: int = 100
    max_neg_relations: int = 100
    rel_threshold: float = DEFAULT_REL_THRESHOLD
    max_span_len: int = MAX_SPAN_LEN
    width_dim: int = WIDTH_DIM
    seed: int = 0
    grad_clip_norm: float = 1.0
    # adaptive-moment update with bias correction and decoupled weight decay
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        for name in ("epochs", "batch_size", "learning_rate", "max_neg_entities",
                     "max_neg_relations", "rel_threshold", "max_span_len", "width_dim",
                     "grad_clip_norm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"TrainConfig.{name} must be positive")

    def to_obj(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_obj(cls, obj: dict) -> "TrainConfig":
        known = {k: v for k, v in obj.items() if k in cls.__dataclass_fields__}
        return cls(**known)


# ---------------------------------------------------------------------------
# Negative sampling


def _positive_pair_keys(sent: Sentence, schema: ExtractionSchema) -> set[tuple[int, int]]:
    keys = set()
    for rel in sent.relations:
        keys.add((rel.head, rel.tail))
        if rel.type in schema.symmetric_relations:
            keys.add((rel.tail, rel.head))
    return keys


def sample_negatives(sent: Sentence, schema: ExtractionSchema, seed: int,
                     max_neg_entities: int = 100, max_neg_relations: int = 100,
                     max_span_len: int = MAX_SPAN_LEN):
    """Sample non-entity spans and no-relation gold-entity pairs for one sentence.

    Deterministic for a fixed (sentence, seed).  Negative spans never collide
    with a gold span boundary pair; negative pairs are ordered gold-entity
    pairs carrying no gold relation (a symmetric gold relation covers both
    directions).
    """
    rng = random.Random(seed)
    gold_bounds = {(e.start, e.end) for e in sent.entities}
    candidates = [s for s in enumerate_spans(len(sent.tokens), max_span_len)
                  if (s.start, s.end) not in gold_bounds]
    if len(candidates) > max_neg_entities:
        candidates = rng.sample(candidates, max_neg_entities)
    positive = _positive_pair_keys(sent, schema)
    pair_pool = [(i, j)
                 for i in range(len(sent.entities))
                 for j in range(len(sent.entities))
                 if i != j and (i, j) not in positive]
    if len(pair_pool) > max_neg_relations:
        pair_pool = rng.sample(pair_pool, max_neg_relations)
    return candidates, pair_pool


def build_sentence_samples(sent: Sentence, schema: ExtractionSchema, tags: list[str],
                           seed: int, config: TrainConfig) -> SentenceSamples:
    neg_spans, neg_pairs = sample_negatives(
        sent, schema, seed,
        max_neg_entities=config.max_neg_entities,
        max_neg_relations=config.max_neg_relations,
        max_span_len=config.max_span_len,
    )
    span_samples: list[tuple[SpanCandidate, int]] = []
    for ent in sent.entities:
        if ent.width <= config.max_span_len:
            span_samples.append(
                (SpanCandidate(ent.start, ent.end), 1 + schema.entity_types.index(ent.type)))
    span_samples.extend((s, 0) for s in neg_spans)

    r = len(schema.relation_types)
    targets: dict[tuple[int, int], np.ndarray] = {}
    for rel in sent.relations:
        for key in ({(rel.head, rel.tail), (rel.tail, rel.head)}
                    if rel.type in schema.symmetric_relations else {(rel.head, rel.tail)}):
            targets.setdefault(key, np.zeros(r))[schema.relation_types.index(rel.type)] = 1.0
    pair_samples = []
    ent_spans = [SpanCandidate(e.start, e.end) for e in sent.entities]
    for (i, j), target in sorted(targets.items()):
        if ent_spans[i].width <= config.max_span_len and ent_spans[j].width <= config.max_span_len:
            pair_samples.append((ent_spans[i], ent_spans[j], target))
    for i, j in neg_pairs:
        if ent_spans[i].width <= config.max_span_len and ent_spans[j].width <= config.max_span_len:
            pair_samples.append((ent_spans[i], ent_spans[j], np.zeros(r)))
    return SentenceSamples(
        tokens=list(sent.tokens), pos_tags=tags,
        span_samples=span_samples, pair_samples=pair_samples,
    )


def batch_loss(batch: list[SentenceSamples], model: Model,
               train: bool = False, rng: np.random.Generator | None = None):
    """Loss of one batch: (total, ce, bce).  NaN/Inf aborts with a diagnostic."""
    total, ce, bce, _ = model.loss_and_grads(batch, train=train, rng=rng)
    return total, ce, bce


# ---------------------------------------------------------------------------
# Optimizer


class AdamW:
    """Adaptive-moment update with bias correction and decoupled weight decay."""

    def __init__(self, params: dict[str, np.ndarray], config: TrainConfig):
        self.params = params
        self.config = config
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        cfg = self.config
        self.t += 1
        b1t = 1.0 - cfg.beta1 ** self.t
        b2t = 1.0 - cfg.beta2 ** self.t
        for name, g in grads.items():
            p = self.params[name]
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            update = (m / b1t) / (np.sqrt(v / b2t) + cfg.adam_eps)
            p -= cfg.learning_rate * (update + cfg.weight_decay * p)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class TrainResult:
    model: Model
    epoch_losses: list[float]
    log_records: list[dict]


def effective_tags(sent: Sentence) -> list[str]:
    return list(sent.pos_tags) if sent.pos_tags is not None else pos_tag(list(sent.tokens))


def train(dataset: Dataset, config: TrainConfig,
          encoder_config: EncoderConfig | None = None,
          base_model: Model | None = None,
          tagset: PosTagset | None = None,
          log_path: str | Path | None = None,
          model_version: int | None = None) -> TrainResult:
    """Train a model from scratch, or warm-start from ``base_model``.

    Deterministic: a fixed (dataset, config, seed) reproduces the checkpoint
    bit-exactly.  Emits one NDJSON record per batch when ``log_path`` is set.
    """
    if len(dataset) == 0:
        raise TrainingError("cannot train on an empty dataset")
    init_rng = np.random.default_rng(config.seed)
    if base_model is not None:
        model = base_model
        if model.schema != dataset.schema:
            raise TrainingError("warm-start model schema does not match dataset schema")
        if model_version is not None:
            model.version = model_version
    else:
        ts = tagset if tagset is not None else default_tagset()
        enc_cfg = encoder_config if encoder_config is not None else EncoderConfig()
        enc_cfg = EncoderConfig(**{**enc_cfg.to_obj(), "dropout_rate": config.dropout})
        vocab = sorted({tok for sent in dataset.sentences for tok in sent.tokens})
        encoder = ToyEncoder(enc_cfg, vocab, rng=init_rng)
        model = Model.create(
            dataset.schema, ts, encoder, init_rng,
            max_span_len=config.max_span_len, width_dim=config.width_dim,
            rel_threshold=config.rel_threshold,
            version=model_version if model_version is not None else 1,
        )
    tags = [effective_tags(s) for s in dataset.sentences]
    optimizer = AdamW(model.params, config)
    shuffle_rng = random.Random(config.seed)
    dropout_rng = np.random.default_rng(config.seed + 1)
    epoch_losses: list[float] = []
    log_records: list[dict] = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(config.epochs):
            order = list(range(len(dataset)))
            shuffle_rng.shuffle(order)
            epoch_loss = 0.0
            n_batches = 0
            for b0 in range(0, len(order), config.batch_size):
                idx = order[b0:b0 + config.batch_size]
                batch = [
                    build_sentence_samples(
                        dataset.sentences[i], dataset.schema, tags[i],
                        seed=_sample_seed(config.seed, epoch, i), config=config)
                    for i in idx
                ]
                try:
                    total, ce, bce, grads = model.loss_and_grads(
                        batch, train=True, rng=dropout_rng)
                except Exception as exc:
                    raise TrainingError(f"epoch {epoch} batch {n_batches}: {exc}") from exc
                clip_global_norm(grads, config.grad_clip_norm)
                optimizer.step(grads)
                record = {"epoch": epoch, "batch": n_batches, "loss_ce": ce,
                          "loss_bce": bce, "loss_total": total}
                log_records.append(record)
                if log_fh:
                    log_fh.write(json.dumps(record) + "\n")
                epoch_loss += total
                n_batches += 1
            epoch_losses.append(epoch_loss / max(n_batches, 1))
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(model=model, epoch_losses=epoch_losses, log_records=log_records)


def _sample_seed(seed: int, epoch: int, sentence_index: int) -> int:
    return (seed * 1_000_003 + epoch * 8191 + sentence_index) & 0x7FFFFFFF


# ---------------------------------------------------------------------------
# Metrics


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fn + fp
    return 2 * tp / denom if denom else 0.0


def precision_from_counts(tp: int, fp: int) -> float:
    return tp / (tp + fp) if tp + fp else 0.0


def recall_from_counts(tp: int, fn: int) -> float:
    return tp / (tp + fn) if tp + fn else 0.0


def accuracy_from_counts(tp: int, tn: int, fp: int, fn: int) -> float:
    denom = tp + tn + fp + fn
    return (tp + tn) / denom if denom else 0.0


@dataclass
class TypeCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def to_obj(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": precision_from_counts(self.tp, self.fp),
            "recall": recall_from_counts(self.tp, self.fn),
            "f1": f1_from_counts(self.tp, self.fp, self.fn),
        }


@dataclass
class EvalReport:
    entity_counts: dict[str, TypeCounts]
    relation_counts: dict[str, TypeCounts]
    span_decision_counts: dict[str, int]  # tp / tn / fp / fn over all enumerated spans

    @staticmethod
    def _macro(counts: dict[str, TypeCounts]) -> float:
        # Unweighted mean over types that occur in gold or predictions; a
        # type absent from both carries no signal for this evaluation.
        present = [c for c in counts.values() if c.tp or c.fp or c.fn]
        if not present:
            return 0.0
        return sum(f1_from_counts(c.tp, c.fp, c.fn) for c in present) / len(present)

    @staticmethod
    def _micro(counts: dict[str, TypeCounts]) -> float:
        tp = sum(c.tp for c in counts.values())
        fp = sum(c.fp for c in counts.values())
        fn = sum(c.fn for c in counts.values())
        return f1_from_counts(tp, fp, fn)

    @property
    def ner_macro_f1(self) -> float:
        return self._macro(self.entity_counts)

    @property
    def re_macro_f1(self) -> float:
        return self._macro(self.relation_counts)

    @property
    def ner_micro_f1(self) -> float:
        return self._micro(self.entity_counts)

    @property
    def re_micro_f1(self) -> float:
        return self._micro(self.relation_counts)

    @property
    def accuracy(self) -> float:
        c = self.span_decision_counts
        return accuracy_from_counts(c["tp"], c["tn"], c["fp"], c["fn"])

    def to_obj(self) -> dict:
        return {
            "entities": {t: c.to_obj() for t, c in self.entity_counts.items()},
            "relations": {t: c.to_obj() for t, c in self.relation_counts.items()},
            "span_decisions": dict(self.span_decision_counts),
            "ner_macro_f1": self.ner_macro_f1,
            "re_macro_f1": self.re_macro_f1,
            "ner_micro_f1": self.ner_micro_f1,
            "re_micro_f1": self.re_micro_f1,
            "accuracy": self.accuracy,
        }


def _relation_key(head: tuple[int, int], tail: tuple[int, int], rtype: str,
                  schema: ExtractionSchema):
    if rtype in schema.symmetric_relations:
        return (rtype,) + tuple(sorted((head, tail)))
    return (rtype, head, tail)


def gold_relation_keys(sent: Sentence, schema: ExtractionSchema) -> set:
    keys = set()
    for rel in sent.relations:
        head = (sent.entities[rel.head].start, sent.entities[rel.head].end)
        tail = (sent.entities[rel.tail].start, sent.entities[rel.tail].end)
        keys.add(_relation_key(head, tail, rel.type, schema))
    return keys


def predicted_relation_keys(result: ExtractionResult, schema: ExtractionSchema) -> set:
    keys = set()
    for rel in result.relations:
        head = (result.entities[rel.head].start, result.entities[rel.head].end)
        tail = (result.entities[rel.tail].start, result.entities[rel.tail].end)
        keys.add(_relation_key(head, tail, rel.type, schema))
    return keys


def evaluate(dataset: Dataset, model: Model) -> EvalReport:
    """Exact-match evaluation of a model over a dataset."""
    if model.schema != dataset.schema:
        raise ValueError("model schema does not match dataset schema")
    schema = dataset.schema
    ent_counts = {t: TypeCounts() for t in schema.entity_types}
    rel_counts = {t: TypeCounts() for t in schema.relation_types}
    span_counts = {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
    for sent in dataset.sentences:
        tags = effective_tags(sent)
        result = model.extract(list(sent.tokens), tags)
        gold_ents = {(e.start, e.end, e.type) for e in sent.entities}
        pred_ents = {(e.start, e.end, e.type) for e in result.entities}
        for start, end, etype in pred_ents & gold_ents:
            ent_counts[etype].tp += 1
        for start, end, etype in pred_ents - gold_ents:
            ent_counts[etype].fp += 1
        for start, end, etype in gold_ents - pred_ents:
            ent_counts[etype].fn += 1
        gold_rels = gold_relation_keys(sent, schema)
        pred_rels = predicted_relation_keys(result, schema)
        for key in pred_rels & gold_rels:
            rel_counts[key[0]].tp += 1
        for key in pred_rels - gold_rels:
            rel_counts[key[0]].fp += 1
        for key in gold_rels - pred_rels:
            rel_counts[key[0]].fn += 1
        # Span-decision accuracy over all enumerated spans: the none class
        # supplies the true negatives.
        gold_by_bounds = {(e.start, e.end): e.type for e in sent.entities}
        for span, label, _prob in model.span_decisions(list(sent.tokens), tags):
            gold_type = gold_by_bounds.get((span.start, span.end))
            if label == 0:
                if gold_type is None:
                    span_counts["tn"] += 1
                else:
                    span_counts["fn"] += 1
            else:
                pred_type = schema.entity_types[label - 1]
                if gold_type == pred_type:
                    span_counts["tp"] += 1
                else:
                    span_counts["fp"] += 1
    return EvalReport(ent_counts, rel_counts, span_counts)


# ---------------------------------------------------------------------------
# Cross-validation


@dataclass
class CrossValReport:
    fold_reports: list[EvalReport]
    fold_sizes: list[int]

    def _agg(self, values: list[float]) -> dict:
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        return {"mean": mean, "stdev": math.sqrt(var), "folds": values}

    def to_obj(self) -> dict:
        return {
            "k": len(self.fold_reports),
            "fold_sizes": self.fold_sizes,
            "ner_macro_f1": self._agg([r.ner_macro_f1 for r in self.fold_reports]),
            "re_macro_f1": self._agg([r.re_macro_f1 for r in self.fold_reports]),
            "ner_micro_f1": self._agg([r.ner_micro_f1 for r in self.fold_reports]),
            "re_micro_f1": self._agg([r.re_micro_f1 for r in self.fold_reports]),
            "accuracy": self._agg([r.accuracy for r in self.fold_reports]),
            "folds": [r.to_obj() for r in self.fold_reports],
        }

    @property
    def mean_ner_macro_f1(self) -> float:
        vals = [r.ner_macro_f1 for r in self.fold_reports]
        return sum(vals) / len(vals)


def cross_validate(dataset: Dataset, k: int = 10, config: TrainConfig | None = None,
                   encoder_config: EncoderConfig | None = None) -> CrossValReport:
    """Train and evaluate over the k deterministic folds of ``split_kfold``."""
    cfg = config if config is not None else TrainConfig()
    folds = split_kfold(dataset, k, cfg.seed)
    reports, sizes = [], []
    for train_ds, test_ds in folds:
        result = train(train_ds, cfg, encoder_config=encoder_config)
        reports.append(evaluate(test_ds, result.model))
        sizes.append(len(test_ds))
    return CrossValReport(fold_reports=reports, fold_sizes=sizes)
