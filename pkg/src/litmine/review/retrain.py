"""Warm-start retraining from verified review records, with a regression gate.

Verified records are split into a fine-tuning set and a held-back gate set
(whole records, deterministically chosen).  The new model version is
published only when its combined macro F1 on the gate set does not fall
more than the gate margin below the base model's score on the same set;
otherwise the job fails and the old version stays live.
"""

from __future__ import annotations

import copy
import math
import random
from dataclasses import dataclass

from ..corpus import Dataset
from ..extractor import Model
from ..trainer import TrainConfig, evaluate, train
from .store import ReviewRecord, export_verified

REGRESSION_GATE = 0.02
DEFAULT_RETRAIN_EPOCHS = 5
HOLDBACK_FRACTION = 0.2


class RetrainError(RuntimeError):
    pass


@dataclass
class RetrainOutcome:
    model: Model | None
    published: bool
    base_metric: float
    new_metric: float
    record_count: int
    sentence_count: int
    quarantined: int
    reason: str = ""


def gate_metric(report) -> float:
    """Combined macro F1: mean of entity and relation macro when relations exist."""
    if report.relation_counts:
        return 0.5 * (report.ner_macro_f1 + report.re_macro_f1)
    return report.ner_macro_f1


def _clone_model(base: Model) -> Model:
    params = {k: v.copy() for k, v in base.params.items()}
    encoder = copy.copy(base.encoder)
    encoder.params = params
    return Model(
        schema=base.schema, tagset=base.tagset, encoder=encoder, params=params,
        max_span_len=base.max_span_len, rel_threshold=base.rel_threshold,
        max_sentence_len=base.max_sentence_len, version=base.version,
    )


def holdback_records(records: list[ReviewRecord], seed: int,
                     ) -> tuple[list[ReviewRecord], list[ReviewRecord]]:
    """Deterministic record-level split; a single record gates on itself."""
    ordered = sorted(records, key=lambda r: r.doc_id)
    if len(ordered) < 2:
        return ordered, ordered
    order = list(range(len(ordered)))
    random.Random(seed).shuffle(order)
    n_hold = max(1, math.ceil(HOLDBACK_FRACTION * len(ordered)))
    held = set(order[:n_hold])
    train_recs = [r for i, r in enumerate(ordered) if i not in held]
    gate_recs = [r for i, r in enumerate(ordered) if i in held]
    return train_recs, gate_recs


def _annotated(ds: Dataset) -> Dataset:
    return Dataset(
        ds.schema,
        tuple(s for s in ds.sentences if s.entities),
        provenance=ds.provenance,
    )


def retrain(records: list[ReviewRecord], base: Model,
            config: TrainConfig | None = None) -> RetrainOutcome:
    """Fine-tune a copy of ``base`` on the verified records behind the gate."""
    verified = [r for r in records if r.status == "verified"]
    if not verified:
        raise RetrainError("no verified records to retrain on")
    cfg = config if config is not None else TrainConfig(epochs=DEFAULT_RETRAIN_EPOCHS)
    train_recs, gate_recs = holdback_records(verified, cfg.seed)
    train_all, quarantined_train = export_verified(train_recs, base.schema)
    gate_all, quarantined_gate = export_verified(gate_recs, base.schema)
    quarantined = len(quarantined_train) + len(quarantined_gate)
    train_ds = _annotated(train_all)
    gate_ds = _annotated(gate_all)
    if len(train_ds) == 0:
        return RetrainOutcome(
            model=None, published=False, base_metric=0.0, new_metric=0.0,
            record_count=len(verified), sentence_count=0, quarantined=quarantined,
            reason="export produced no usable annotated sentences",
        )
    candidate = _clone_model(base)
    result = train(train_ds, cfg, base_model=candidate, model_version=base.version + 1)
    if len(gate_ds) == 0:
        base_metric = new_metric = 0.0  # vacuous gate: nothing to regress against
    else:
        base_metric = gate_metric(evaluate(gate_ds, base))
        new_metric = gate_metric(evaluate(gate_ds, result.model))
    if new_metric < base_metric - REGRESSION_GATE:
        return RetrainOutcome(
            model=None, published=False, base_metric=base_metric, new_metric=new_metric,
            record_count=len(verified), sentence_count=len(train_ds),
            quarantined=quarantined,
            reason=(f"regression gate: macro F1 {new_metric:.4f} fell more than "
                    f"{REGRESSION_GATE} below base {base_metric:.4f}"),
        )
    return RetrainOutcome(
        model=result.model, published=True, base_metric=base_metric, new_metric=new_metric,
        record_count=len(verified), sentence_count=len(train_ds), quarantined=quarantined,
    )
