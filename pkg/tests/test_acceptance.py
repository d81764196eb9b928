"""Acceptance suite: one test per primary criterion, at the stated tolerances.

Each test prints a ``[acceptance] <criterion>: PASS/FAIL`` line via the
conftest report hook.  Runtime budgets are asserted with wall-clock checks.
"""

import json
import random
import time
from pathlib import Path

import numpy as np

from litmine.cli import main as cli_main
from litmine.corpus import ExtractionSchema, save_dataset, save_schema
from litmine.encoder import EncoderConfig, ToyEncoder
from litmine.extractor import (Model, SentenceSamples, SpanCandidate, decode_relation_scores,
                               enumerate_spans, relation_feature_dim, relation_features,
                               span_feature_dim, span_features)
from litmine.features import default_tagset, encode_pos, pos_tag
from litmine.pipeline import preannotation_from_json, preannotation_to_json, run_pipeline
from litmine.review.retrain import holdback_records, retrain
from litmine.review.store import ReviewStore
from litmine.trainer import (TrainConfig, accuracy_from_counts, cross_validate, evaluate,
                             f1_from_counts, train)

from conftest import block_dump_doc, make_toy_corpus
from test_features import decode_pos
from test_review import build_verified_store, pre_from_sentence

TAGSET = default_tagset()
GOLDEN_PATH = Path(__file__).parent / "data" / "golden_preannotation.json"


class Budget:
    def __init__(self, seconds: float):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.monotonic()
        return self

    def __exit__(self, *exc):
        if exc[0] is None:
            elapsed = time.monotonic() - self.t0
            assert elapsed < self.seconds, \
                f"runtime {elapsed:.1f}s exceeded the {self.seconds:.0f}s budget"


def test_metric_oracles():
    from test_trainer import brute_force_match_counts, evaluation_counts, random_eval_case

    with Budget(1.0):
        assert abs(f1_from_counts(2, 1, 1) - 2.0 / 3.0) < 1e-9
        assert accuracy_from_counts(3, 5, 1, 1) == 0.8
        rng = random.Random(77)
        for _ in range(50):
            sent, pred_entities, pred_relations = random_eval_case(rng)
            oracle = brute_force_match_counts(sent, pred_entities, pred_relations)
            computed = evaluation_counts(sent, pred_entities, pred_relations)
            assert computed == oracle


def test_span_enumeration_exhaustive():
    with Budget(1.0):
        for n in range(31):
            for max_len in range(1, 11):
                brute = [
                    (s, e)
                    for s in range(n)
                    for e in range(s + 1, min(s + max_len, n) + 1)
                ]
                brute.sort(key=lambda se: (se[0], se[1] - se[0]))
                assert [(c.start, c.end) for c in enumerate_spans(n, max_len)] == brute
        assert len(enumerate_spans(12, 10)) == 75


def test_feature_dimension_audit():
    with Budget(1.0):
        assert span_feature_dim(64, 64) == 213
        assert relation_feature_dim(64) == 362
        rng = np.random.default_rng(5)
        table = rng.normal(size=(10, 25))
        for _ in range(3):
            d_tok = int(rng.integers(4, 40))
            d_sent = int(rng.integers(4, 40))
            n = 9
            enc_out = type("E", (), {})()
            enc_out.token_vectors = rng.normal(size=(n, d_tok))
            enc_out.sentence_vector = rng.normal(size=(d_sent,))
            tags = ["NN"] * n
            xs = span_features(SpanCandidate(1, 4), enc_out, tags, table, TAGSET)
            assert xs.shape == (d_tok + 60 + 25 + d_sent,)
            xr = relation_features(SpanCandidate(0, 2), SpanCandidate(5, 7),
                                   enc_out, tags, table, TAGSET)
            assert xr.shape == (3 * d_tok + 170,)


def test_pos_coding_roundtrip():
    with Budget(1.0):
        rng = random.Random(11)
        for _ in range(1000):
            tags = [rng.choice(TAGSET.tags) for _ in range(rng.randint(0, 10))]
            vec = encode_pos(tags, TAGSET)
            assert vec.shape == (60,)
            assert decode_pos(vec, TAGSET) == tags
        assert decode_pos(np.zeros(60), TAGSET) == []


def test_gradient_correctness_joint_loss():
    with Budget(30.0):
        schema = ExtractionSchema(entity_types=("A", "B"), relation_types=("r1", "r2"))
        rng = np.random.default_rng(3)
        cfg = EncoderConfig(d_tok=6, d_sent=5, context_window=1,
                            dropout_rate=0.0, oov_buckets=8)
        encoder = ToyEncoder(cfg, ["alpha", "beta", "gamma", "delta", "eps",
                                   "zeta", "eta", "theta"], rng=rng)
        model = Model.create(schema, TAGSET, encoder, rng)
        for head in ("span_w", "span_b", "rel_w", "rel_b"):
            model.params[head] += rng.normal(0, 0.3, model.params[head].shape)
        s1 = ["alpha", "beta", "gamma", "delta", "eps", "zeta"]
        s2 = ["theta", "eta", "alpha", "qoph", "beta"]
        batch = [
            SentenceSamples(
                tokens=s1, pos_tags=pos_tag(s1),
                span_samples=[(SpanCandidate(0, 2), 1), (SpanCandidate(3, 4), 2),
                              (SpanCandidate(1, 5), 0), (SpanCandidate(5, 6), 0)],
                pair_samples=[
                    (SpanCandidate(0, 2), SpanCandidate(3, 4), np.array([1.0, 0.0])),
                    (SpanCandidate(3, 4), SpanCandidate(0, 2), np.array([0.0, 0.0])),
                ],
            ),
            SentenceSamples(
                tokens=s2, pos_tags=pos_tag(s2),
                span_samples=[(SpanCandidate(0, 3), 2), (SpanCandidate(4, 5), 0)],
                pair_samples=[
                    (SpanCandidate(0, 3), SpanCandidate(4, 5), np.array([0.0, 1.0])),
                ],
            ),
        ]
        _, _, _, grads = model.loss_and_grads(batch, train=False)

        def loss_value():
            total, *_ = model.loss_and_grads(batch, train=False)
            return total

        h = 1e-6
        assert set(grads) == set(model.params)
        for name, tensor in sorted(model.params.items()):
            flat = tensor.ravel()
            analytic = grads[name].ravel()
            count = flat.size
            idx = range(count) if count <= 300 else rng.choice(count, 300, replace=False)
            worst = 0.0
            for i in idx:
                orig = flat[i]
                flat[i] = orig + h
                lp = loss_value()
                flat[i] = orig - h
                lm = loss_value()
                flat[i] = orig
                numeric = (lp - lm) / (2 * h)
                scale = max(abs(analytic[i]), abs(numeric), 1e-4)
                worst = max(worst, abs(analytic[i] - numeric) / scale)
            assert worst < 1e-4, f"tensor {name}: relative error {worst:.2e}"
        assert "width" in grads and np.abs(grads["width"]).max() > 0


def test_learning_capability(toy_corpus, overfit_result):
    with Budget(300.0):
        report = evaluate(toy_corpus, overfit_result.model)
        assert report.ner_micro_f1 >= 0.95, f"entity micro F1 {report.ner_micro_f1:.4f}"
        assert report.re_micro_f1 >= 0.95, f"relation micro F1 {report.re_micro_f1:.4f}"
        losses = overfit_result.epoch_losses
        assert losses[-1] <= 0.1 * losses[0], \
            f"loss fell only {100 * (1 - losses[-1] / losses[0]):.1f}%"


def test_threshold_semantics():
    with Budget(1.0):
        assert decode_relation_scores(np.array([0.35, 0.20]), 0.4) is None
        choice = decode_relation_scores(np.array([0.9, 0.5]), 0.4)
        assert choice == 0
        assert decode_relation_scores(np.array([0.4, 0.4]), 0.4) is None


def test_determinism_checkpoints_and_extraction(tmp_path):
    with Budget(120.0):
        corpus = make_toy_corpus(n=8)
        save_dataset(corpus, tmp_path / "data.json")
        save_schema(corpus.schema, tmp_path / "schema.json")
        config = {"epochs": 20, "seed": 3,
                  "encoder": {"d_tok": 16, "d_sent": 16, "context_window": 0}}
        (tmp_path / "config.json").write_text(json.dumps(config), encoding="utf-8")
        (tmp_path / "doc.json").write_text(json.dumps(block_dump_doc("det")),
                                           encoding="utf-8")
        args = ["--data", str(tmp_path / "data.json"),
                "--schema", str(tmp_path / "schema.json"),
                "--config", str(tmp_path / "config.json")]
        assert cli_main(["train", *args, "--out", str(tmp_path / "a.ckpt")]) == 0
        assert cli_main(["train", *args, "--out", str(tmp_path / "b.ckpt")]) == 0
        a = (tmp_path / "a.ckpt").read_bytes()
        b = (tmp_path / "b.ckpt").read_bytes()
        assert a == b, "checkpoints differ between identical runs"
        assert cli_main(["extract", "--model", str(tmp_path / "a.ckpt"),
                         "--out", str(tmp_path / "p1.json"), str(tmp_path / "doc.json")]) == 0
        assert cli_main(["extract", "--model", str(tmp_path / "a.ckpt"),
                         "--out", str(tmp_path / "p2.json"), str(tmp_path / "doc.json")]) == 0
        assert (tmp_path / "p1.json").read_bytes() == (tmp_path / "p2.json").read_bytes()


def test_end_to_end_golden_file(overfit_model):
    with Budget(10.0):
        pre = run_pipeline(block_dump_doc("doc-golden"), overfit_model)
        text = preannotation_to_json(pre)
        golden = GOLDEN_PATH.read_text(encoding="utf-8")
        assert text == golden, "pipeline output deviates from the frozen golden file"
        obj = json.loads(text)
        assert set(obj) == {"doc_id", "content", "labels", "connections", "model_version"}
        parsed = preannotation_from_json(text)
        for label in parsed.labels:
            assert parsed.content[label.start:label.end] == parsed.surface(label)
        planted = {(parsed.surface(l), l.type) for l in parsed.labels}
        assert {("mordenite", "Material"), ("naoh", "Agent"),
                ("413", "Condition"), ("zsm-5", "Material"),
                ("silicalite", "Material"), ("473", "Condition")} <= planted


def test_tenfold_harness(toy_corpus):
    with Budget(600.0):
        config = TrainConfig(epochs=12, seed=6)
        enc = EncoderConfig(d_tok=16, d_sent=16, context_window=0)
        report = cross_validate(toy_corpus, k=10, config=config, encoder_config=enc)
        assert len(report.fold_reports) == 10
        assert sum(report.fold_sizes) == len(toy_corpus)
        assert all(size == 2 for size in report.fold_sizes)
        obj = report.to_obj()
        for key in ("ner_macro_f1", "re_macro_f1", "ner_micro_f1", "re_micro_f1",
                    "accuracy"):
            folds = obj[key]["folds"]
            assert abs(obj[key]["mean"] - sum(folds) / len(folds)) < 1e-12


def test_review_service_guarantees(tmp_path, toy_corpus, overfit_model, quick_model):
    from fastapi.testclient import TestClient

    from litmine.review.service import ModelRegistry, create_app

    with Budget(120.0):
        # (a) state machine: random API sequences never reach an illegal state
        store = ReviewStore(tmp_path / "sm.log")
        registry = ModelRegistry(tmp_path / "sm-models", quick_model)
        client = TestClient(create_app(store, registry))
        rng = random.Random(99)
        reference = {}
        pres = {}
        for _ in range(150):
            doc_id = f"d{rng.randrange(3)}"
            action = rng.choice(["create", "claim", "verify", "reject"])
            if action == "create":
                pre = pre_from_sentence(doc_id, toy_corpus.sentences[rng.randrange(20)])
                resp = client.post("/api/docs", json=pre.to_obj())
                if doc_id not in reference:
                    assert resp.status_code == 201
                    reference[doc_id] = "pending"
                    pres[doc_id] = pre
                else:
                    assert resp.status_code == 409
                continue
            target = {"claim": "in_review", "verify": "verified", "reject": "rejected"}[action]
            payload = {"status": target}
            if target != "in_review" and doc_id in pres:
                payload["corrected"] = pres[doc_id].to_obj()
            resp = client.put(f"/api/docs/{doc_id}/annotations", json=payload)
            if doc_id not in reference:
                assert resp.status_code == 404
                continue
            old = reference[doc_id]
            legal = (old == "pending" and target == "in_review") or \
                    (old == "in_review" and target in ("verified", "rejected"))
            if legal:
                assert resp.status_code == 200
                reference[doc_id] = target
            elif old == target:
                assert resp.status_code == 200  # idempotent no-op
            else:
                assert resp.status_code in (400, 409)
        for doc_id, status in reference.items():
            assert store.get(doc_id).status == status

        # (b) crash recovery: a truncated log loads every committed record
        crash_store = ReviewStore(tmp_path / "crash.log")
        for i in range(4):
            crash_store.create(pre_from_sentence(f"c{i}", toy_corpus.sentences[i]))
        raw = (tmp_path / "crash.log").read_bytes()
        (tmp_path / "crash.log").write_bytes(raw[:-11])
        recovered = ReviewStore(tmp_path / "crash.log")
        assert sorted(r.doc_id for r in recovered.list()) == ["c0", "c1", "c2"]

        # (c) regression gate blocks a deliberately corrupted verified set
        cfg = TrainConfig(epochs=250, seed=0)
        probe = build_verified_store(tmp_path / "probe", toy_corpus, 5)
        train_recs, _ = holdback_records(probe.list(status="verified"), cfg.seed)
        corrupted = build_verified_store(
            tmp_path / "gate", toy_corpus, 5,
            corrupt_doc_ids={r.doc_id for r in train_recs})
        outcome = retrain(corrupted.list(status="verified"), overfit_model, cfg)
        assert not outcome.published
        assert "regression gate" in outcome.reason
