"""Shared fixtures: synthetic corpus, overfitted model, and block-dump documents."""

from __future__ import annotations

import random

import pytest


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance.py" not in str(report.nodeid):
        return
    name = report.nodeid.split("::")[-1]
    verdict = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {name}: {verdict}")

from litmine.corpus import Dataset, EntitySpan, ExtractionSchema, RelationTriple, Sentence
from litmine.encoder import EncoderConfig
from litmine.trainer import TrainConfig, train

MATERIALS = ["zsm-5", "beta", "mordenite", "sapo-34", "zeolite-y", "silicalite"]
AGENTS = ["tpaoh", "teaoh", "naoh", "koh", "hf", "tmaoh"]
CONDITIONS = ["443", "413", "453", "393", "423", "473"]

TOY_SCHEMA = ExtractionSchema(
    entity_types=("Material", "Agent", "Condition"),
    relation_types=("uses", "formed_at"),
)

# Encoder used wherever tests need a trainable model; window 0 keeps token
# identity crisp, which the small-step optimizer relies on.
TOY_ENCODER = EncoderConfig(d_tok=96, d_sent=96, context_window=0)


def make_toy_sentence(i: int, rng: random.Random) -> Sentence:
    m = rng.choice(MATERIALS)
    a = rng.choice(AGENTS)
    c = rng.choice(CONDITIONS)
    kind = i % 4
    if kind == 0:
        toks = [m, "is", "synthesized", "with", a, "."]
        ents = [EntitySpan(0, 1, "Material"), EntitySpan(4, 5, "Agent")]
        rels = [RelationTriple(0, 1, "uses")]
    elif kind == 1:
        toks = [m, "crystallizes", "at", c, "K", "."]
        ents = [EntitySpan(0, 1, "Material"), EntitySpan(3, 4, "Condition")]
        rels = [RelationTriple(0, 1, "formed_at")]
    elif kind == 2:
        toks = ["the", "gel", "of", m, "contains", a, "and", "forms", "at", c, "K", "."]
        ents = [EntitySpan(3, 4, "Material"), EntitySpan(5, 6, "Agent"),
                EntitySpan(9, 10, "Condition")]
        rels = [RelationTriple(0, 1, "uses"), RelationTriple(0, 2, "formed_at")]
    else:
        toks = ["pure", m, "was", "obtained", "using", a, "at", c, "K", "."]
        ents = [EntitySpan(1, 2, "Material"), EntitySpan(5, 6, "Agent"),
                EntitySpan(7, 8, "Condition")]
        rels = [RelationTriple(0, 1, "uses"), RelationTriple(0, 2, "formed_at")]
    return Sentence(tokens=tuple(toks), entities=tuple(ents), relations=tuple(rels))


def make_toy_corpus(n: int = 20, seed: int = 13) -> Dataset:
    rng = random.Random(seed)
    sentences = tuple(make_toy_sentence(i, rng) for i in range(n))
    return Dataset(schema=TOY_SCHEMA, sentences=sentences, provenance=f"toy-{n}-{seed}")


@pytest.fixture(scope="session")
def toy_corpus() -> Dataset:
    return make_toy_corpus()


@pytest.fixture(scope="session")
def overfit_result(toy_corpus):
    """Default TrainConfig extended to 200 epochs, as the acceptance gate requires."""
    config = TrainConfig(epochs=200, seed=7)
    return train(toy_corpus, config, encoder_config=TOY_ENCODER)


@pytest.fixture(scope="session")
def overfit_model(overfit_result):
    return overfit_result.model


@pytest.fixture(scope="session")
def quick_model(toy_corpus):
    """Small, fast model for API/pipeline plumbing tests."""
    config = TrainConfig(epochs=3, seed=5)
    small = EncoderConfig(d_tok=16, d_sent=16, context_window=0)
    return train(toy_corpus, config, encoder_config=small).model


def block_dump_doc(doc_id: str = "doc-fixture") -> dict:
    """Two-page article with planted toy-corpus sentences in the experiment part."""
    return {
        "doc_id": doc_id,
        "pages": [
            {
                "page": 0,
                "blocks": [
                    {"id": "b-title", "bbox": [60, 40, 540, 80],
                     "text": "Hydrothermal growth of porous frameworks",
                     "font_size": 20.0},
                    {"id": "b-auth", "bbox": [60, 90, 540, 110],
                     "text": "A. Researcher and B. Chemist", "font_size": 10.0},
                    {"id": "b-abs", "bbox": [60, 130, 540, 220],
                     "text": "Abstract. We survey growth recipes and report new results.",
                     "font_size": 9.0},
                    {"id": "b-h-intro", "bbox": [60, 240, 300, 260],
                     "text": "1. Introduction", "font_size": 12.0},
                    {"id": "b-intro", "bbox": [60, 270, 540, 380],
                     "text": "Porous frameworks matter for catalysis. "
                             "This report describes growth conditions.",
                     "font_size": 10.0},
                ],
            },
            {
                "page": 1,
                "blocks": [
                    {"id": "b-h-exp", "bbox": [60, 40, 400, 60],
                     "text": "2. Experimental Section", "font_size": 12.0},
                    # exact training sentences, one per block, so the
                    # overfitted model replays its gold annotations
                    {"id": "b-exp-1", "bbox": [60, 70, 540, 120],
                     "text": "pure mordenite was obtained using naoh at 413 K .",
                     "font_size": 10.0},
                    {"id": "b-exp-2", "bbox": [60, 130, 540, 180],
                     "text": "zsm-5 is synthesized with naoh .",
                     "font_size": 10.0},
                    {"id": "b-exp-3", "bbox": [60, 190, 540, 240],
                     "text": "silicalite crystallizes at 473 K .",
                     "font_size": 10.0},
                    {"id": "b-h-con", "bbox": [60, 260, 400, 280],
                     "text": "3. Conclusion", "font_size": 12.0},
                    {"id": "b-con", "bbox": [60, 290, 540, 340],
                     "text": "We reported growth recipes for several frameworks.",
                     "font_size": 10.0},
                ],
            },
        ],
    }
