"""Dataset loading, validation, fold splitting, and the shipped schemas."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from litmine.corpus import (CorpusError, EntitySpan, ExtractionSchema, conll04_schema,
                            load_dataset, molecular_sieve_schema, save_dataset, split_kfold)

from conftest import make_toy_corpus


def write_dataset_file(tmp_path, obj, name="data.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


SIMPLE_OBJ = [
    {
        "tokens": ["John", "lives", "in", "Rome", "."],
        "entities": [
            {"type": "Peop", "start": 0, "end": 1},
            {"type": "Loc", "start": 3, "end": 4},
        ],
        "relations": [{"type": "Live_In", "head": 0, "tail": 1}],
    },
    {"tokens": ["Nothing", "here", "."], "entities": [], "relations": []},
    {
        "tokens": ["Acme", "hired", "Jo", "."],
        "pos": ["NNP", "VBD", "NNP", "."],
        "entities": [
            {"type": "Org", "start": 0, "end": 1},
            {"type": "Peop", "start": 2, "end": 3},
        ],
        "relations": [{"type": "Work_For", "head": 1, "tail": 0}],
    },
]


class TestLoadDataset:
    def test_counts_match_file(self, tmp_path):
        path = write_dataset_file(tmp_path, SIMPLE_OBJ)
        ds = load_dataset(path, conll04_schema())
        assert len(ds) == 3
        assert ds.sentences[0].entities[0] == EntitySpan(0, 1, "Peop")
        assert ds.sentences[2].pos_tags == ("NNP", "VBD", "NNP", ".")

    def test_empty_sentence_list(self, tmp_path):
        path = write_dataset_file(tmp_path, [])
        ds = load_dataset(path, conll04_schema())
        assert len(ds) == 0

    def test_unknown_entity_type_names_sentence(self, tmp_path):
        bad = json.loads(json.dumps(SIMPLE_OBJ))
        bad[2]["entities"][0]["type"] = "Planet"
        path = write_dataset_file(tmp_path, bad)
        with pytest.raises(CorpusError, match="sentence 2"):
            load_dataset(path, conll04_schema())

    def test_bad_index_names_sentence(self, tmp_path):
        bad = json.loads(json.dumps(SIMPLE_OBJ))
        bad[0]["entities"][1]["end"] = 9
        path = write_dataset_file(tmp_path, bad)
        with pytest.raises(CorpusError, match="sentence 0"):
            load_dataset(path, conll04_schema())

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("[{", encoding="utf-8")
        with pytest.raises(CorpusError, match="invalid JSON"):
            load_dataset(path, conll04_schema())

    def test_relation_self_loop_rejected(self, tmp_path):
        bad = json.loads(json.dumps(SIMPLE_OBJ))
        bad[0]["relations"][0]["tail"] = 0
        path = write_dataset_file(tmp_path, bad)
        with pytest.raises(CorpusError, match="head == tail"):
            load_dataset(path, conll04_schema())

    def test_round_trip(self, tmp_path):
        path = write_dataset_file(tmp_path, SIMPLE_OBJ)
        ds = load_dataset(path, conll04_schema())
        out = tmp_path / "again.json"
        save_dataset(ds, out)
        again = load_dataset(out, conll04_schema())
        assert again.sentences == ds.sentences


class TestSchema:
    def test_duplicate_names_rejected(self):
        with pytest.raises(CorpusError):
            ExtractionSchema(entity_types=("A", "A"))

    def test_symmetric_must_be_subset(self):
        with pytest.raises(CorpusError):
            ExtractionSchema(entity_types=("A",), relation_types=("r",),
                             symmetric_relations=frozenset({"s"}))

    def test_molecular_sieve_fields(self):
        schema = molecular_sieve_schema()
        assert "Template Agent" in schema.entity_types
        assert len(schema.entity_types) == 20
        assert "Kill" not in schema.entity_types
        assert "Crystallization Conditions rotational speed" in schema.entity_types

    def test_conll04_shape(self):
        schema = conll04_schema()
        assert len(schema.entity_types) == 4
        assert len(schema.relation_types) == 5


class TestSplitKfold:
    def test_leave_one_out(self):
        ds = make_toy_corpus(n=10)
        folds = split_kfold(ds, 10, seed=0)
        assert len(folds) == 10
        assert all(len(test) == 1 for _, test in folds)

    def test_deterministic(self):
        ds = make_toy_corpus(n=20)
        a = split_kfold(ds, 10, seed=7)
        b = split_kfold(ds, 10, seed=7)
        for (tr_a, te_a), (tr_b, te_b) in zip(a, b):
            assert te_a.sentences == te_b.sentences
            assert tr_a.sentences == tr_b.sentences

    def test_sizes_25_by_10(self):
        ds = make_toy_corpus(n=25)
        folds = split_kfold(ds, 10, seed=3)
        sizes = [len(test) for _, test in folds]
        assert set(sizes) <= {2, 3}
        assert sum(sizes) == 25

    def test_k_larger_than_dataset(self):
        ds = make_toy_corpus(n=5)
        with pytest.raises(ValueError):
            split_kfold(ds, 6, seed=0)

    @given(n=st.integers(2, 40), k=st.integers(2, 10), seed=st.integers(0, 2**30))
    @settings(max_examples=60, deadline=None)
    def test_partition_property(self, n, k, seed):
        if n < k:
            return
        ds = make_toy_corpus(n=n)
        folds = split_kfold(ds, k, seed)
        all_test = [s for _, test in folds for s in test.sentences]
        assert len(all_test) == n
        sizes = [len(test) for _, test in folds]
        assert max(sizes) - min(sizes) <= 1
        for train, test in folds:
            assert len(train) + len(test) == n
            # disjointness via identity of sentence objects
            test_ids = {id(s) for s in test.sentences}
            assert all(id(s) not in test_ids for s in train.sentences)
