"""Dataset schemas, loaders, validation, and deterministic fold splitting.

The on-disk dataset format is token-level JSON with exclusive end indices:
a top-level array of ``{"tokens": [...], "pos": [...]?, "entities": [...],
"relations": [...]}`` objects.  Schemas are separate JSON files of the form
``{"entities": [...], "relations": [...], "symmetric": [...]}``.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path


class CorpusError(ValueError):
    """Malformed dataset/schema file or a sentence violating the schema."""


@dataclass(frozen=True)
class ExtractionSchema:
    """Entity and relation type inventory for one extraction domain.

    The implicit "none" entity class is never listed here; classifiers
    reserve index 0 for it internally.
    """

    entity_types: tuple[str, ...]
    relation_types: tuple[str, ...] = ()
    symmetric_relations: frozenset[str] = frozenset()

    def __post_init__(self):
        for group, names in (("entity", self.entity_types), ("relation", self.relation_types)):
            if len(set(names)) != len(names):
                raise CorpusError(f"duplicate {group} type names: {names}")
            if any(not n for n in names):
                raise CorpusError(f"empty {group} type name")
        unknown = set(self.symmetric_relations) - set(self.relation_types)
        if unknown:
            raise CorpusError(f"symmetric relations not in relation_types: {sorted(unknown)}")

    def to_obj(self) -> dict:
        return {
            "entities": list(self.entity_types),
            "relations": list(self.relation_types),
            "symmetric": sorted(self.symmetric_relations),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "ExtractionSchema":
        try:
            return cls(
                entity_types=tuple(obj["entities"]),
                relation_types=tuple(obj.get("relations", ())),
                symmetric_relations=frozenset(obj.get("symmetric", ())),
            )
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"bad schema object: {exc}") from exc


@dataclass(frozen=True)
class EntitySpan:
    start: int  # token index, inclusive
    end: int    # token index, exclusive
    type: str

    @property
    def width(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class RelationTriple:
    head: int  # index into the sentence's entity list
    tail: int
    type: str


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    entities: tuple[EntitySpan, ...] = ()
    relations: tuple[RelationTriple, ...] = ()
    pos_tags: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Dataset:
    schema: ExtractionSchema
    sentences: tuple[Sentence, ...]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.sentences)


def validate_sentence(sent: Sentence, schema: ExtractionSchema, index: int = -1) -> None:
    """Check every span/relation invariant; raises CorpusError naming the sentence."""
    where = f"sentence {index}" if index >= 0 else "sentence"
    n = len(sent.tokens)
    if sent.pos_tags is not None and len(sent.pos_tags) != n:
        raise CorpusError(f"{where}: pos tag count {len(sent.pos_tags)} != token count {n}")
    for ent in sent.entities:
        if not (0 <= ent.start < ent.end <= n):
            raise CorpusError(f"{where}: entity span ({ent.start}, {ent.end}) out of range for {n} tokens")
        if ent.type not in schema.entity_types:
            raise CorpusError(f"{where}: unknown entity type {ent.type!r}")
    for rel in sent.relations:
        if rel.type not in schema.relation_types:
            raise CorpusError(f"{where}: unknown relation type {rel.type!r}")
        for which, idx in (("head", rel.head), ("tail", rel.tail)):
            if not (0 <= idx < len(sent.entities)):
                raise CorpusError(f"{where}: relation {which} index {idx} out of range")
        if rel.head == rel.tail:
            raise CorpusError(f"{where}: relation head == tail ({rel.head})")


def sentence_from_obj(obj: dict, schema: ExtractionSchema, index: int = -1) -> Sentence:
    where = f"sentence {index}" if index >= 0 else "sentence"
    try:
        tokens = tuple(str(t) for t in obj["tokens"])
        entities = tuple(
            EntitySpan(start=int(e["start"]), end=int(e["end"]), type=str(e["type"]))
            for e in obj.get("entities", ())
        )
        relations = tuple(
            RelationTriple(head=int(r["head"]), tail=int(r["tail"]), type=str(r["type"]))
            for r in obj.get("relations", ())
        )
        pos = obj.get("pos")
        pos_tags = tuple(str(p) for p in pos) if pos is not None else None
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"{where}: malformed object: {exc}") from exc
    sent = Sentence(tokens=tokens, entities=entities, relations=relations, pos_tags=pos_tags)
    validate_sentence(sent, schema, index)
    return sent


def sentence_to_obj(sent: Sentence) -> dict:
    obj: dict = {
        "tokens": list(sent.tokens),
        "entities": [{"type": e.type, "start": e.start, "end": e.end} for e in sent.entities],
        "relations": [{"type": r.type, "head": r.head, "tail": r.tail} for r in sent.relations],
    }
    if sent.pos_tags is not None:
        obj["pos"] = list(sent.pos_tags)
    return obj


def dataset_from_obj(obj, schema: ExtractionSchema, provenance: str = "") -> Dataset:
    if not isinstance(obj, list):
        raise CorpusError("dataset JSON must be a top-level array of sentences")
    sentences = tuple(sentence_from_obj(item, schema, i) for i, item in enumerate(obj))
    return Dataset(schema=schema, sentences=sentences, provenance=provenance)


def load_dataset(path: str | Path, schema: ExtractionSchema) -> Dataset:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: invalid JSON: {exc}") from exc
    return dataset_from_obj(obj, schema, provenance=str(path))


def save_dataset(ds: Dataset, path: str | Path) -> None:
    obj = [sentence_to_obj(s) for s in ds.sentences]
    Path(path).write_text(json.dumps(obj, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def load_schema(path: str | Path) -> ExtractionSchema:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: invalid JSON: {exc}") from exc
    return ExtractionSchema.from_obj(obj)


def save_schema(schema: ExtractionSchema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_obj(), indent=2) + "\n", encoding="utf-8")


def split_kfold(ds: Dataset, k: int, seed: int) -> list[tuple[Dataset, Dataset]]:
    """Split into k disjoint (train, test) partitions.

    Test folds partition the dataset; fold sizes differ by at most one.
    The split is a pure function of (dataset order, k, seed).
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(ds) < k:
        raise ValueError(f"k={k} larger than dataset of {len(ds)} sentences")
    indices = list(range(len(ds)))
    random.Random(seed).shuffle(indices)
    folds = []
    for i in range(k):
        test_idx = set(indices[i::k])
        test = tuple(ds.sentences[j] for j in sorted(test_idx))
        train = tuple(ds.sentences[j] for j in range(len(ds)) if j not in test_idx)
        folds.append(
            (
                Dataset(ds.schema, train, provenance=f"{ds.provenance}#fold{i}-train"),
                Dataset(ds.schema, test, provenance=f"{ds.provenance}#fold{i}-test"),
            )
        )
    return folds


# Bibliographic fields readable off the front matter of a paper.
MOLECULAR_SIEVE_PUBLIC_FIELDS = (
    "Title",
    "Author",
    "Unit",
    "DOI",
    "Published Time",
    "Zeolite",
    "Magazine",
)

# Synthesis-condition fields that live in the method/experiment sections.
MOLECULAR_SIEVE_PRIVATE_FIELDS = (
    "Alkali Source",
    "Cations",
    "Fluorine Source",
    "Crystallization Conditions temperature",
    "Crystallization Conditions time",
    "Crystallization Conditions rotational speed",
    "Germanium Source",
    "Gel Composition",
    "Phosphorus Source",
    "Silicon Source",
    "Template Agent",
    "Aluminum Source",
    "Molecular Sieve Structure Information",
)


def molecular_sieve_schema() -> ExtractionSchema:
    """The 20-field molecular-sieve synthesis schema (7 public + 13 private)."""
    return ExtractionSchema(
        entity_types=MOLECULAR_SIEVE_PUBLIC_FIELDS + MOLECULAR_SIEVE_PRIVATE_FIELDS,
    )


def conll04_schema() -> ExtractionSchema:
    return ExtractionSchema(
        entity_types=("Loc", "Org", "Peop", "Other"),
        relation_types=("Work_For", "Kill", "OrgBased_In", "Live_In", "Located_In"),
    )


def ade_schema() -> ExtractionSchema:
    return ExtractionSchema(
        entity_types=("Adverse-Effect", "Drug"),
        relation_types=("Adverse-Effect",),
    )
