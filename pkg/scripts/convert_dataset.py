#!/usr/bin/env python3
"""One-shot converter: public span-format corpora -> the canonical dataset JSON.

Accepts the JSON shape these corpora are commonly distributed in: a top-level
array (or ``{"dataset": [...]}`` wrapper) of objects with ``tokens`` (or
``words``), ``entities`` [{type|entity_type, start, end}] and ``relations``
[{type|relation_type, head, tail}].  Token indices must already be exclusive
at the end, which matches the usual distribution.

Usage:
    python3 scripts/convert_dataset.py in.json out.json --schema schema.json
    python3 scripts/convert_dataset.py in.json out.json --emit-schema schema.json
"""

import argparse
import json
import sys
from pathlib import Path


def normalize_sentence(obj: dict) -> dict:
    tokens = obj.get("tokens", obj.get("words"))
    if tokens is None:
        raise ValueError("sentence object has neither 'tokens' nor 'words'")
    out = {"tokens": [str(t) for t in tokens], "entities": [], "relations": []}
    for ent in obj.get("entities", ()):
        out["entities"].append({
            "type": str(ent.get("type", ent.get("entity_type"))),
            "start": int(ent["start"]),
            "end": int(ent["end"]),
        })
    for rel in obj.get("relations", ()):
        out["relations"].append({
            "type": str(rel.get("type", rel.get("relation_type"))),
            "head": int(rel["head"]),
            "tail": int(rel["tail"]),
        })
    if obj.get("pos") is not None:
        out["pos"] = [str(p) for p in obj["pos"]]
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("input")
    parser.add_argument("output")
    parser.add_argument("--schema", help="validate against this schema JSON")
    parser.add_argument("--emit-schema", help="write the observed type inventory here")
    args = parser.parse_args(argv)

    raw = json.loads(Path(args.input).read_text(encoding="utf-8"))
    if isinstance(raw, dict):
        raw = raw.get("dataset", raw.get("sentences"))
    if not isinstance(raw, list):
        print("error: input is not a sentence array", file=sys.stderr)
        return 2
    sentences = [normalize_sentence(s) for s in raw]
    Path(args.output).write_text(
        json.dumps(sentences, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")

    entity_types = sorted({e["type"] for s in sentences for e in s["entities"]})
    relation_types = sorted({r["type"] for s in sentences for r in s["relations"]})
    if args.emit_schema:
        Path(args.emit_schema).write_text(json.dumps(
            {"entities": entity_types, "relations": relation_types, "symmetric": []},
            indent=2) + "\n", encoding="utf-8")
    if args.schema:
        schema = json.loads(Path(args.schema).read_text(encoding="utf-8"))
        bad_ents = set(entity_types) - set(schema.get("entities", ()))
        bad_rels = set(relation_types) - set(schema.get("relations", ()))
        if bad_ents or bad_rels:
            print(f"error: types outside schema: {sorted(bad_ents | bad_rels)}",
                  file=sys.stderr)
            return 2
    print(f"converted {len(sentences)} sentences -> {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
