"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error (bad files, schema
violations, corrupt checkpoints), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus, layout
from .corpus import CorpusError
from .encoder import EncoderConfig, EncoderError
from .extractor import CheckpointError, ExtractorError, load_checkpoint, save_checkpoint
from .pipeline import PipelineError, preannotation_to_json, run_pipeline
from .trainer import TrainConfig, TrainingError, cross_validate, evaluate, train

USAGE_ERROR, DATA_ERROR, RUNTIME_ERROR = 1, 2, 3

DATA_ERRORS = (CorpusError, CheckpointError, PipelineError, EncoderError,
               ExtractorError, layout.LayoutError, json.JSONDecodeError,
               FileNotFoundError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="litmine", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("ingest", help="block dump -> layout report")
    p.add_argument("blocks", help="block-dump JSON file")
    p.add_argument("--lexicon", help="section lexicon JSON")
    p.add_argument("--out", help="write report here instead of stdout")

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True, help="dataset JSON")
    p.add_argument("--schema", required=True, help="schema JSON")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--config", help="config JSON (TrainConfig + encoder fields)")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--log", help="write NDJSON training log here")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")

    p = sub.add_parser("xval", help="k-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("extract", help="block dump -> pre-annotation JSON")
    p.add_argument("blocks", help="block-dump JSON file")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--schema", help="schema JSON the checkpoint must match")
    p.add_argument("--sections", default="method,experiment",
                   help="comma-separated section kinds to extract from")
    p.add_argument("--no-front-matter", action="store_true",
                   help="skip the public-field pass over front-matter blocks")
    p.add_argument("--out")

    p = sub.add_parser("serve", help="start the review service")
    p.add_argument("--store", required=True, help="review store directory")
    p.add_argument("--model", required=True, help="base checkpoint")
    p.add_argument("--ui", help="static UI bundle directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8520)

    p = sub.add_parser("retrain", help="warm-start retrain from verified records")
    p.add_argument("--store", required=True, help="review store directory")
    p.add_argument("--base", required=True, help="base checkpoint")
    p.add_argument("--out-dir", required=True, help="model registry directory")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)

    return parser


def load_train_config(path: str | None, seed: int | None) -> tuple[TrainConfig, EncoderConfig]:
    obj = {}
    if path:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    enc_obj = obj.pop("encoder", {})
    config = TrainConfig.from_obj(obj)
    if seed is not None:
        config = TrainConfig.from_obj({**config.to_obj(), "seed": seed})
    encoder_config = EncoderConfig.from_obj({"kind": "toy", **enc_obj})
    return config, encoder_config


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_ingest(args) -> int:
    doc_id, blocks = layout.load_block_dump(args.blocks)
    doc = layout.build_layout(doc_id, blocks)
    lexicon = None
    if args.lexicon:
        lexicon = json.loads(Path(args.lexicon).read_text(encoding="utf-8"))
    sections = layout.locate_sections(doc, lexicon=lexicon)
    report = {
        "doc_id": doc.doc_id,
        "blocks": [
            {"id": b.id, "page": b.page, "category": b.category} for b in doc.blocks
        ],
        "reading_order": list(doc.reading_order),
        "sections": [
            {"kind": s.kind, "block_ids": list(s.block_ids), "score": s.score}
            for s in sections
        ],
    }
    _emit(json.dumps(report, indent=2) + "\n", args.out)
    return 0


def cmd_train(args) -> int:
    schema = corpus.load_schema(args.schema)
    dataset = corpus.load_dataset(args.data, schema)
    config, encoder_config = load_train_config(args.config, args.seed)
    result = train(dataset, config, encoder_config=encoder_config, log_path=args.log)
    save_checkpoint(result.model, args.out)
    sys.stderr.write(
        f"trained {config.epochs} epochs; "
        f"loss {result.epoch_losses[0]:.4f} -> {result.epoch_losses[-1]:.4f}; "
        f"checkpoint written to {args.out}\n")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    dataset = corpus.load_dataset(args.data, model.schema)
    report = evaluate(dataset, model)
    _emit(json.dumps(report.to_obj(), indent=2) + "\n", args.out)
    return 0


def cmd_xval(args) -> int:
    schema = corpus.load_schema(args.schema)
    dataset = corpus.load_dataset(args.data, schema)
    config, encoder_config = load_train_config(args.config, args.seed)
    report = cross_validate(dataset, k=args.k, config=config, encoder_config=encoder_config)
    _emit(json.dumps(report.to_obj(), indent=2) + "\n", args.out)
    return 0


def cmd_extract(args) -> int:
    model = load_checkpoint(args.model)
    if args.schema:
        requested = corpus.load_schema(args.schema)
        if requested != model.schema:
            raise CorpusError("checkpoint schema does not match --schema")
    obj = json.loads(Path(args.blocks).read_text(encoding="utf-8"))
    kinds = tuple(k.strip() for k in args.sections.split(",") if k.strip())
    pre = run_pipeline(obj, model, section_kinds=kinds,
                       include_front_matter=not args.no_front_matter)
    _emit(preannotation_to_json(pre), args.out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .review.service import ModelRegistry, create_app
    from .review.store import ReviewStore

    model = load_checkpoint(args.model)
    store = ReviewStore(Path(args.store) / "records.log")
    registry = ModelRegistry(Path(args.store) / "models", model)
    app = create_app(store, registry, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_retrain(args) -> int:
    from .review.retrain import DEFAULT_RETRAIN_EPOCHS, retrain
    from .review.service import ModelRegistry
    from .review.store import ReviewStore

    base = load_checkpoint(args.base)
    store = ReviewStore(Path(args.store) / "records.log")
    if args.config:
        config, _ = load_train_config(args.config, args.seed)
    else:
        config, _ = load_train_config(None, args.seed)
        config = TrainConfig.from_obj({**config.to_obj(), "epochs": DEFAULT_RETRAIN_EPOCHS})
    outcome = retrain(store.list(status="verified"), base, config)
    if not outcome.published or outcome.model is None:
        sys.stderr.write(f"retrain failed: {outcome.reason}\n")
        return RUNTIME_ERROR
    registry = ModelRegistry(args.out_dir, base)
    registry.publish(outcome.model, {
        "gate_macro_f1": outcome.new_metric,
        "records": outcome.record_count,
    })
    sys.stderr.write(
        f"published version {outcome.model.version} "
        f"(gate macro F1 {outcome.new_metric:.4f} vs base {outcome.base_metric:.4f})\n")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "xval": cmd_xval,
    "extract": cmd_extract,
    "serve": cmd_serve,
    "retrain": cmd_retrain,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    if args.command is None:
        parser.print_help(sys.stderr)
        return USAGE_ERROR
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return USAGE_ERROR
    except DATA_ERRORS as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return DATA_ERROR
    except TrainingError as exc:
        sys.stderr.write(f"training failed: {exc}\n")
        return RUNTIME_ERROR
    except Exception as exc:  # pragma: no cover - safety net
        sys.stderr.write(f"unexpected failure: {exc}\n")
        return RUNTIME_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
