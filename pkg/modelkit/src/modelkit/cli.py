"""Training-side command line: train, export, parity.

The backbone and tokenizer come from local paths (a transformers model
directory and a tokenizers file); identities and hashes are recorded in the
exported metadata.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

log = logging.getLogger("modelkit")


def _load_backbone(path):
    from transformers import T5ForConditionalGeneration

    return T5ForConditionalGeneration.from_pretrained(path)


def _load_tokenizer(path):
    from tokenizers import Tokenizer

    return Tokenizer.from_file(path)


def _train_settings(args) -> dict:
    """Flags, optionally overridden by a --config YAML file."""
    settings = {
        "corpus": args.corpus, "testset": args.testset,
        "test_doc_ids": list(args.test_doc or []),
        "backbone": args.backbone, "tokenizer": args.tokenizer,
        "artifact_out": args.out,
        "training": {"seed": args.seed, "batch_size": args.batch_size,
                     "learning_rate": args.learning_rate,
                     "max_epochs": args.max_epochs,
                     "max_input_len": args.max_input_len,
                     "oversample": not args.no_oversample},
    }
    if args.config:
        import yaml

        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        training = {**settings["training"], **loaded.pop("training", {})}
        settings.update(loaded)
        settings["training"] = training
    missing = [k for k in ("corpus", "backbone", "tokenizer", "artifact_out")
               if not settings.get(k)]
    if missing:
        raise SystemExit(f"missing train settings (flag or config): {missing}")
    return settings


def cmd_train(args) -> int:
    from .dataset import load_dataset
    from .export import save_artifact
    from .pairs import build_nli_pairs, oversample_to_parity
    from .train import TrainingConfig, train

    settings = _train_settings(args)
    config = TrainingConfig(**settings["training"])
    dataset = load_dataset(settings["corpus"], set(settings["test_doc_ids"]),
                           settings.get("testset"))
    segments = dataset.train
    if config.oversample:
        segments = oversample_to_parity(segments, config.seed)
    pairs = build_nli_pairs(segments)
    log.info("training on %d pairs from %d segments", len(pairs), len(segments))

    model = _load_backbone(settings["backbone"])
    tokenizer = _load_tokenizer(settings["tokenizer"])
    artifact = train(model, tokenizer, pairs, config)
    out = save_artifact(artifact, settings["artifact_out"])
    print(f"trained {artifact.epochs_run} epochs "
          f"(final flip rate {artifact.final_flip_rate:.4f}); artifact at {out}")
    return 0


def cmd_export(args) -> int:
    """Export a saved training artifact; hard-fails on any parity divergence
    between the training-side model and the exported graph."""
    from .dataset import load_dataset
    from .export import export_nli, load_artifact
    from .parity import check_parity, training_side_predictions

    artifact = load_artifact(args.artifact)
    segments = []
    if args.testset:
        dataset = load_dataset(args.testset)
        segments = dataset.train + dataset.test
    training_predictions = training_side_predictions(
        artifact.model, artifact.tokenizer, segments, artifact.config,
        artifact.special_ids)
    out = export_nli(artifact, args.out)
    if segments:
        report = check_parity(training_predictions, out, segments)
        if not report.ok:
            for ref, label in report.divergences[:20]:
                print(f"divergent after export: {ref} {label}", file=sys.stderr)
            raise SystemExit(
                f"export parity failed: {len(report.divergences)} divergences")
        print(f"exported to {out}; parity ok over {report.compared} predictions")
    else:
        print(f"exported to {out} (no testset supplied; parity not checked)")
    return 0


def cmd_export_encoder(args) -> int:
    from transformers import AutoModel

    from .export import export_encoder

    model = AutoModel.from_pretrained(args.encoder)
    tokenizer = _load_tokenizer(args.tokenizer)
    out = export_encoder(model, tokenizer, args.out, max_input_len=args.max_input_len,
                         identity=args.encoder)
    print(f"exported encoder to {out}")
    return 0


def cmd_parity(args) -> int:
    """Cross-consumer parity: the artifact must predict identically when
    loaded by this package and by the measurement pipeline's backend.
    Training-vs-export parity runs at export time inside `modelkit train`."""
    from .dataset import load_dataset
    from .labels import LABELS
    from .parity import ExportedClassifier, check_parity, evaluate_exported

    dataset = load_dataset(args.testset)
    segments = dataset.train + dataset.test
    exported = ExportedClassifier(args.model)
    baseline = {(seg.ref, label): exported.predict(seg.text, label)[0]
                for seg in segments for label in LABELS}
    report = check_parity(baseline, args.model, segments, use_pipeline_backend=True)
    print(f"compared {report.compared} predictions; "
          f"{len(report.divergences)} divergences")
    if report.divergences:
        for ref, label in report.divergences[:20]:
            print(f"  divergent: {ref} {label}")
        return 1
    if args.evaluate:
        metrics = evaluate_exported(args.model, segments)
        print(json.dumps(metrics["macro"], indent=1, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modelkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fine-tune adapters, save the artifact")
    p_train.add_argument("--config", help="YAML with train settings (flags override)")
    p_train.add_argument("--corpus", help="labeled-segment JSONL")
    p_train.add_argument("--testset", help="held-out labeled-segment JSONL")
    p_train.add_argument("--test-doc", action="append",
                         help="held-out doc id (repeatable) when using one corpus")
    p_train.add_argument("--backbone", help="backbone model directory")
    p_train.add_argument("--tokenizer", help="tokenizer.json path")
    p_train.add_argument("--out", help="training artifact directory")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--batch-size", type=int, default=8)
    p_train.add_argument("--learning-rate", type=float, default=3e-4)
    p_train.add_argument("--max-epochs", type=int, default=60)
    p_train.add_argument("--max-input-len", type=int, default=256)
    p_train.add_argument("--no-oversample", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_export = sub.add_parser("export", help="export a saved artifact with parity check")
    p_export.add_argument("--artifact", required=True, help="training artifact directory")
    p_export.add_argument("--testset", help="labeled-segment JSONL for the parity check")
    p_export.add_argument("--out", required=True)
    p_export.set_defaults(func=cmd_export)

    p_enc = sub.add_parser("export-encoder", help="export the sentence encoder")
    p_enc.add_argument("--encoder", required=True, help="encoder model directory")
    p_enc.add_argument("--tokenizer", required=True)
    p_enc.add_argument("--max-input-len", type=int, default=256)
    p_enc.add_argument("--out", required=True)
    p_enc.set_defaults(func=cmd_export_encoder)

    p_parity = sub.add_parser("parity",
                              help="cross-consumer check of an exported artifact")
    p_parity.add_argument("--model", required=True)
    p_parity.add_argument("--testset", required=True)
    p_parity.add_argument("--evaluate", action="store_true")
    p_parity.set_defaults(func=cmd_parity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
