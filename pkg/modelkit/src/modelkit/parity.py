"""Export parity and test-set evaluation.

Parity compares training-side predictions with the exported graph's
predictions pair by pair; any divergence is a hard failure listing the
divergent segments.  When the measurement pipeline is installed, its
portable backend is exercised as a second consumer of the same artifact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .dataset import LabeledSegment
from .labels import LABELS, nli_input

__all__ = ["ExportedClassifier", "check_parity", "evaluate_exported", "ParityReport"]


class ExportedClassifier:
    """Minimal consumer of an exported NLI directory (torch + tokenizers only)."""

    def __init__(self, model_dir):
        from tokenizers import Tokenizer

        model_dir = Path(model_dir)
        with open(model_dir / "metadata.json", "r", encoding="utf-8") as fh:
            self.metadata = json.load(fh)
        self.tokenizer = Tokenizer.from_file(str(model_dir / "tokenizer.json"))
        self.module = torch.jit.load(str(model_dir / "nli.pt"), map_location="cpu")
        self.module.eval()

    def predict(self, premise: str, label: str) -> tuple[bool, float]:
        meta = self.metadata
        text = nli_input(premise, label)
        ids = self.tokenizer.encode(text).ids[: meta["max_input_len"]]
        mask = [1] * len(ids) + [0] * (meta["max_input_len"] - len(ids))
        ids = ids + [meta["pad_token_id"]] * (meta["max_input_len"] - len(ids))
        with torch.no_grad():
            logits = self.module(torch.tensor([ids]), torch.tensor([mask]),
                                 torch.tensor([[meta["decoder_start_token_id"]]]))
        yes = float(logits[0, -1, meta["yes_token_id"]])
        no = float(logits[0, -1, meta["no_token_id"]])
        p_yes = 1.0 / (1.0 + math.exp(no - yes))
        return p_yes >= 0.5, p_yes


@dataclass
class ParityReport:
    compared: int
    divergences: list[tuple[str, str]] = field(default_factory=list)  # (ref, label)

    @property
    def ok(self) -> bool:
        return not self.divergences


def training_side_predictions(model, tokenizer, segments: list[LabeledSegment],
                              config, special_ids) -> dict[tuple[str, str], bool]:
    from .pairs import NliPair
    from .train import predict_pairs

    pairs = [NliPair(seg.ref, label, nli_input(seg.text, label), "")
             for seg in segments for label in LABELS]
    decisions = predict_pairs(model, tokenizer, pairs, config, special_ids)
    return {(pair.ref, pair.label): decision
            for pair, decision in zip(pairs, decisions)}


def check_parity(training_predictions: dict[tuple[str, str], bool], model_dir,
                 segments: list[LabeledSegment], use_pipeline_backend: bool = False,
                 ) -> ParityReport:
    """Compare training-side decisions with the exported artifact's decisions.

    With ``use_pipeline_backend`` the comparison also runs through the
    measurement pipeline's portable backend (if installed), proving the
    artifact reproduces predictions in the consuming code path.
    """
    exported = ExportedClassifier(model_dir)
    consumers = [lambda premise, label: exported.predict(premise, label)[0]]
    if use_pipeline_backend:
        consumers.append(_pipeline_consumer(model_dir))

    report = ParityReport(compared=0)
    for seg in segments:
        for label in LABELS:
            want = training_predictions[(seg.ref, label)]
            for consumer in consumers:
                report.compared += 1
                if consumer(seg.text, label) != want:
                    report.divergences.append((seg.ref, label))
    return report


def _pipeline_consumer(model_dir):
    from cocscope.backends.portable import PortableEntailmentBackend
    from cocscope.labeler import DEFAULT_SCHEME

    backend = PortableEntailmentBackend(model_dir)

    def consume(premise, label):
        decision, _ = backend.entails(premise, DEFAULT_SCHEME.hypothesis(label))
        return decision

    return consume


def evaluate_exported(model_dir, segments: list[LabeledSegment]) -> dict:
    """Per-label precision/recall/F1 plus macro rows for an exported model."""
    exported = ExportedClassifier(model_dir)
    per_label = {}
    for label in LABELS:
        tp = fp = fn = tn = 0
        for seg in segments:
            predicted, _ = exported.predict(seg.text, label)
            actual = label in seg.true_labels
            if predicted and actual:
                tp += 1
            elif predicted:
                fp += 1
            elif actual:
                fn += 1
            else:
                tn += 1
        precision = tp / (tp + fp) if tp + fp else None
        recall = tp / (tp + fn) if tp + fn else None
        if precision is None or recall is None or precision + recall == 0:
            f1 = None if precision is None or recall is None else 0.0
        else:
            f1 = 2 * precision * recall / (precision + recall)
        per_label[label] = {"precision": precision, "recall": recall, "f1": f1,
                            "support": tp + fn,
                            "accuracy": (tp + tn) / max(1, len(segments))}

    def macro(key):
        values = [m[key] for m in per_label.values() if m[key] is not None]
        return sum(values) / len(values) if values else None

    return {"per_label": per_label,
            "macro": {k: macro(k) for k in ("precision", "recall", "f1", "accuracy")}}
