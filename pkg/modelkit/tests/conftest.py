import json
import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from modelkit.labels import LABELS, PARENT, nli_input

# Keyword anchors per label so a tiny model has learnable structure.
LABEL_KEYWORDS = {
    "misconduct": "violation",
    "harassment_and_threat": "harassment",
    "hate_and_discrimination": "slurs",
    "exploiting_and_cheating": "cheating",
    "abuse_of_play": "griefing",
    "circumventing_moderation": "evasion",
    "inappropriate_content": "spam",
    "privacy_breach": "doxxing",
    "impersonation": "impersonation",
    "unauthorized_transaction": "selling",
    "fraud_and_scamming": "phishing",
    "law_violation": "illegal",
    "moderation": "enforcement",
    "moderation_consequence": "suspension",
    "moderation_mechanism": "reporting",
    "expected_conduct": "respectful",
    "value_justification": "values",
}

SUBTOPIC_CYCLE = [
    {"exploiting_and_cheating"},
    {"harassment_and_threat", "moderation_consequence"},
    {"privacy_breach"},
    {"fraud_and_scamming", "moderation_mechanism"},
    {"inappropriate_content"},
    {"unauthorized_transaction", "moderation_consequence"},
    set(),  # expected-conduct-only segment
]


def synthesize_segments(n_docs, segments_per_doc, doc_prefix="doc"):
    """Deterministic labeled segments with keyword-anchored gold labels."""
    records = []
    for d in range(n_docs):
        doc_id = f"{doc_prefix}{d}"
        records.append({"type": "doc", "doc_id": doc_id, "app_ids": [d],
                        "url": f"http://g{d}.test/coc", "flags": [],
                        "segment_count": segments_per_doc})
        for i in range(segments_per_doc):
            subtopics = set(SUBTOPIC_CYCLE[(d * segments_per_doc + i) % len(SUBTOPIC_CYCLE)])
            true = set(subtopics)
            for s in subtopics:
                true.add(PARENT[s])
            if not subtopics:
                true = {"expected_conduct", "value_justification"}
            words = ["players", "must", "avoid"]
            words += sorted(LABEL_KEYWORDS[label] for label in true)
            words += ["in", "this", "game"]
            text = " ".join(words)
            bits = "".join("1" if label in true else "0" for label in LABELS)
            records.append({"type": "segment", "doc_id": doc_id, "seg_index": i,
                            "text": text, "start": 0, "end": len(text),
                            "kind": "paragraph", "language": "en",
                            "label_bits": bits})
    return records


def write_corpus(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


@pytest.fixture(scope="session")
def corpus_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    train_path = root / "train.jsonl"
    test_path = root / "test.jsonl"
    write_corpus(train_path, synthesize_segments(4, 5, "train-doc"))
    write_corpus(test_path, synthesize_segments(2, 4, "test-doc"))
    return {"train": train_path, "test": test_path}


def build_tokenizer(extra_texts=()):
    """Word-level tokenizer covering the synthetic corpus and all hypothesis
    strings; offsets come from the Whitespace pre-tokenizer."""
    from tokenizers import Tokenizer, models, pre_tokenizers

    pre = pre_tokenizers.Whitespace()
    vocab = {"[PAD]": 0, "</s>": 1, "[UNK]": 2, "yes": 3, "no": 4}
    texts = []
    for records in (synthesize_segments(6, 6),):
        texts += [r["text"] for r in records if r.get("type") == "segment"]
    texts += [nli_input("players must avoid", label) for label in LABELS]
    texts += list(extra_texts)
    for text in texts:
        for token, _ in pre.pre_tokenize_str(text):
            vocab.setdefault(token, len(vocab))
    tokenizer = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tokenizer.pre_tokenizer = pre
    return tokenizer


@pytest.fixture(scope="session")
def tokenizer():
    return build_tokenizer()


def build_backbone(vocab_size, seed=0):
    from transformers import T5Config, T5ForConditionalGeneration

    torch.manual_seed(seed)
    config = T5Config(vocab_size=vocab_size, d_model=32, d_ff=64, num_layers=2,
                      num_decoder_layers=2, num_heads=2, d_kv=16,
                      decoder_start_token_id=0, pad_token_id=0, eos_token_id=1)
    return T5ForConditionalGeneration(config)


@pytest.fixture()
def backbone(tokenizer):
    return build_backbone(tokenizer.get_vocab_size())


def build_tiny_encoder(vocab_size, hidden=16, seed=1):
    from transformers import BertConfig, BertModel

    torch.manual_seed(seed)
    config = BertConfig(vocab_size=vocab_size, hidden_size=hidden, num_hidden_layers=2,
                        num_attention_heads=2, intermediate_size=32,
                        max_position_embeddings=128, pad_token_id=0)
    return BertModel(config)
