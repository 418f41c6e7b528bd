"""Reference-dataset loading.

The dataset is a labeled-segment corpus in the same line-delimited format
the measurement pipeline writes (doc header lines and segment lines carrying
a 17-bit label field), making any labeled corpus a drop-in training source.
Test documents are held out in full: the split is by document id and must be
disjoint from the training documents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .labels import LABELS, hierarchy_consistent

# Shape of the published reference annotations; used to sanity-check a real
# dataset drop, not enforced on arbitrary corpora.
REFERENCE_SHAPE = {
    "segments": 926, "documents": 67,
    "train_segments": 592, "train_documents": 56,
    "test_segments": 334, "test_documents": 11,
}


@dataclass
class LabeledSegment:
    doc_id: str
    seg_index: int
    text: str
    true_labels: set[str]

    @property
    def ref(self) -> str:
        return f"{self.doc_id}:{self.seg_index}"


@dataclass
class ReferenceDataset:
    train: list[LabeledSegment] = field(default_factory=list)
    test: list[LabeledSegment] = field(default_factory=list)

    @property
    def train_doc_ids(self) -> set[str]:
        return {s.doc_id for s in self.train}

    @property
    def test_doc_ids(self) -> set[str]:
        return {s.doc_id for s in self.test}

    def assert_split_disjoint(self):
        overlap = self.train_doc_ids & self.test_doc_ids
        if overlap:
            raise ValueError(f"test documents leak into training: {sorted(overlap)[:5]}")

    def shape(self) -> dict:
        return {
            "segments": len(self.train) + len(self.test),
            "documents": len(self.train_doc_ids | self.test_doc_ids),
            "train_segments": len(self.train), "train_documents": len(self.train_doc_ids),
            "test_segments": len(self.test), "test_documents": len(self.test_doc_ids),
        }

    def matches_reference_shape(self) -> bool:
        return self.shape() == REFERENCE_SHAPE


def _read_segments(path) -> list[LabeledSegment]:
    segments = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("type") != "segment" or "label_bits" not in rec:
                continue
            bits = rec["label_bits"]
            if len(bits) != len(LABELS):
                raise ValueError(f"segment {rec['doc_id']}:{rec['seg_index']} has "
                                 f"{len(bits)} label bits, expected {len(LABELS)}")
            true_labels = {label for label, bit in zip(LABELS, bits) if bit == "1"}
            segments.append(LabeledSegment(rec["doc_id"], int(rec["seg_index"]),
                                           rec["text"], true_labels))
    return segments


def load_dataset(corpus_path, test_doc_ids: set[str] | None = None,
                 test_path=None) -> ReferenceDataset:
    """Load a labeled corpus and split it by document.

    Either pass one corpus plus the held-out document ids, or two corpus
    files (train and test).  The split is validated for document
    disjointness.
    """
    if test_path is not None:
        dataset = ReferenceDataset(_read_segments(corpus_path), _read_segments(test_path))
    else:
        segments = _read_segments(corpus_path)
        test_doc_ids = test_doc_ids or set()
        dataset = ReferenceDataset(
            [s for s in segments if s.doc_id not in test_doc_ids],
            [s for s in segments if s.doc_id in test_doc_ids])
    dataset.assert_split_disjoint()
    return dataset


def reject_inconsistent(segments: list[LabeledSegment]) -> list[str]:
    """Refs of segments whose annotations violate the label hierarchy."""
    return [s.ref for s in segments if not hierarchy_consistent(s.true_labels)]
