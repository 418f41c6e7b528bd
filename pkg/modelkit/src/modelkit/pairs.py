"""NLI pair construction and topic oversampling."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .dataset import LabeledSegment, reject_inconsistent
from .labels import (LABELS, NEGATIVE_TARGET, POSITIVE_TARGET, TOPIC_EXPECTED,
                     TOPIC_MISCONDUCT, TOPIC_MODERATION, TOPIC_VALUES, nli_input)

TOP_LEVEL_TOPICS = (TOPIC_MISCONDUCT, TOPIC_MODERATION, TOPIC_EXPECTED, TOPIC_VALUES)


@dataclass(frozen=True)
class NliPair:
    ref: str
    label: str
    input_text: str
    target: str


def build_nli_pairs(segments: list[LabeledSegment]) -> list[NliPair]:
    """One premise/hypothesis/verdict triple per (segment, label).

    Annotations must be hierarchy-consistent; offending segment refs are
    reported in the error.
    """
    bad = reject_inconsistent(segments)
    if bad:
        raise ValueError(f"hierarchy-inconsistent annotations: {bad[:10]}"
                         + ("..." if len(bad) > 10 else ""))
    pairs = []
    for seg in segments:
        for label in LABELS:
            target = POSITIVE_TARGET if label in seg.true_labels else NEGATIVE_TARGET
            pairs.append(NliPair(seg.ref, label, nli_input(seg.text, label), target))
    return pairs


def oversample_to_parity(segments: list[LabeledSegment], seed: int) -> list[LabeledSegment]:
    """Duplicate whole segments until each top-level topic's positive count
    reaches the largest topic's count.

    Only frequencies change; segment text and labels are never modified.
    Deterministic for a fixed seed.
    """
    counts = {topic: sum(1 for s in segments if topic in s.true_labels)
              for topic in TOP_LEVEL_TOPICS}
    target = max(counts.values(), default=0)
    rng = random.Random(seed)
    out = list(segments)
    for topic in TOP_LEVEL_TOPICS:
        pool = [s for s in segments if topic in s.true_labels]
        if not pool:
            continue
        deficit = target - counts[topic]
        for _ in range(deficit):
            out.append(rng.choice(pool))
    return out
