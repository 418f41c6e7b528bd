"""Contextual entity extraction from topic-filtered segments.

Extraction is extractive question answering: one query per entity category,
run only on segments whose predicted labels make the category relevant.
Span sanitization rejects cuts that split tokens and boundary words that are
neither dictionary words nor document vocabulary.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Protocol

from .labeler import MISCONDUCT_SUBTOPICS, MODERATION_SUBTOPICS
from .segmenter import CocDocument, Segment

log = logging.getLogger(__name__)

_WORD_RE = re.compile(r"\w+", re.UNICODE)


@dataclass(frozen=True)
class EntityCategory:
    id: str
    query_text: str
    topic_filter: frozenset[str]


_MISCONDUCT_FILTER = frozenset(MISCONDUCT_SUBTOPICS)
_MODERATION_FILTER = frozenset(MODERATION_SUBTOPICS)

# Query wording is measurement configuration; adjust per deployment.
DEFAULT_CATEGORIES: tuple[EntityCategory, ...] = (
    EntityCategory("target_of_protection",
                   "Who or what is being protected from the misconduct?",
                   _MISCONDUCT_FILTER),
    EntityCategory("vulnerability_exploit",
                   "What technical or gameplay features and tools are exploited in the misconduct?",
                   _MISCONDUCT_FILTER),
    EntityCategory("inappropriate_information",
                   "What content or information is considered inappropriate to create or share?",
                   _MISCONDUCT_FILTER),
    EntityCategory("moderation_role",
                   "Who is responsible for moderating behavior and enforcing the rules?",
                   _MODERATION_FILTER),
    EntityCategory("moderation_consequence",
                   "What consequences or penalties follow a violation of the rules?",
                   _MODERATION_FILTER),
    EntityCategory("moderation_mechanism",
                   "What tools, processes, or systems are used to detect and moderate violations?",
                   _MODERATION_FILTER),
)

CATEGORY_IDS = tuple(c.id for c in DEFAULT_CATEGORIES)


@dataclass
class EntitySpan:
    category: str
    text: str
    start: int
    end: int
    doc_id: str
    seg_index: int
    app_ids: set[int] = field(default_factory=set)
    seg_labels: set[str] = field(default_factory=set)

    @property
    def seg_ref(self) -> tuple[str, int]:
        return (self.doc_id, self.seg_index)

    def to_record(self) -> dict:
        return {"category": self.category, "text": self.text, "start": self.start,
                "end": self.end, "doc_id": self.doc_id, "seg_index": self.seg_index,
                "app_ids": sorted(self.app_ids), "seg_labels": sorted(self.seg_labels)}

    @classmethod
    def from_record(cls, rec: dict) -> "EntitySpan":
        return cls(rec["category"], rec["text"], int(rec["start"]), int(rec["end"]),
                   rec["doc_id"], int(rec["seg_index"]), set(rec.get("app_ids", [])),
                   set(rec.get("seg_labels", [])))


class QaBackend(Protocol):
    def answer(self, context: str, query: str) -> list[tuple[str, int, int]]:
        """Verbatim (span_text, start, end) answers found in the context."""
        ...


def extract_entities(doc: CocDocument, backend: QaBackend,
                     categories: Iterable[EntityCategory] = DEFAULT_CATEGORIES) -> list[EntitySpan]:
    """Run each category's query over the document's eligible segments.

    A segment is eligible for a category when its predicted labels intersect
    the category's topic filter.  Backend answers that are not verbatim
    substrings at the claimed offsets violate the backend contract and are
    discarded with a log line.
    """
    spans: list[EntitySpan] = []
    seen: set[tuple[str, int, str, int, int]] = set()
    for seg in doc.segments:
        labels = getattr(seg, "labels", None)
        if labels is None:
            continue
        true_labels = labels.true_labels()
        for category in categories:
            if not (true_labels & category.topic_filter):
                continue
            try:
                answers = backend.answer(seg.text, category.query_text)
            except Exception as exc:
                log.warning("QA backend failed on %s[%d] for %s: %s",
                            doc.doc_id[:12], seg.seg_index, category.id, exc)
                continue
            for span_text, start, end in answers:
                if seg.text[start:end] != span_text:
                    log.warning("discarding non-verbatim span %r from backend", span_text)
                    continue
                key = (doc.doc_id, seg.seg_index, category.id, start, end)
                if key in seen:
                    continue
                seen.add(key)
                spans.append(EntitySpan(category.id, span_text, start, end, doc.doc_id,
                                        seg.seg_index, set(doc.app_ids), set(true_labels)))
    return spans


# ---------------------------------------------------------------------------
# Span sanitization.

class WordList:
    """Case-insensitive word membership backed by a plain text list."""

    def __init__(self, words: Iterable[str]):
        self._words = {w.strip().lower() for w in words if w.strip()}

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._words

    def __len__(self) -> int:
        return len(self._words)

    @classmethod
    def from_file(cls, path) -> "WordList":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(fh)

    @classmethod
    def bundled(cls) -> "WordList":
        """Compact built-in list; point to a fuller system dictionary in
        production configs."""
        text = resources.files("cocscope.data").joinpath("english_words.txt").read_text("utf-8")
        return cls(text.splitlines())


def document_vocabulary(doc: CocDocument) -> set[str]:
    vocab: set[str] = set()
    for seg in doc.segments:
        vocab.update(t.lower() for t in _WORD_RE.findall(seg.text))
    return vocab


def _cuts_token(text: str, pos: int) -> bool:
    """True when position pos splits a \\w+ run."""
    if pos <= 0 or pos >= len(text):
        return False
    prev_word = bool(_WORD_RE.fullmatch(text[pos - 1]))
    next_word = bool(_WORD_RE.fullmatch(text[pos]))
    return prev_word and next_word


def span_is_complete(span: EntitySpan, segment_text: str, dictionary: WordList,
                     doc_vocab: set[str]) -> tuple[bool, str]:
    """Apply the completeness predicate; returns (keep, reason).

    Rules: the span's cuts must land on token boundaries, the span must
    contain at least one word token, and alphabetic boundary tokens must be
    known words (dictionary or the document's own vocabulary, so in-game
    jargon survives).
    """
    if _cuts_token(segment_text, span.start) or _cuts_token(segment_text, span.end):
        return False, "boundary"
    tokens = _WORD_RE.findall(span.text)
    if not tokens:
        return False, "no-token"
    for boundary_token in (tokens[0], tokens[-1]):
        if boundary_token.isalpha():
            low = boundary_token.lower()
            if low not in doc_vocab and low not in dictionary:
                return False, "unknown-word"
    return True, ""


def sanitize_spans(spans: list[EntitySpan], dictionary: WordList,
                   docs: Iterable[CocDocument]) -> list[EntitySpan]:
    """Drop incomplete spans; reasons are logged, never raised."""
    segments: dict[tuple[str, int], Segment] = {}
    vocab: dict[str, set[str]] = {}
    for doc in docs:
        vocab[doc.doc_id] = document_vocabulary(doc)
        for seg in doc.segments:
            segments[(doc.doc_id, seg.seg_index)] = seg

    kept: list[EntitySpan] = []
    for span in spans:
        seg = segments.get(span.seg_ref)
        if seg is None:
            log.warning("span %r references unknown segment %s", span.text, span.seg_ref)
            continue
        ok, reason = span_is_complete(span, seg.text, dictionary, vocab[span.doc_id])
        if ok:
            kept.append(span)
        else:
            log.info("dropping span %r (%s)", span.text, reason)
    return kept
