"""Safety-topic labeling over segments via entailment-style inference.

Classification asks one entailment query per label ("The text is about
<label>") and records the raw decisions; hierarchy enforcement then promotes
parents of positive subtopics.  Document sanitization drops documents that
never hit a specific subtopic (generic landing pages, soft 404s).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Protocol

from .errors import BackendError
from .segmenter import CocDocument, Segment

TOPIC_MISCONDUCT = "misconduct"
TOPIC_MODERATION = "moderation"
TOPIC_EXPECTED = "expected_conduct"
TOPIC_VALUES = "value_justification"

MISCONDUCT_SUBTOPICS = (
    "harassment_and_threat",
    "hate_and_discrimination",
    "exploiting_and_cheating",
    "abuse_of_play",
    "circumventing_moderation",
    "inappropriate_content",
    "privacy_breach",
    "impersonation",
    "unauthorized_transaction",
    "fraud_and_scamming",
    "law_violation",
)
MODERATION_SUBTOPICS = ("moderation_consequence", "moderation_mechanism")

_DISPLAY_NAMES = {
    TOPIC_MISCONDUCT: "Misconduct",
    "harassment_and_threat": "Harassment and threat",
    "hate_and_discrimination": "Hate and discrimination",
    "exploiting_and_cheating": "Exploiting and cheating",
    "abuse_of_play": "Abuse of play and antagonistic play",
    "circumventing_moderation": "Circumventing and abusing moderation mechanism",
    "inappropriate_content": "Inappropriate content creation and sharing",
    "privacy_breach": "Privacy breach",
    "impersonation": "Impersonation and identity theft",
    "unauthorized_transaction": "Unauthorized transaction and commercialization",
    "fraud_and_scamming": "Fraud and scamming",
    "law_violation": "Law violation",
    TOPIC_MODERATION: "Moderation",
    "moderation_consequence": "Moderation consequence",
    "moderation_mechanism": "Moderation mechanism",
    TOPIC_EXPECTED: "Expected conduct",
    TOPIC_VALUES: "Value justification",
}

_DEFINITIONS = {
    TOPIC_MISCONDUCT: "Behavior that violates the rules or norms of the game, its community, or its provider.",
    "harassment_and_threat": "Unwanted conduct that offends, intimidates, coerces, or persistently targets another player or group.",
    "hate_and_discrimination": "Abuse or exclusion aimed at a person's actual or perceived identity, such as race, religion, gender, or orientation.",
    "exploiting_and_cheating": "Gaining unfair advantage by manipulating the game system or using third-party tools.",
    "abuse_of_play": "Deliberate disruption of normal play, such as griefing or trolling, that spoils other players' enjoyment.",
    "circumventing_moderation": "Evading imposed penalties or misusing reporting and enforcement tools, including ban evasion via new accounts.",
    "inappropriate_content": "Creating or sharing content that is unwanted or unsuitable, such as hateful material or spam.",
    "privacy_breach": "Collecting, using, or exposing another person's personal or sensitive information without permission.",
    "impersonation": "Deceptively posing as another player, staff member, public figure, or the service itself.",
    "unauthorized_transaction": "Buying, selling, trading, or transferring accounts, currency, or items without the provider's authorization.",
    "fraud_and_scamming": "Deceiving others to unfairly obtain assets, information, or advantage, including phishing.",
    "law_violation": "Conduct that breaks applicable local, national, or international laws or regulations.",
    TOPIC_MODERATION: "How violations are reported, reviewed, and penalized.",
    "moderation_consequence": "Penalties applied when rules are broken, such as warnings, suspensions, or bans.",
    "moderation_mechanism": "Tools, processes, and systems used to detect, review, and enforce rule violations.",
    TOPIC_EXPECTED: "Behavior players are encouraged to adopt to stay within community norms.",
    TOPIC_VALUES: "The values or core beliefs a community cites to justify its rules.",
}

HYPOTHESIS_TEMPLATE = "The text is about {label}"


@dataclass(frozen=True)
class LabelScheme:
    """The 17-label scheme: 4 topics, 11 misconduct and 2 moderation subtopics."""

    topics: tuple[str, ...] = (TOPIC_MISCONDUCT, TOPIC_MODERATION, TOPIC_EXPECTED, TOPIC_VALUES)
    subtopics: tuple[str, ...] = MISCONDUCT_SUBTOPICS + MODERATION_SUBTOPICS

    def __post_init__(self):
        assert len(self.labels) == 17

    @property
    def labels(self) -> tuple[str, ...]:
        """Canonical label order used by every serialized bit field."""
        return ((TOPIC_MISCONDUCT,) + MISCONDUCT_SUBTOPICS
                + (TOPIC_MODERATION,) + MODERATION_SUBTOPICS
                + (TOPIC_EXPECTED, TOPIC_VALUES))

    @property
    def parent(self) -> dict[str, str]:
        mapping = {s: TOPIC_MISCONDUCT for s in MISCONDUCT_SUBTOPICS}
        mapping.update({s: TOPIC_MODERATION for s in MODERATION_SUBTOPICS})
        return mapping

    def display_name(self, label: str) -> str:
        return _DISPLAY_NAMES[label]

    def definition(self, label: str) -> str:
        return _DEFINITIONS[label]

    def hypothesis(self, label: str) -> str:
        return HYPOTHESIS_TEMPLATE.format(label=self.display_name(label))


DEFAULT_SCHEME = LabelScheme()


@dataclass
class LabelVector:
    decisions: dict[str, bool]
    confidences: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, label: str) -> bool:
        return self.decisions[label]

    def true_labels(self) -> set[str]:
        return {label for label, on in self.decisions.items() if on}

    def true_subtopics(self, scheme: LabelScheme = DEFAULT_SCHEME) -> set[str]:
        return self.true_labels() & set(scheme.subtopics)

    def to_bits(self, scheme: LabelScheme = DEFAULT_SCHEME) -> str:
        return "".join("1" if self.decisions.get(label, False) else "0"
                       for label in scheme.labels)

    @classmethod
    def from_bits(cls, bits: str, scheme: LabelScheme = DEFAULT_SCHEME,
                  confidences=None) -> "LabelVector":
        decisions = {label: bit == "1" for label, bit in zip(scheme.labels, bits)}
        conf = dict(zip(scheme.labels, confidences)) if confidences else {}
        return cls(decisions, conf)


class EntailmentBackend(Protocol):
    def entails(self, premise: str, hypothesis: str) -> tuple[bool, float]:
        """Whether the premise entails the hypothesis, with confidence in [0, 1]."""
        ...


def classify_segment(seg: Segment, scheme: LabelScheme, backend: EntailmentBackend,
                     thresholds: dict[str, float] | None = None) -> LabelVector:
    """One entailment query per label; returns raw, pre-enforcement decisions.

    With per-label thresholds supplied, the backend confidence is re-cut at
    the configured threshold instead of trusting the backend decision.
    """
    decisions: dict[str, bool] = {}
    confidences: dict[str, float] = {}
    for label in scheme.labels:
        decision, confidence = backend.entails(seg.text, scheme.hypothesis(label))
        if thresholds is not None and label in thresholds:
            decision = confidence >= thresholds[label]
        decisions[label] = bool(decision)
        confidences[label] = float(confidence)
    return LabelVector(decisions, confidences)


def enforce_hierarchy(vector: LabelVector, scheme: LabelScheme = DEFAULT_SCHEME) -> LabelVector:
    """Promote parents of positive subtopics.  Monotone: never unsets a label."""
    decisions = dict(vector.decisions)
    for subtopic, parent in scheme.parent.items():
        if decisions.get(subtopic, False):
            decisions[parent] = True
    return LabelVector(decisions, dict(vector.confidences))


def hierarchy_violations(vectors: Iterable[LabelVector],
                         scheme: LabelScheme = DEFAULT_SCHEME) -> int:
    """Count (vector, subtopic) pairs where a subtopic is set without its parent."""
    count = 0
    for vector in vectors:
        for subtopic, parent in scheme.parent.items():
            if vector.decisions.get(subtopic, False) and not vector.decisions.get(parent, False):
                count += 1
    return count


def classify_document(doc: CocDocument, scheme: LabelScheme, backend: EntailmentBackend,
                      thresholds=None) -> list[int]:
    """Classify a document's English segments in place.

    Each classified segment gets ``seg.raw_labels`` (pre-enforcement) and
    ``seg.labels`` (post-enforcement).  Returns the seg_indexes the backend
    failed on; those stay unclassified for a retry pass.
    """
    failed: list[int] = []
    for seg in doc.segments:
        if seg.language != "en":
            seg.labels = None
            seg.raw_labels = None
            continue
        try:
            raw = classify_segment(seg, scheme, backend, thresholds)
        except BackendError:
            seg.labels = None
            seg.raw_labels = None
            failed.append(seg.seg_index)
            continue
        seg.raw_labels = raw
        seg.labels = enforce_hierarchy(raw, scheme)
    return failed


def sanitize_documents(docs: list[CocDocument],
                       scheme: LabelScheme = DEFAULT_SCHEME) -> list[CocDocument]:
    """Keep documents with at least one segment positive for a specific subtopic.

    Runs after hierarchy enforcement, so topic-only documents (landing pages,
    soft 404s) are dropped.
    """
    kept = []
    for doc in docs:
        has_subtopic = any(
            getattr(seg, "labels", None) is not None and seg.labels.true_subtopics(scheme)
            for seg in doc.segments
        )
        if has_subtopic:
            kept.append(doc)
    return kept


# ---------------------------------------------------------------------------
# Evaluation harness: per-label precision/recall/F1/accuracy plus macro rows.

@dataclass
class LabelMetrics:
    precision: float | None
    recall: float | None
    f1: float | None
    accuracy: float
    support: int


@dataclass
class EvaluationReport:
    per_label: dict[str, LabelMetrics]
    macro_precision: float | None
    macro_recall: float | None
    macro_f1: float | None
    macro_accuracy: float

    def rows(self, scheme: LabelScheme = DEFAULT_SCHEME):
        for label in scheme.labels:
            m = self.per_label[label]
            yield (scheme.display_name(label), m.precision, m.recall, m.f1,
                   m.accuracy, m.support)


def _safe_div(num: float, den: float) -> float | None:
    return num / den if den else None


def compute_metrics(gold: list[LabelVector], predicted: list[LabelVector],
                    scheme: LabelScheme = DEFAULT_SCHEME) -> EvaluationReport:
    if len(gold) != len(predicted):
        raise ValueError("gold and predicted lengths differ")
    per_label: dict[str, LabelMetrics] = {}
    for label in scheme.labels:
        tp = fp = fn = tn = 0
        for g, p in zip(gold, predicted):
            g_on = g.decisions.get(label, False)
            p_on = p.decisions.get(label, False)
            if g_on and p_on:
                tp += 1
            elif not g_on and p_on:
                fp += 1
            elif g_on and not p_on:
                fn += 1
            else:
                tn += 1
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        if precision is None or recall is None:
            f1 = None
        else:
            f1 = _safe_div(2 * precision * recall, precision + recall)
            f1 = 0.0 if f1 is None else f1
        accuracy = (tp + tn) / len(gold) if gold else 0.0
        per_label[label] = LabelMetrics(precision, recall, f1, accuracy, tp + fn)

    def macro(attr):
        values = [getattr(m, attr) for m in per_label.values() if getattr(m, attr) is not None]
        return sum(values) / len(values) if values else None

    return EvaluationReport(per_label, macro("precision"), macro("recall"), macro("f1"),
                            macro("accuracy") or 0.0)


def evaluate(testset: list[tuple[str, LabelVector]], backend: EntailmentBackend,
             scheme: LabelScheme = DEFAULT_SCHEME, thresholds=None) -> EvaluationReport:
    """Classify test premises with the pipeline decision rule (raw + hierarchy
    enforcement) and score against gold labels."""
    gold = []
    predicted = []
    for index, (premise, gold_vector) in enumerate(testset):
        seg = Segment(index, premise, 0, max(1, len(premise)), "paragraph", "en")
        raw = classify_segment(seg, scheme, backend, thresholds)
        predicted.append(enforce_hierarchy(raw, scheme))
        gold.append(gold_vector)
    return compute_metrics(gold, predicted, scheme)


# ---------------------------------------------------------------------------
# Labeled-corpus persistence: the segment line grows a 17-bit label field
# (canonical order) plus raw bits and per-label confidences.

def labeled_records(docs: list[CocDocument], scheme: LabelScheme = DEFAULT_SCHEME):
    for doc in docs:
        yield doc.header_record()
        for seg in doc.segments:
            rec = seg.to_record(doc.doc_id)
            labels = getattr(seg, "labels", None)
            if labels is not None:
                rec["label_bits"] = labels.to_bits(scheme)
                rec["confidences"] = [round(labels.confidences.get(label, 0.0), 6)
                                      for label in scheme.labels]
                raw = getattr(seg, "raw_labels", None)
                if raw is not None:
                    rec["raw_bits"] = raw.to_bits(scheme)
            yield rec


def read_labeled_corpus(records, scheme: LabelScheme = DEFAULT_SCHEME) -> list[CocDocument]:
    from .segmenter import read_corpus

    records = list(records)
    docs = read_corpus(records)
    vectors: dict[tuple[str, int], dict] = {}
    for rec in records:
        if rec.get("type") == "segment" and "label_bits" in rec:
            vectors[(rec["doc_id"], int(rec["seg_index"]))] = rec
    for doc in docs:
        for seg in doc.segments:
            rec = vectors.get((doc.doc_id, seg.seg_index))
            if rec is None:
                seg.labels = None
                seg.raw_labels = None
                continue
            seg.labels = LabelVector.from_bits(rec["label_bits"], scheme,
                                               rec.get("confidences"))
            raw_bits = rec.get("raw_bits")
            seg.raw_labels = (LabelVector.from_bits(raw_bits, scheme)
                              if raw_bits is not None else None)
    return docs
