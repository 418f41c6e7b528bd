"""Corpus-relative specificity of extracted entities.

Spans are embedded in context (mean pooling of overlapping token vectors),
clustered into topic centroids with hierarchical density-based clustering,
and each subject is scored as one minus the mean best-match cosine
similarity from its local centroids to a leave-one-out counterpart model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Protocol

import numpy as np

from .errors import DegenerateCentroidError, NoTopicsError
from .extractor import EntitySpan
from .segmenter import Segment

log = logging.getLogger(__name__)


class SentenceEncoder(Protocol):
    def encode(self, text: str) -> tuple[np.ndarray, list[tuple[int, int]]]:
        """Token vectors [T, D] and their character offset ranges."""
        ...


@dataclass
class SpanEmbedding:
    doc_id: str
    seg_index: int
    start: int
    end: int
    vector: np.ndarray
    group_keys: frozenset = frozenset()  # subjects (e.g. app_ids) the span belongs to
    labels: frozenset = frozenset()

    @property
    def span_ref(self) -> tuple[str, int, int, int]:
        return (self.doc_id, self.seg_index, self.start, self.end)


class _SegmentEncodingCache:
    """Encode each segment once; spans reuse the token matrix."""

    def __init__(self, encoder: SentenceEncoder):
        self._encoder = encoder
        self._cache: dict[tuple[str, int], tuple[np.ndarray, list[tuple[int, int]]]] = {}
        self.encode_calls = 0

    def get(self, key: tuple[str, int], text: str):
        if key not in self._cache:
            self._cache[key] = self._encoder.encode(text)
            self.encode_calls += 1
        return self._cache[key]


def pool_span_vector(token_matrix: np.ndarray, offsets: list[tuple[int, int]],
                     start: int, end: int) -> np.ndarray:
    """Mean of token vectors whose character ranges intersect [start, end)."""
    rows = [i for i, (ts, te) in enumerate(offsets) if ts < end and te > start]
    if not rows:
        raise ValueError("empty-overlap: no token overlaps the span")
    return token_matrix[rows].mean(axis=0)


def embed_span(span: EntitySpan, segment: Segment, encoder: SentenceEncoder,
               cache: _SegmentEncodingCache | None = None) -> SpanEmbedding:
    if not (0 <= span.start < span.end <= len(segment.text)):
        raise ValueError("span offsets fall outside the segment")
    if cache is None:
        cache = _SegmentEncodingCache(encoder)
    matrix, offsets = cache.get((span.doc_id, span.seg_index), segment.text)
    vector = pool_span_vector(matrix, offsets, span.start, span.end)
    if not np.all(np.isfinite(vector)):
        raise ValueError("non-finite span embedding")
    return SpanEmbedding(span.doc_id, span.seg_index, span.start, span.end,
                         np.asarray(vector, dtype=np.float64),
                         frozenset(span.app_ids), frozenset(span.seg_labels))


def embed_corpus(spans: list[EntitySpan], segments: dict[tuple[str, int], Segment],
                 encoder: SentenceEncoder) -> list[SpanEmbedding]:
    """Embed every span, encoding each distinct segment once."""
    cache = _SegmentEncodingCache(encoder)
    out = []
    for span in spans:
        seg = segments.get(span.seg_ref)
        if seg is None:
            log.warning("span %r references unknown segment %s", span.text, span.seg_ref)
            continue
        try:
            out.append(embed_span(span, seg, encoder, cache))
        except ValueError as exc:
            log.info("skipping span %r: %s", span.text, exc)
    return out


@dataclass
class ClusteringParams:
    min_cluster_size: int = 5
    min_samples: int = 5
    normalize: bool = True  # unit-normalize embeddings before clustering
    # Density selection never returns the tree root, so a subject whose spans
    # form one homogeneous topic comes back all-noise.  Fallback: points
    # within this radius of the coordinate-wise median form a single topic
    # (radius is in embedding units; with unit-normalized vectors 0.5 is half
    # the sphere radius).  Structureless scatter stays noise.
    single_topic_radius: float = 0.5

    def to_record(self) -> dict:
        return {"min_cluster_size": self.min_cluster_size,
                "min_samples": self.min_samples, "normalize": self.normalize,
                "single_topic_radius": self.single_topic_radius}


@dataclass
class TopicModel:
    subject: str
    centroids: np.ndarray  # [K, D]
    membership: list[int] = field(default_factory=list)  # cluster id per input, -1 noise
    member_count: int = 0

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DegenerateCentroidError("zero-norm embedding cannot be normalized")
    return matrix / norms


def build_topic_model(embeddings: list[SpanEmbedding] | np.ndarray,
                      params: ClusteringParams | None = None,
                      subject: str = "global") -> TopicModel:
    """Cluster span embeddings; centroids are the per-cluster means.

    Noise points are excluded from every centroid.  If everything is noise
    (or there are too few points to cluster) the subject is unscoreable and
    NoTopicsError is raised.
    """
    from sklearn.cluster import HDBSCAN

    params = params or ClusteringParams()
    if isinstance(embeddings, np.ndarray):
        matrix = np.asarray(embeddings, dtype=np.float64)
    else:
        matrix = np.asarray([e.vector for e in embeddings], dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < params.min_cluster_size:
        raise NoTopicsError(f"{subject}: {0 if matrix.ndim != 2 else matrix.shape[0]} "
                            f"embeddings < min_cluster_size={params.min_cluster_size}")
    if params.normalize:
        matrix = _normalize_rows(matrix)

    labels = HDBSCAN(min_cluster_size=params.min_cluster_size,
                     min_samples=params.min_samples, metric="euclidean").fit_predict(matrix)
    if set(labels) == {-1}:
        center = np.median(matrix, axis=0)
        near = np.linalg.norm(matrix - center, axis=1) <= params.single_topic_radius
        if near.sum() >= params.min_cluster_size:
            labels = np.where(near, 0, -1)
    cluster_ids = sorted(set(labels) - {-1})
    if not cluster_ids:
        raise NoTopicsError(f"{subject}: all points classified as noise")
    centroids = np.stack([matrix[labels == cid].mean(axis=0) for cid in cluster_ids])
    return TopicModel(subject, centroids, membership=labels.tolist(),
                      member_count=int((labels != -1).sum()))


@dataclass
class SpecificityScore:
    subject: str
    value: float
    k_local: int
    k_global: int

    def to_record(self) -> dict:
        return {"subject": self.subject, "value": self.value,
                "k_local": self.k_local, "k_global": self.k_global}


def _cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise DegenerateCentroidError("zero-norm centroid")
    return (a @ b.T) / np.outer(na, nb)


def specificity(local: TopicModel, global_: TopicModel) -> SpecificityScore:
    """One minus the mean best-match cosine similarity from local centroids
    to the counterpart model's centroids."""
    if local.k < 1 or global_.k < 1:
        raise NoTopicsError("both models need at least one centroid")
    sims = _cosine_matrix(local.centroids, global_.centroids)
    value = float(1.0 - sims.max(axis=1).mean())
    return SpecificityScore(local.subject, value, local.k, global_.k)


@dataclass
class LeaveOneOutDiagnostics:
    subject: str
    local_count: int
    counterpart_count: int
    counterpart_subjects: set
    counterpart_refs: list
    reason: str | None = None  # set when the subject was omitted


def _subject_keys(emb: SpanEmbedding, by: str) -> set[str]:
    keys = emb.group_keys if by == "game" else emb.labels
    return {str(k) for k in keys}


def group_embeddings_by_subject(embeddings: list[SpanEmbedding],
                                by: str = "game") -> dict[str, list[SpanEmbedding]]:
    """Partition span embeddings into subject pools.

    by='game': one pool per app id (shared documents contribute to every
    owning game).  by='label': one pool per segment label.
    """
    pools: dict[str, list[SpanEmbedding]] = {}
    for emb in embeddings:
        for key in _subject_keys(emb, by):
            pools.setdefault(key, []).append(emb)
    return pools


def leave_one_out_scores(embeddings: list[SpanEmbedding], by: str = "game",
                         params: ClusteringParams | None = None,
                         ) -> tuple[list[SpecificityScore], list[LeaveOneOutDiagnostics]]:
    """Score each subject against a counterpart model built from everyone else.

    A subject's own spans never enter its counterpart model (an embedding
    belongs to a subject when the subject is among its group keys, so spans
    from shared documents are withheld from every owning game's counterpart).
    Diagnostics carry instrumented counts and refs so isolation is checkable.
    Unscoreable subjects (all-noise local or counterpart) are omitted with
    the reason recorded.
    """
    params = params or ClusteringParams()
    pools = group_embeddings_by_subject(embeddings, by)
    if len(pools) < 2:
        raise ValueError("leave-one-out needs at least two subjects")

    scores: list[SpecificityScore] = []
    diagnostics: list[LeaveOneOutDiagnostics] = []
    for subject in sorted(pools):
        local_embeddings = pools[subject]
        counterpart = [e for e in embeddings if subject not in _subject_keys(e, by)]
        counterpart_subjects = set()
        for emb in counterpart:
            counterpart_subjects.update(_subject_keys(emb, by))

        diag = LeaveOneOutDiagnostics(subject, len(local_embeddings), len(counterpart),
                                      counterpart_subjects,
                                      [e.span_ref for e in counterpart])
        try:
            local_model = build_topic_model(local_embeddings, params, subject=subject)
            global_model = build_topic_model(counterpart, params, subject=f"all-but-{subject}")
            scores.append(specificity(local_model, global_model))
        except NoTopicsError as exc:
            diag.reason = str(exc)
            log.info("subject %s unscoreable: %s", subject, exc)
        diagnostics.append(diag)
    return scores, diagnostics


def leave_one_out_by_label(embeddings: list[SpanEmbedding],
                           params: ClusteringParams | None = None,
                           ) -> tuple[list[tuple[str, SpecificityScore]],
                                      list[tuple[str, LeaveOneOutDiagnostics]]]:
    """Per-game scores recomputed within each label's span subset.

    For every label carried by any span: restrict the corpus to spans from
    segments carrying that label, then run per-game leave-one-out scoring on
    the subset.  Yields (label, score) pairs, the long-format shape used by
    per-label distinctiveness reports.
    """
    params = params or ClusteringParams()
    labels = sorted({str(label) for emb in embeddings for label in emb.labels})
    scores: list[tuple[str, SpecificityScore]] = []
    diagnostics: list[tuple[str, LeaveOneOutDiagnostics]] = []
    for label in labels:
        subset = [e for e in embeddings if label in {str(v) for v in e.labels}]
        try:
            label_scores, label_diags = leave_one_out_scores(subset, by="game",
                                                             params=params)
        except ValueError:
            diagnostics.append((label, LeaveOneOutDiagnostics(
                label, len(subset), 0, set(), [], reason="fewer than two games")))
            continue
        scores.extend((label, s) for s in label_scores)
        diagnostics.extend((label, d) for d in label_diags)
    return scores, diagnostics


def bin_scores(scores: Iterable[float], width: float = 0.1, lowest: float = 0.1,
               highest: float = 0.6) -> dict[str, int]:
    """Histogram scores into report bins: [0, lowest), fixed-width bins, and
    an open-ended top bin."""
    edges = []
    edge = lowest
    while edge < highest - 1e-12:
        edges.append((edge, edge + width))
        edge += width
    counts = {f"<{lowest:.1f}": 0}
    for lo, hi in edges:
        counts[f"{lo:.1f}-{hi:.1f}"] = 0
    counts[f"{highest:.1f}+"] = 0
    for score in scores:
        if score < lowest:
            counts[f"<{lowest:.1f}"] += 1
        elif score >= highest:
            counts[f"{highest:.1f}+"] += 1
        else:
            for lo, hi in edges:
                if lo <= score < hi:
                    counts[f"{lo:.1f}-{hi:.1f}"] += 1
                    break
    return counts


# ---------------------------------------------------------------------------
# Embedding store: binary matrix + sidecar index mapping rows to span refs.

def save_embedding_store(path_prefix: str, embeddings: list[SpanEmbedding]):
    from .jsonlio import write_jsonl

    matrix = np.asarray([e.vector for e in embeddings], dtype=np.float64)
    np.save(f"{path_prefix}.npy", matrix)
    write_jsonl(f"{path_prefix}.index.jsonl", (
        {"row": i, "doc_id": e.doc_id, "seg_index": e.seg_index, "start": e.start,
         "end": e.end, "group_keys": sorted(str(k) for k in e.group_keys),
         "labels": sorted(str(k) for k in e.labels)}
        for i, e in enumerate(embeddings)))


def load_embedding_store(path_prefix: str) -> list[SpanEmbedding]:
    from .jsonlio import read_jsonl

    matrix = np.load(f"{path_prefix}.npy")
    embeddings = []
    for rec in read_jsonl(f"{path_prefix}.index.jsonl"):
        embeddings.append(SpanEmbedding(
            rec["doc_id"], int(rec["seg_index"]), int(rec["start"]), int(rec["end"]),
            matrix[int(rec["row"])], frozenset(rec.get("group_keys", [])),
            frozenset(rec.get("labels", []))))
    return embeddings
