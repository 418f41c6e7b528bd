"""End-to-end run orchestration: config, validation, manifest, stages.

A run executes stages in dependency order, recording input/output digests in
a manifest.  A stage re-runs only when its input digests changed; a file that
silently diverges from the digest recorded by the stage that produced it is
corruption and aborts the run.  All data outputs are canonical JSONL/CSV so
identical (inputs, config, seed) produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import analytics as an
from . import catalog as cat
from . import discovery as disc
from . import extractor as ext
from . import labeler as lab
from . import segmenter as seg
from . import specificity as spec
from .errors import ConfigError, ContractViolation, DigestMismatchError, StageError
from .jsonlio import dumps, file_digest, read_jsonl, write_jsonl

log = logging.getLogger(__name__)

TOOL_VERSION = "0.1.0"
ALL_STAGES = ("catalog", "discovery", "segment", "label", "extract", "specificity", "analytics")
ENV_PREFIX = "COCSCOPE_"


# ---------------------------------------------------------------------------
# Configuration.

_DEFAULTS: dict = {
    "run_dir": "out",
    "seed": None,
    "politeness_seconds": 10.0,
    "workers": 1,
    "stages": list(ALL_STAGES),
    "transport": {"kind": "snapshot", "snapshot": None},
    "catalog": {
        "source": {"base_url": "", "list_path": "/apps",
                   "detail_path": "/apps/{app_id}", "reviews_path": "/apps/{app_id}/reviews"},
        "window_years": 3,
        "now_utc": None,
    },
    "discovery": {"provider": "transcript", "transcript": None,
                  "endpoint": None, "api_key_env": None},
    "segmenter": {"min_tokens": 8, "max_tokens": 512},
    "labeler": {"backend": "stub", "model_dir": None, "thresholds": None},
    "extractor": {"backend": "stub", "dictionary": None},
    "specificity": {"encoder": "hashing", "encoder_dir": None, "dim": 32,
                    "min_cluster_size": 5, "min_samples": 5, "normalize": True,
                    "group_by": ["game"]},
    "analytics": {"resamples": 10000, "strata_bounds": [1000.0, 10000.0],
                  "coverage_labels": list(lab.MISCONDUCT_SUBTOPICS)},
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _apply_env_overrides(data: dict, environ) -> dict:
    """COCSCOPE_SEED=7 overrides seed; COCSCOPE_LABELER__BACKEND=stub overrides
    labeler.backend.  Values are parsed as YAML scalars."""
    out = json.loads(json.dumps(data))
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        node = out
        for part in path[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[path[-1]] = yaml.safe_load(raw)
    return out


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def load(cls, path, environ=None) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        data = _merge(_DEFAULTS, raw)
        data = _apply_env_overrides(data, environ if environ is not None else os.environ)
        return cls(data)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        # Deep copy so config mutation never reaches the shared defaults.
        return cls(json.loads(json.dumps(_merge(_DEFAULTS, raw))))

    def __getitem__(self, key):
        return self.data[key]

    @property
    def run_dir(self) -> Path:
        return Path(self.data["run_dir"])

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def config_hash(self) -> str:
        return hashlib.sha256(dumps(self.data).encode("utf-8")).hexdigest()


def validate(config: RunConfig) -> list[str]:
    """Diagnostics for a config; empty list means runnable."""
    errors: list[str] = []
    data = config.data

    if float(data["politeness_seconds"]) < 10.0:
        errors.append("politeness_seconds must be >= 10 (per-host request interval floor)")

    stages = data["stages"]
    unknown = [s for s in stages if s not in ALL_STAGES]
    if unknown:
        errors.append(f"unknown stages: {unknown}")
    ordered = [s for s in ALL_STAGES if s in stages]
    if ordered != [s for s in stages if s in ALL_STAGES]:
        errors.append("stages must appear in dependency order "
                      f"{' -> '.join(ALL_STAGES)}")

    transport = data["transport"]
    if transport["kind"] not in ("snapshot", "http"):
        errors.append(f"unknown transport kind {transport['kind']!r}")
    needs_transport = bool({"catalog", "discovery"} & set(stages))
    if needs_transport and transport["kind"] == "snapshot":
        snapshot = transport.get("snapshot")
        if not snapshot or not Path(snapshot).exists():
            errors.append(f"snapshot transport file not found: {snapshot}")

    if "discovery" in stages:
        provider = data["discovery"]["provider"]
        if provider == "transcript":
            transcript = data["discovery"].get("transcript")
            if not transcript or not Path(transcript).exists():
                errors.append(f"provider transcript not found: {transcript}")
        elif provider == "live":
            if not data["discovery"].get("endpoint"):
                errors.append("live provider requires discovery.endpoint")
        else:
            errors.append(f"unknown provider {provider!r}")

    if "label" in stages and data["labeler"]["backend"] == "portable":
        model_dir = data["labeler"].get("model_dir")
        if not model_dir or not (Path(model_dir) / "nli.pt").exists():
            errors.append(f"labeler model directory not usable: {model_dir}")
    if "label" in stages and data["labeler"]["backend"] not in ("stub", "portable"):
        errors.append(f"unknown labeler backend {data['labeler']['backend']!r}")

    if "specificity" in stages:
        if data["specificity"]["encoder"] == "portable":
            enc_dir = data["specificity"].get("encoder_dir")
            if not enc_dir or not (Path(enc_dir) / "encoder.pt").exists():
                errors.append(f"encoder directory not usable: {enc_dir}")
        elif data["specificity"]["encoder"] != "hashing":
            errors.append(f"unknown encoder {data['specificity']['encoder']!r}")
        bad = [g for g in data["specificity"]["group_by"] if g not in ("game", "label")]
        if bad:
            errors.append(f"unknown group_by values: {bad}")

    dictionary = data["extractor"].get("dictionary")
    if "extract" in stages and dictionary and not Path(dictionary).exists():
        errors.append(f"extractor dictionary not found: {dictionary}")

    randomized = "analytics" in stages
    if randomized and data["seed"] is None:
        errors.append("seed is required when randomized stages run (analytics)")

    return errors


# ---------------------------------------------------------------------------
# Manifest.

@dataclass
class RunManifest:
    run_id: str
    config_hash: str
    tool_version: str = TOOL_VERSION
    stages: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "RunManifest | None":
        if not Path(path).exists():
            return None
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(raw["run_id"], raw["config_hash"], raw.get("tool_version", "?"),
                   raw.get("stages", {}))

    def save(self, path):
        payload = {"run_id": self.run_id, "config_hash": self.config_hash,
                   "tool_version": self.tool_version, "stages": self.stages}
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
        os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Shared run context (transport and backends built once per run).

class RunContext:
    def __init__(self, config: RunConfig):
        self.config = config
        self._transport = None
        self._scheduler = None

    @property
    def transport(self):
        if self._transport is None:
            tcfg = self.config["transport"]
            if tcfg["kind"] == "snapshot":
                from .net import SnapshotTransport

                self._transport = SnapshotTransport.from_file(tcfg["snapshot"])
            else:
                from .net import HttpTransport, PolitenessScheduler

                self._scheduler = PolitenessScheduler(
                    float(self.config["politeness_seconds"]))
                self._transport = HttpTransport(self._scheduler)
        return self._transport

    def provider(self):
        dcfg = self.config["discovery"]
        if dcfg["provider"] == "transcript":
            return disc.TranscriptReplayProvider(dcfg["transcript"])
        api_key = os.environ.get(dcfg["api_key_env"]) if dcfg.get("api_key_env") else None
        return disc.LiveSearchAdapter(dcfg["endpoint"], api_key)

    def entailment_backend(self):
        lcfg = self.config["labeler"]
        if lcfg["backend"] == "portable":
            from .backends.portable import PortableEntailmentBackend

            return PortableEntailmentBackend(lcfg["model_dir"])
        from .backends.stub import KeywordEntailmentBackend

        return KeywordEntailmentBackend()

    def qa_backend(self):
        from .backends.stub import KeywordQaBackend

        return KeywordQaBackend()

    def encoder(self):
        scfg = self.config["specificity"]
        if scfg["encoder"] == "portable":
            from .backends.portable import PortableSentenceEncoder

            return PortableSentenceEncoder(scfg["encoder_dir"])
        from .backends.stub import HashingEncoder

        return HashingEncoder(dim=int(scfg["dim"]))

    def dictionary(self):
        path = self.config["extractor"].get("dictionary")
        return ext.WordList.from_file(path) if path else ext.WordList.bundled()


# ---------------------------------------------------------------------------
# Stage implementations.  Each returns the list of produced file paths.

def _write_csv(path, header: list[str], rows: list[list]):
    def fmt(value):
        if value is None:
            return ""
        if isinstance(value, float):
            return f"{value:.12g}"
        return str(value)

    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    os.replace(tmp, path)


def _stage_catalog(config: RunConfig, ctx: RunContext) -> list[Path]:
    ccfg = config["catalog"]
    source = cat.CatalogSource(**ccfg["source"])
    games = list(cat.crawl_catalog(source, float(config["politeness_seconds"]),
                                   transport=ctx.transport))
    filtered = list(cat.filter_titles(games))

    raw_reviews: dict[int, list[cat.ReviewRecord]] = {}
    for game in filtered:
        try:
            raw_reviews[game.app_id] = cat.fetch_app_reviews(source, game.app_id,
                                                             ctx.transport)
        except Exception as exc:
            log.warning("review fetch failed for %s: %s", game.app_id, exc)
            raw_reviews[game.app_id] = []

    # The window anchor defaults to the newest review seen, keeping offline
    # reruns deterministic; pin catalog.now_utc to override.
    now = ccfg.get("now_utc")
    if now is None:
        timestamps = [r.timestamp for rs in raw_reviews.values() for r in rs]
        now = max(timestamps) if timestamps else 0.0
    reviews = []
    for app_id in sorted(raw_reviews):
        reviews.extend(cat.filter_review_window(raw_reviews[app_id],
                                                int(ccfg["window_years"]), float(now)))

    games_path = config.path("games.jsonl")
    filtered_path = config.path("games_filtered.jsonl")
    reviews_path = config.path("reviews.jsonl")
    write_jsonl(games_path, (g.to_record() for g in sorted(games, key=lambda g: g.app_id)))
    write_jsonl(filtered_path, (g.to_record() for g in sorted(filtered, key=lambda g: g.app_id)))
    write_jsonl(reviews_path, (r.to_record() for r in reviews))
    return [games_path, filtered_path, reviews_path]


def _stage_discovery(config: RunConfig, ctx: RunContext) -> list[Path]:
    games = [cat.GameRecord.from_record(r) for r in read_jsonl(config.path("games_filtered.jsonl"))]
    provider = ctx.provider()
    candidates = []
    notes = []
    for game in sorted(games, key=lambda g: g.app_id):
        result = disc.discover(game, provider, ctx.transport)
        if result.note:
            notes.append({"app_id": game.app_id, "note": result.note})
        candidates.extend(c.to_record() for c in result.candidates)
    candidates_path = config.path("candidates.jsonl")
    notes_path = config.path("discovery_notes.jsonl")
    write_jsonl(candidates_path, candidates)
    write_jsonl(notes_path, notes)
    return [candidates_path, notes_path]


def _stage_segment(config: RunConfig, ctx: RunContext) -> list[Path]:
    scfg = config["segmenter"]
    seg_config = seg.SegmenterConfig(int(scfg["min_tokens"]), int(scfg["max_tokens"]))
    accepted = [disc.CocCandidate.from_record(r)
                for r in read_jsonl(config.path("candidates.jsonl"))
                if r.get("accepted")]
    docs: dict[str, seg.CocDocument] = {}
    for cand in accepted:
        doc = seg.CocDocument.from_fetch(cand.url, cand.body, {cand.app_id})
        if doc.doc_id in docs:
            docs[doc.doc_id].app_ids.add(cand.app_id)
        else:
            docs[doc.doc_id] = doc
    ordered = [docs[k] for k in sorted(docs)]
    for doc in ordered:
        seg.segment_document(doc, seg_config)
        seg.annotate_languages(doc.segments)
    corpus_path = config.path("corpus.jsonl")
    write_jsonl(corpus_path, seg.corpus_records(ordered))
    return [corpus_path]


def _stage_label(config: RunConfig, ctx: RunContext) -> list[Path]:
    scheme = lab.DEFAULT_SCHEME
    docs = seg.read_corpus(read_jsonl(config.path("corpus.jsonl")))
    backend = ctx.entailment_backend()
    thresholds = config["labeler"].get("thresholds")
    unclassified = []
    for doc in docs:
        failed = lab.classify_document(doc, scheme, backend, thresholds)
        if failed:  # one retry pass per document
            failed = lab.classify_document(doc, scheme, backend, thresholds)
        unclassified.extend((doc.doc_id, i) for i in failed)

    vectors = [s.labels for d in docs for s in d.segments if getattr(s, "labels", None)]
    violations = lab.hierarchy_violations(vectors, scheme)
    if violations:
        raise ContractViolation(f"{violations} hierarchy violations after enforcement")

    kept = lab.sanitize_documents(docs, scheme)
    labeled_path = config.path("labeled.jsonl")
    report_path = config.path("label_report.json")
    write_jsonl(labeled_path, lab.labeled_records(kept, scheme))
    report = {
        "documents_in": len(docs),
        "documents_kept": len(kept),
        "documents_excluded": sorted(d.doc_id for d in docs if d not in kept),
        "unclassified_segments": sorted(f"{d}:{i}" for d, i in unclassified),
        "hierarchy_violations": violations,
    }
    tmp = f"{report_path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
    os.replace(tmp, report_path)
    return [labeled_path, report_path]


def _stage_extract(config: RunConfig, ctx: RunContext) -> list[Path]:
    docs = lab.read_labeled_corpus(read_jsonl(config.path("labeled.jsonl")))
    backend = ctx.qa_backend()
    spans = []
    for doc in docs:
        spans.extend(ext.extract_entities(doc, backend))
    spans = ext.sanitize_spans(spans, ctx.dictionary(), docs)
    spans.sort(key=lambda s: (s.doc_id, s.seg_index, s.start, s.end, s.category))
    spans_path = config.path("spans.jsonl")
    write_jsonl(spans_path, (s.to_record() for s in spans))
    return [spans_path]


def _stage_specificity(config: RunConfig, ctx: RunContext) -> list[Path]:
    scfg = config["specificity"]
    docs = lab.read_labeled_corpus(read_jsonl(config.path("labeled.jsonl")))
    segments = {(d.doc_id, s.seg_index): s for d in docs for s in d.segments}
    spans = [ext.EntitySpan.from_record(r) for r in read_jsonl(config.path("spans.jsonl"))]
    encoder = ctx.encoder()
    embeddings = spec.embed_corpus(spans, segments, encoder)

    store_prefix = str(config.path("embeddings"))
    spec.save_embedding_store(store_prefix, embeddings)
    params = spec.ClusteringParams(int(scfg["min_cluster_size"]), int(scfg["min_samples"]),
                                   bool(scfg["normalize"]))
    produced = [config.path("embeddings.npy"), config.path("embeddings.index.jsonl")]
    notes = []
    for group_by in scfg["group_by"]:
        path = config.path(f"scores_{group_by}.csv")
        if group_by == "game":
            try:
                scores, diagnostics = spec.leave_one_out_scores(embeddings, by="game",
                                                                params=params)
            except ValueError as exc:
                notes.append({"group_by": group_by, "note": str(exc)})
                scores, diagnostics = [], []
            rows = [[s.subject, s.value, s.k_local, s.k_global]
                    for s in sorted(scores, key=lambda s: s.subject)]
            _write_csv(path, ["subject", "value", "k_local", "k_global"], rows)
            notes.extend({"group_by": group_by, "subject": d.subject, "note": d.reason}
                         for d in diagnostics if d.reason)
        else:  # per-label variant: per-game scores within each label subset
            scores, diagnostics = spec.leave_one_out_by_label(embeddings, params)
            rows = [[label, s.subject, s.value, s.k_local, s.k_global]
                    for label, s in sorted(scores, key=lambda t: (t[0], t[1].subject))]
            _write_csv(path, ["label", "subject", "value", "k_local", "k_global"], rows)
            notes.extend({"group_by": group_by, "label": label, "subject": d.subject,
                          "note": d.reason}
                         for label, d in diagnostics if d.reason)
        produced.append(path)
    notes_path = config.path("specificity_notes.jsonl")
    write_jsonl(notes_path, notes)
    produced.append(notes_path)
    return produced


def _stage_analytics(config: RunConfig, ctx: RunContext) -> list[Path]:
    acfg = config["analytics"]
    seed = int(config["seed"])
    games = [cat.GameRecord.from_record(r) for r in read_jsonl(config.path("games.jsonl"))]
    multiplayer = list(cat.filter_titles(games))
    docs = lab.read_labeled_corpus(read_jsonl(config.path("labeled.jsonl")))
    reviews: dict[int, list[cat.ReviewRecord]] = {}
    for rec in read_jsonl(config.path("reviews.jsonl")):
        review = cat.ReviewRecord.from_record(rec)
        reviews.setdefault(review.app_id, []).append(review)

    coverage = an.game_label_coverage(docs)
    coc_ids = set(coverage)
    produced = []

    # Availability: overall plus per genre and age rating.
    rows = []
    for axis in (None, "genre", "age_rating"):
        for r in an.availability_table(multiplayer, coc_ids, axis):
            rows.append([axis or "all", r.category, r.with_coc, r.total, r.rate_pct])
    path = config.path("availability.csv")
    _write_csv(path, ["axis", "category", "with_coc", "total", "rate_pct"], rows)
    produced.append(path)

    # Coverage matrices over the configured labels.
    labels = acfg["coverage_labels"]
    for axis in ("genre", "age_rating"):
        matrix = an.coverage_matrix(multiplayer, coverage, axis, labels)
        rows = [[matrix.rows[i], matrix.row_counts[i],
                 *[matrix.cells[i][j] for j in range(len(labels))]]
                for i in range(len(matrix.rows))]
        path = config.path(f"coverage_{axis}.csv")
        _write_csv(path, ["category", "n_games", *labels], rows)
        produced.append(path)

    # Segment-level co-occurrence, misconduct rows x governance columns.
    vectors = [s.labels for d in docs for s in d.segments if getattr(s, "labels", None)]
    cooc = an.cooccurrence_matrix(vectors)
    rows = [[cooc.rows[i], cooc.row_support[i],
             *[cooc.rates[i][j] for j in range(len(cooc.cols))]]
            for i in range(len(cooc.rows))]
    path = config.path("cooccurrence.csv")
    _write_csv(path, ["misconduct", "support", *cooc.cols], rows)
    produced.append(path)

    # Per-game toxicity prevalence over the review window.
    tox_rows = []
    prevalence: dict[int, float] = {}
    for game in sorted(multiplayer, key=lambda g: g.app_id):
        result = an.toxicity_prevalence(reviews.get(game.app_id, []))
        prevalence[game.app_id] = result.value
        tox_rows.append([game.app_id, game.app_id in coc_ids, result.value,
                         result.matched, result.total, result.zero_denominator])
    path = config.path("toxicity.csv")
    _write_csv(path, ["app_id", "has_coc", "prevalence", "matched", "total",
                      "zero_denominator"], tox_rows)
    produced.append(path)

    # Statistical test family.
    stats: list[dict] = []

    def record(name, fn):
        try:
            result = fn()
        except Exception as exc:
            stats.append({"name": name, "error": f"{type(exc).__name__}: {exc}"})
            return
        results = result if isinstance(result, list) else [result]
        for r in results:
            rec = {"name": name, "seed": seed}
            rec.update(r.to_record())
            stats.append(rec)

    has_coc = [g.app_id in coc_ids for g in multiplayer]

    def genre_pairs():
        xs, ys = [], []
        for game, flag in zip(multiplayer, has_coc):
            for genre in sorted(game.genres or {"other"}):
                xs.append(flag)
                ys.append(genre)
        return xs, ys

    record("availability_x_genre_chi2",
           lambda: an.chi2_test(an.crosstab(*genre_pairs())[0]))
    record("availability_x_age_chi2",
           lambda: an.chi2_test(an.crosstab(has_coc,
                                            [g.age_rating for g in multiplayer])[0]))
    record("availability_x_anticheat_chi2",
           lambda: an.chi2_test(an.crosstab(has_coc,
                                            [g.anti_cheat_certified for g in multiplayer])[0]))
    record("availability_logit_reviews",
           lambda: an.logit_lr([1.0 if f else 0.0 for f in has_coc],
                               [math.log10(g.review_count + 1) for g in multiplayer]))

    for label, stratum_games in an.stratify(multiplayer, acfg["strata_bounds"]):
        with_coc = [prevalence[g.app_id] for g in stratum_games if g.app_id in coc_ids]
        without = [prevalence[g.app_id] for g in stratum_games if g.app_id not in coc_ids]
        record(f"toxicity_mannwhitney_{label}",
               lambda a=with_coc, b=without: an.mannwhitney(a, b))

    coc_games = [g for g in multiplayer if g.app_id in coc_ids]
    record("toxicity_x_coverage_spearman",
           lambda: an.spearman([prevalence[g.app_id] for g in coc_games],
                               [len(coverage[g.app_id] & set(labels)) for g in coc_games]))

    # Misconduct x moderation-strategy counts (consequence vs mechanism);
    # misconduct types never co-occurring with either column carry no signal.
    mis_rows = [[cooc.counts[i][0], cooc.counts[i][1]] for i in range(len(cooc.rows))
                if cooc.counts[i][0] + cooc.counts[i][1] > 0]
    record("misconduct_x_governance_chi2", lambda: an.chi2_test(mis_rows))

    game_texts = {}
    for doc in docs:
        text = "\n".join(s.text for s in doc.segments)
        for app_id in doc.app_ids:
            game_texts[app_id] = game_texts.get(app_id, "") + "\n" + text
    record("child_mention_x_age_chi2",
           lambda: an.chi2_test(an.child_mention_by_age(multiplayer, game_texts)[0]))

    def coverage_family():
        pairs = []
        family_labels = []
        for label in labels:
            xs, ys = [], []
            for game in multiplayer:
                if game.app_id not in coc_ids:
                    continue
                for genre in sorted(game.genres or {"other"}):
                    xs.append(label in coverage[game.app_id])
                    ys.append(genre)
            if len(set(xs)) > 1 and len(set(ys)) > 1:
                pairs.append((xs, ys))
                family_labels.append(label)
        results = an.perm_chi2_family(pairs, n_resamples=int(acfg["resamples"]), seed=seed)
        for label, result in zip(family_labels, results):
            result.extra["label"] = label
        return results

    record("coverage_x_genre_perm_chi2_fdr", coverage_family)

    path = config.path("stats.jsonl")
    write_jsonl(path, stats)
    produced.append(path)

    # Figure-ready distinctiveness bins with both normalizations.
    scores_path = config.path("scores_game.csv")
    if scores_path.exists():
        subject_scores = {}
        with open(scores_path, "r", encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                subject, value, *_ = line.rstrip("\n").split(",")
                subject_scores[int(subject)] = float(value)
        bin_rows = []
        for axis in ("genre", "age_rating"):
            per_category: dict[str, list[float]] = {}
            for game in multiplayer:
                if game.app_id not in subject_scores:
                    continue
                values = (game.genres or {"other"}) if axis == "genre" else {game.age_rating}
                for category in sorted(values):
                    per_category.setdefault(category, []).append(subject_scores[game.app_id])
            counts = {category: spec.bin_scores(values)
                      for category, values in sorted(per_category.items())}
            bin_totals: dict[str, int] = {}
            for binned in counts.values():
                for b, c in binned.items():
                    bin_totals[b] = bin_totals.get(b, 0) + c
            for category, binned in sorted(counts.items()):
                total_cat = sum(binned.values())
                for b, c in binned.items():
                    share_bin = c / bin_totals[b] if bin_totals[b] else 0.0
                    share_cat = c / total_cat if total_cat else 0.0
                    bin_rows.append([axis, category, b, c, share_bin, share_cat])
        path = config.path("specificity_bins.csv")
        _write_csv(path, ["axis", "category", "bin", "count",
                          "share_within_bin", "share_within_category"], bin_rows)
        produced.append(path)

    return produced


_STAGE_FNS = {
    "catalog": _stage_catalog,
    "discovery": _stage_discovery,
    "segment": _stage_segment,
    "label": _stage_label,
    "extract": _stage_extract,
    "specificity": _stage_specificity,
    "analytics": _stage_analytics,
}


def _stage_inputs(stage: str, config: RunConfig) -> list[Path]:
    tcfg = config["transport"]
    external = []
    if tcfg["kind"] == "snapshot" and tcfg.get("snapshot"):
        external.append(Path(tcfg["snapshot"]))
    by_stage = {
        "catalog": external,
        "discovery": [config.path("games_filtered.jsonl"), *external,
                      *([Path(config["discovery"]["transcript"])]
                        if config["discovery"].get("transcript") else [])],
        "segment": [config.path("candidates.jsonl")],
        "label": [config.path("corpus.jsonl")],
        "extract": [config.path("labeled.jsonl")],
        "specificity": [config.path("spans.jsonl"), config.path("labeled.jsonl")],
        "analytics": [config.path("games.jsonl"), config.path("labeled.jsonl"),
                      config.path("reviews.jsonl"), config.path("scores_game.csv")],
    }
    return [p for p in by_stage[stage] if p.exists()]


def run(config: RunConfig) -> RunManifest:
    """Execute the configured stages with digest-based resume.

    Raises ConfigError for invalid configs, DigestMismatchError when an
    intermediate file was tampered with, StageError when a stage fails.
    """
    diagnostics = validate(config)
    if diagnostics:
        raise ConfigError("; ".join(diagnostics))

    config.run_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = config.path("manifest.json")
    config_hash = config.config_hash()
    manifest = RunManifest.load(manifest_path)
    if manifest is None or manifest.config_hash != config_hash:
        manifest = RunManifest(run_id=config_hash[:12], config_hash=config_hash)

    ctx = RunContext(config)
    stages = [s for s in ALL_STAGES if s in config["stages"]]
    produced_digests: dict[str, str] = {}
    for done_stage, rec in manifest.stages.items():
        if rec.get("status") == "done":
            produced_digests.update(rec.get("outputs", {}))

    for stage in stages:
        inputs = _stage_inputs(stage, config)
        for path in inputs:
            recorded = produced_digests.get(str(path))
            if recorded is not None and file_digest(path) != recorded:
                raise DigestMismatchError(stage, str(path))

        input_digests = {str(p): file_digest(p) for p in inputs}
        rec = manifest.stages.get(stage)
        if rec and rec.get("status") == "done" and rec.get("inputs") == input_digests:
            outputs = rec.get("outputs", {})
            # A recorded output that exists but no longer matches its digest
            # is corruption, not a reason to quietly rebuild it.
            for path, digest in outputs.items():
                if Path(path).exists() and file_digest(path) != digest:
                    raise DigestMismatchError(stage, path)
            if all(Path(p).exists() for p in outputs):
                log.info("stage %s: inputs unchanged, skipping", stage)
                produced_digests.update(outputs)
                continue

        log.info("stage %s: running", stage)
        started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        try:
            outputs = _STAGE_FNS[stage](config, ctx)
        except (DigestMismatchError, ContractViolation):
            raise
        except Exception as exc:
            manifest.stages[stage] = {"status": "failed", "inputs": input_digests,
                                      "error": f"{type(exc).__name__}: {exc}",
                                      "started_utc": started}
            manifest.save(manifest_path)
            raise StageError(stage, str(exc)) from exc
        manifest.stages[stage] = {
            "status": "done",
            "inputs": input_digests,
            "outputs": {str(p): file_digest(p) for p in outputs},
            "started_utc": started,
            "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        produced_digests.update(manifest.stages[stage]["outputs"])
        manifest.save(manifest_path)
    return manifest
