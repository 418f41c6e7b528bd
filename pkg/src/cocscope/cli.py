"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 stage failure, 4 contract
violation (hierarchy breach or intermediate-file digest mismatch).
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import analytics as an
from . import catalog as cat
from . import discovery as disc
from . import extractor as ext
from . import labeler as lab
from . import pipeline
from . import segmenter as seg
from . import specificity as spec
from .errors import (CocscopeError, ConfigError, ContractViolation,
                     DigestMismatchError, StageError)
from .jsonlio import read_jsonl, write_jsonl

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_CONTRACT = 4

log = logging.getLogger("cocscope")


def _transport(args):
    if getattr(args, "snapshot", None):
        from .net import SnapshotTransport

        return SnapshotTransport.from_file(args.snapshot)
    from .net import HttpTransport, PolitenessScheduler

    return HttpTransport(PolitenessScheduler(args.min_interval))


def cmd_catalog_crawl(args) -> int:
    if args.min_interval < 10:
        raise ConfigError("--min-interval must be >= 10 seconds")
    source = cat.CatalogSource(base_url=args.source)
    transport = _transport(args)
    games = sorted(cat.crawl_catalog(source, args.min_interval, transport=transport),
                   key=lambda g: g.app_id)
    write_jsonl(args.out, (g.to_record() for g in games))
    print(f"wrote {len(games)} games to {args.out}")
    return EXIT_OK


def cmd_catalog_filter(args) -> int:
    games = (cat.GameRecord.from_record(r) for r in read_jsonl(args.infile))
    kept = list(cat.filter_titles(games))
    write_jsonl(args.out, (g.to_record() for g in kept))
    print(f"kept {len(kept)} multiplayer non-DLC titles in {args.out}")
    return EXIT_OK


def cmd_discover(args) -> int:
    if args.min_interval < 10:
        raise ConfigError("--min-interval must be >= 10 seconds")
    games = [cat.GameRecord.from_record(r) for r in read_jsonl(args.catalog)]
    if args.provider == "transcript":
        provider = disc.TranscriptReplayProvider(args.transcript)
    else:
        provider = disc.LiveSearchAdapter(args.endpoint)
    transport = _transport(args)
    records = []
    accepted = 0
    for game in sorted(games, key=lambda g: g.app_id):
        result = disc.discover(game, provider, transport)
        accepted += len(result.accepted)
        records.extend(c.to_record() for c in result.candidates)
    write_jsonl(args.out, records)
    print(f"wrote {len(records)} candidates ({accepted} accepted) to {args.out}")
    return EXIT_OK


def cmd_segment(args) -> int:
    candidates = [disc.CocCandidate.from_record(r) for r in read_jsonl(args.infile)
                  if r.get("accepted")]
    docs: dict[str, seg.CocDocument] = {}
    for cand in candidates:
        doc = seg.CocDocument.from_fetch(cand.url, cand.body, {cand.app_id})
        if doc.doc_id in docs:
            docs[doc.doc_id].app_ids.add(cand.app_id)
        else:
            docs[doc.doc_id] = doc
    config = seg.SegmenterConfig(args.min_tokens, args.max_tokens)
    ordered = [docs[k] for k in sorted(docs)]
    for doc in ordered:
        seg.segment_document(doc, config)
        seg.annotate_languages(doc.segments)
    write_jsonl(args.out, seg.corpus_records(ordered))
    n_segments = sum(len(d.segments) for d in ordered)
    print(f"wrote {len(ordered)} documents / {n_segments} segments to {args.out}")
    return EXIT_OK


def _entailment_backend(args):
    if args.backend == "portable":
        if not args.model:
            raise ConfigError("--model is required with the portable backend")
        from .backends.portable import PortableEntailmentBackend

        return PortableEntailmentBackend(args.model)
    from .backends.stub import KeywordEntailmentBackend

    return KeywordEntailmentBackend()


def cmd_label(args) -> int:
    scheme = lab.DEFAULT_SCHEME
    docs = seg.read_corpus(read_jsonl(args.corpus))
    backend = _entailment_backend(args)
    for doc in docs:
        failed = lab.classify_document(doc, scheme, backend)
        if failed:
            lab.classify_document(doc, scheme, backend)
    vectors = [s.labels for d in docs for s in d.segments if getattr(s, "labels", None)]
    if lab.hierarchy_violations(vectors, scheme):
        raise ContractViolation("hierarchy violations survived enforcement")
    kept = lab.sanitize_documents(docs, scheme)
    write_jsonl(args.out, lab.labeled_records(kept, scheme))
    print(f"labeled {len(kept)}/{len(docs)} documents -> {args.out}")
    return EXIT_OK


def cmd_label_eval(args) -> int:
    scheme = lab.DEFAULT_SCHEME
    docs = lab.read_labeled_corpus(read_jsonl(args.testset), scheme)
    testset = [(s.text, s.labels) for d in docs for s in d.segments
               if getattr(s, "labels", None) is not None]
    backend = _entailment_backend(args)
    report = lab.evaluate(testset, backend, scheme)

    def show(value):
        return f"{value:.3f}" if value is not None else "  n/a"

    print(f"{'label':44s} {'prec':>6s} {'recall':>6s} {'f1':>6s} {'acc':>6s} {'support':>7s}")
    for name, p, r, f1, acc, support in report.rows(scheme):
        print(f"{name:44s} {show(p):>6s} {show(r):>6s} {show(f1):>6s} {show(acc):>6s} {support:>7d}")
    print(f"{'Overall (macro)':44s} {show(report.macro_precision):>6s} "
          f"{show(report.macro_recall):>6s} {show(report.macro_f1):>6s} "
          f"{show(report.macro_accuracy):>6s}")
    return EXIT_OK


def cmd_extract(args) -> int:
    docs = lab.read_labeled_corpus(read_jsonl(args.labeled))
    from .backends.stub import KeywordQaBackend

    backend = KeywordQaBackend()
    spans = []
    for doc in docs:
        spans.extend(ext.extract_entities(doc, backend))
    dictionary = (ext.WordList.from_file(args.dictionary) if args.dictionary
                  else ext.WordList.bundled())
    spans = ext.sanitize_spans(spans, dictionary, docs)
    spans.sort(key=lambda s: (s.doc_id, s.seg_index, s.start, s.end, s.category))
    write_jsonl(args.out, (s.to_record() for s in spans))
    print(f"wrote {len(spans)} spans to {args.out}")
    return EXIT_OK


def cmd_specificity(args) -> int:
    docs = lab.read_labeled_corpus(read_jsonl(args.corpus))
    segments = {(d.doc_id, s.seg_index): s for d in docs for s in d.segments}
    spans = [ext.EntitySpan.from_record(r) for r in read_jsonl(args.spans)]
    if args.encoder == "portable":
        from .backends.portable import PortableSentenceEncoder

        encoder = PortableSentenceEncoder(args.encoder_dir)
    else:
        from .backends.stub import HashingEncoder

        encoder = HashingEncoder(dim=args.dim)
    embeddings = spec.embed_corpus(spans, segments, encoder)
    if args.store:
        spec.save_embedding_store(args.store, embeddings)
    params = spec.ClusteringParams(args.min_cluster_size, args.min_samples)
    if args.group_by == "game":
        scores, diagnostics = spec.leave_one_out_scores(embeddings, by="game",
                                                        params=params)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("subject,value,k_local,k_global\n")
            for s in sorted(scores, key=lambda s: s.subject):
                fh.write(f"{s.subject},{s.value:.12g},{s.k_local},{s.k_global}\n")
        omitted = [d for d in diagnostics if d.reason]
    else:
        scores, diagnostics = spec.leave_one_out_by_label(embeddings, params)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("label,subject,value,k_local,k_global\n")
            for label, s in sorted(scores, key=lambda t: (t[0], t[1].subject)):
                fh.write(f"{label},{s.subject},{s.value:.12g},{s.k_local},{s.k_global}\n")
        omitted = [d for _, d in diagnostics if d.reason]
    print(f"scored {len(scores)} subjects ({len(omitted)} unscoreable) -> {args.out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    docs = lab.read_labeled_corpus(read_jsonl(args.labeled))
    games = [cat.GameRecord.from_record(r) for r in read_jsonl(args.games)]
    multiplayer = list(cat.filter_titles(games))
    coverage = an.game_label_coverage(docs)

    if args.what == "coverage":
        matrix = an.coverage_matrix(multiplayer, coverage, args.axis,
                                    list(lab.MISCONDUCT_SUBTOPICS))
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("category,n_games," + ",".join(matrix.cols) + "\n")
            for i, row in enumerate(matrix.rows):
                cells = ",".join(f"{c:.12g}" for c in matrix.cells[i])
                fh.write(f"{row},{matrix.row_counts[i]},{cells}\n")
    elif args.what == "cooccur":
        vectors = [s.labels for d in docs for s in d.segments if getattr(s, "labels", None)]
        cooc = an.cooccurrence_matrix(vectors)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("misconduct,support," + ",".join(cooc.cols) + "\n")
            for i, row in enumerate(cooc.rows):
                cells = ",".join("" if c is None else f"{c:.12g}" for c in cooc.rates[i])
                fh.write(f"{row},{cooc.row_support[i]},{cells}\n")
    elif args.what == "toxicity":
        reviews: dict[int, list[cat.ReviewRecord]] = {}
        for rec in read_jsonl(args.reviews):
            review = cat.ReviewRecord.from_record(rec)
            reviews.setdefault(review.app_id, []).append(review)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("app_id,has_coc,prevalence,matched,total\n")
            for game in sorted(multiplayer, key=lambda g: g.app_id):
                result = an.toxicity_prevalence(reviews.get(game.app_id, []))
                fh.write(f"{game.app_id},{game.app_id in coverage},"
                         f"{result.value:.12g},{result.matched},{result.total}\n")
    else:  # stats
        has_coc = [g.app_id in coverage for g in multiplayer]
        results = [
            an.run_stat("chi2", an.crosstab(has_coc,
                                            [g.age_rating for g in multiplayer])[0]),
            an.run_stat("chi2", an.crosstab(has_coc,
                                            [g.anti_cheat_certified for g in multiplayer])[0]),
        ]
        write_jsonl(args.out, (r.to_record() for r in results))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    config = pipeline.RunConfig.load(args.config)
    diagnostics = pipeline.validate(config)
    for message in diagnostics:
        print(f"error: {message}")
    if diagnostics:
        return EXIT_CONFIG
    print("config ok")
    return EXIT_OK


def cmd_run(args) -> int:
    config = pipeline.RunConfig.load(args.config)
    manifest = pipeline.run(config)
    done = sum(1 for rec in manifest.stages.values() if rec.get("status") == "done")
    print(f"run {manifest.run_id}: {done} stages done, manifest at "
          f"{config.path('manifest.json')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cocscope",
                                     description="Conduct-document measurement pipeline")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_catalog = sub.add_parser("catalog", help="crawl or filter the game catalog")
    catalog_sub = p_catalog.add_subparsers(dest="subcommand", required=True)
    p_crawl = catalog_sub.add_parser("crawl")
    p_crawl.add_argument("--source", required=True, help="marketplace base URL")
    p_crawl.add_argument("--min-interval", type=float, default=10.0)
    p_crawl.add_argument("--snapshot", help="replay transport snapshot instead of HTTP")
    p_crawl.add_argument("--out", required=True)
    p_crawl.set_defaults(func=cmd_catalog_crawl)
    p_filter = catalog_sub.add_parser("filter")
    p_filter.add_argument("--in", dest="infile", required=True)
    p_filter.add_argument("--out", required=True)
    p_filter.set_defaults(func=cmd_catalog_filter)

    p_discover = sub.add_parser("discover", help="find candidate conduct pages")
    p_discover.add_argument("--catalog", required=True)
    p_discover.add_argument("--provider", choices=["transcript", "live"], default="transcript")
    p_discover.add_argument("--transcript")
    p_discover.add_argument("--endpoint")
    p_discover.add_argument("--min-interval", type=float, default=10.0)
    p_discover.add_argument("--snapshot")
    p_discover.add_argument("--out", required=True)
    p_discover.set_defaults(func=cmd_discover)

    p_segment = sub.add_parser("segment", help="sanitize and segment accepted pages")
    p_segment.add_argument("--in", dest="infile", required=True)
    p_segment.add_argument("--min-tokens", type=int, default=8)
    p_segment.add_argument("--max-tokens", type=int, default=512)
    p_segment.add_argument("--out", required=True)
    p_segment.set_defaults(func=cmd_segment)

    p_label = sub.add_parser("label", help="classify segments against the 17-label scheme")
    label_sub = p_label.add_subparsers(dest="subcommand", required=True)
    p_label_run = label_sub.add_parser("run")
    p_label_run.add_argument("--corpus", required=True)
    p_label_run.add_argument("--backend", choices=["stub", "portable"], default="stub")
    p_label_run.add_argument("--model")
    p_label_run.add_argument("--out", required=True)
    p_label_run.set_defaults(func=cmd_label)
    p_label_eval = label_sub.add_parser("eval")
    p_label_eval.add_argument("--testset", required=True)
    p_label_eval.add_argument("--backend", choices=["stub", "portable"], default="portable")
    p_label_eval.add_argument("--model")
    p_label_eval.set_defaults(func=cmd_label_eval)

    p_extract = sub.add_parser("extract", help="extract contextual entity spans")
    p_extract.add_argument("--labeled", required=True)
    p_extract.add_argument("--model", help="reserved for model-backed QA backends")
    p_extract.add_argument("--dictionary")
    p_extract.add_argument("--out", required=True)
    p_extract.set_defaults(func=cmd_extract)

    p_spec = sub.add_parser("specificity", help="score corpus-relative specificity")
    p_spec.add_argument("--spans", required=True)
    p_spec.add_argument("--corpus", required=True, help="labeled corpus (segment texts)")
    p_spec.add_argument("--encoder", choices=["hashing", "portable"], default="hashing")
    p_spec.add_argument("--encoder-dir")
    p_spec.add_argument("--dim", type=int, default=32)
    p_spec.add_argument("--min-cluster-size", type=int, default=5)
    p_spec.add_argument("--min-samples", type=int, default=5)
    p_spec.add_argument("--group-by", choices=["game", "label"], default="game")
    p_spec.add_argument("--store", help="embedding store path prefix")
    p_spec.add_argument("--out", required=True)
    p_spec.set_defaults(func=cmd_specificity)

    p_analyze = sub.add_parser("analyze", help="corpus analytics tables")
    p_analyze.add_argument("what", choices=["coverage", "cooccur", "stats", "toxicity"])
    p_analyze.add_argument("--labeled", required=True)
    p_analyze.add_argument("--games", required=True)
    p_analyze.add_argument("--reviews")
    p_analyze.add_argument("--axis", choices=["genre", "age_rating"], default="genre")
    p_analyze.add_argument("--out", required=True)
    p_analyze.set_defaults(func=cmd_analyze)

    p_run = sub.add_parser("run", help="run the configured pipeline end to end")
    p_run.add_argument("--config", required=True)
    p_run.set_defaults(func=cmd_run)

    p_validate = sub.add_parser("validate", help="validate a run config")
    p_validate.add_argument("--config", required=True)
    p_validate.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DigestMismatchError, ContractViolation) as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (StageError, CocscopeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
