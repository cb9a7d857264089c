"""Batch pipeline driver.

Stages communicate only through the documented file formats, so
intermediate artifacts (embeddings, centroids, indexes) can be reused
across experiment configurations. Reports go to stdout as JSON (or CSV
tables with ``--csv``); logs go to stderr. Exit codes: 0 success,
1 validation error, 2 I/O or wire-protocol error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from jobrec import adfilter, centroid, corpus, evaluation, matcher
from jobrec.embedding import (
    DEFAULT_DIM,
    DEFAULT_SEED,
    EmbeddingStore,
    make_embedder,
    read_embeddings,
    write_embeddings,
)
from jobrec.errors import JobRecError, ProtocolError


class CliParser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; here flag misuse is a validation
    error and must exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _open_read(path):
    return open(path, "r", encoding="utf-8", newline="")


def _open_write(path):
    return open(path, "w", encoding="utf-8", newline="")


def _report(obj) -> None:
    print(json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2))


def _ad_query_text(ad: corpus.JobAd) -> str:
    return f"{ad.title}\n\n{ad.body}" if ad.title else ad.body


def _embedder_from_args(args):
    return make_embedder(args.provider, dim=args.dim, seed=args.seed)


def _add_provider_flags(parser):
    parser.add_argument(
        "--provider",
        default="builtin-hash",
        help="'builtin-hash' or an embedding provider base URL",
    )
    parser.add_argument("--dim", type=int, default=DEFAULT_DIM)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)


def _add_filter_flags(parser):
    parser.add_argument("--budget", type=int, default=adfilter.DEFAULT_TOKEN_BUDGET)
    parser.add_argument("--threshold", type=float, default=adfilter.DEFAULT_THRESHOLD)
    parser.add_argument("--cue-config", help="cue lexicon JSON for the baseline filter")
    parser.add_argument("--classifier", help="remote classifier base URL")


def _make_classifier(args):
    mode_filter = None
    if getattr(args, "cue_config", None):
        with _open_read(args.cue_config) as fh:
            mode_filter = adfilter.BaselineFilter(adfilter.load_cue_config(fh))
    if getattr(args, "classifier", None):
        mode_filter = adfilter.RemoteClassifierFilter(args.classifier)
    return mode_filter


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_ingest_esco(args) -> int:
    with _open_read(args.path) as fh:
        occupations = corpus.parse_esco(fh)
    if args.out:
        with _open_write(args.out) as fh:
            corpus.write_esco(occupations, fh)
    _report({"occupations": len(occupations)})
    return 0


def cmd_ingest_ads(args) -> int:
    with _open_read(args.path) as fh:
        ads = corpus.parse_ads(fh)
    report = {"ads": len(ads)}
    if args.esco:
        with _open_read(args.esco) as fh:
            occupations = corpus.parse_esco(fh)
        report = corpus.corpus_stats(occupations, ads).as_dict()
    if args.out:
        with _open_write(args.out) as fh:
            corpus.write_ads(ads, fh)
    _report(report)
    return 0


def cmd_export_pairs(args) -> int:
    with _open_read(args.esco) as fh:
        occupations = corpus.parse_esco(fh)
    pairs = corpus.export_training_pairs(occupations)
    with _open_write(args.out) as fh:
        corpus.write_training_pairs(pairs, fh)
    by_kind = {kind: 0 for kind in corpus.PAIR_KINDS}
    for pair in pairs:
        by_kind[pair.kind] += 1
    _report({"pairs": len(pairs), "by_kind": by_kind})
    return 0


def cmd_filter_ads(args) -> int:
    with _open_read(args.ads) as fh:
        ads = corpus.parse_ads(fh)
    classifier = _make_classifier(args)
    filtered = []
    for ad in ads:
        body = adfilter.apply_filter_mode(
            ad.body,
            args.mode,
            budget=args.budget,
            threshold=args.threshold,
            filter_=classifier,
        )
        filtered.append(
            corpus.JobAd(ad_id=ad.ad_id, esco_id=ad.esco_id, title=ad.title, body=body)
        )
    with _open_write(args.out) as fh:
        corpus.write_ads(filtered, fh)
    _report({"ads": len(filtered), "mode": args.mode})
    return 0


def cmd_embed(args) -> int:
    sources = [bool(args.ads), bool(args.esco), bool(args.texts)]
    if sum(sources) != 1:
        raise JobRecError("exactly one of --ads, --esco, --texts is required")
    items: list[tuple[str, str]] = []
    skipped = 0
    if args.ads:
        with _open_read(args.ads) as fh:
            for ad in corpus.parse_ads(fh):
                items.append((ad.ad_id, _ad_query_text(ad)))
    elif args.esco:
        with _open_read(args.esco) as fh:
            occupations = corpus.parse_esco(fh)
        for occ in occupations:
            text = getattr(occ, args.field)
            if text:
                items.append((occ.esco_id, text))
            else:
                skipped += 1
    else:
        with _open_read(args.texts) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                obj = json.loads(line)
                if "id" not in obj or "text" not in obj:
                    raise JobRecError(f"--texts line {lineno}: need id and text")
                items.append((str(obj["id"]), str(obj["text"])))
    embedder = _embedder_from_args(args)
    store = EmbeddingStore()
    batch = 64
    for start in range(0, len(items), batch):
        chunk = items[start : start + batch]
        vectors = embedder.embed_texts([text for _, text in chunk])
        for (id_, _), vector in zip(chunk, vectors):
            store.add(id_, vector)
    with _open_write(args.out) as fh:
        write_embeddings(store, fh)
    _report({"embedded": len(store), "skipped_empty": skipped, "dim": store.dim})
    return 0


def cmd_ad_centroids(args) -> int:
    with _open_read(args.embeddings) as fh:
        store = read_embeddings(fh)
    with _open_read(args.ads) as fh:
        ads = corpus.parse_ads(fh)
    gold = {ad.ad_id: ad.esco_id for ad in ads}
    groups: dict[str, list] = {}
    for ad_id, vector in store.items():
        if ad_id not in gold:
            raise JobRecError(f"embedding {ad_id!r} has no matching ad")
        groups.setdefault(gold[ad_id], []).append(vector)
    centroids = centroid.compute_ad_centroids(
        groups, normalize_members=not args.raw_members
    )
    with _open_write(args.out) as vec_fh, _open_write(args.out + ".meta.json") as meta_fh:
        centroid.write_centroids(centroids, centroid.AD_CENTROIDS, vec_fh, meta_fh)
    _report(
        {
            "ad_centroids": len(centroids),
            "ads_used": sum(c.n_ads for c in centroids.values()),
        }
    )
    return 0


def cmd_job_centroids(args) -> int:
    with _open_read(args.ad_centroids) as fh:
        adc_store = read_embeddings(fh)
    with _open_read(args.ad_centroids + ".meta.json") as fh:
        adc_meta = json.load(fh)
    n_ads = {k: int(v) for k, v in adc_meta.get("n_ads", {}).items()}
    ad_centroids = {
        esco_id: centroid.AdCentroid(esco_id, vector, n_ads.get(esco_id, 1))
        for esco_id, vector in adc_store.items()
    }
    with _open_read(args.descriptions) as fh:
        desc_store = read_embeddings(fh)
    with _open_read(args.esco) as fh:
        occupations = corpus.parse_esco(fh)
    job_centroids = centroid.compute_job_centroids(
        ad_centroids, dict(desc_store.items()), occupations
    )
    with _open_write(args.out) as vec_fh, _open_write(args.out + ".meta.json") as meta_fh:
        centroid.write_centroids(
            job_centroids, centroid.JOB_CENTROIDS, vec_fh, meta_fh, ad_counts=n_ads
        )
    by_source = {centroid.SOURCE_HYBRID: 0, centroid.SOURCE_DESCRIPTION: 0}
    for jc in job_centroids.values():
        by_source[jc.source] += 1
    _report({"job_centroids": len(job_centroids), "sources": by_source})
    return 0


def cmd_build_index(args) -> int:
    with _open_read(args.centroids) as fh:
        store = read_embeddings(fh)
    kind = args.kind
    meta_path = Path(args.centroids + ".meta.json")
    if not kind and meta_path.exists():
        with _open_read(meta_path) as fh:
            kind = json.load(fh).get("kind", "")
    metadata = {
        "embedder": args.embedder_label,
        "kind": kind or "",
        "built_at": args.built_at,
    }
    index = matcher.build_index(dict(store.items()), metadata)
    with _open_write(args.out) as fh:
        matcher.save_index(index, fh)
    _report({"entries": len(index), "dim": index.dim, "out": args.out})
    return 0


def _load_index(path):
    with _open_read(path) as fh:
        return matcher.load_index(fh)


def cmd_recommend(args) -> int:
    if bool(args.text) == bool(args.text_file):
        raise JobRecError("exactly one of --text, --text-file is required")
    text = args.text
    if args.text_file:
        text = Path(args.text_file).read_text(encoding="utf-8")
    index = _load_index(args.index)
    embedder = _embedder_from_args(args)
    classifier = _make_classifier(args)
    prepared = adfilter.apply_filter_mode(
        text,
        args.filter_mode,
        budget=args.budget,
        threshold=args.threshold,
        filter_=classifier,
    )
    vector = embedder.embed_texts([prepared])[0]
    results = matcher.recommend(index, vector, args.k)
    titles = {}
    if args.esco:
        with _open_read(args.esco) as fh:
            titles = {o.esco_id: o.title for o in corpus.parse_esco(fh)}
    rows = [
        {
            "rank": r.rank,
            "esco_id": r.esco_id,
            "score": r.score,
            **({"title": titles[r.esco_id]} if r.esco_id in titles else {}),
        }
        for r in results
    ]
    _report({"recommendations": rows})
    return 0


def _read_eval_queries(args):
    if bool(args.queries) == bool(args.ads):
        raise JobRecError("exactly one of --queries, --ads is required")
    if args.queries:
        golds = None
        if args.gold:
            with _open_read(args.gold) as fh:
                golds = evaluation.read_gold_labels(fh)
        with _open_read(args.queries) as fh:
            queries = evaluation.read_queries(fh, golds)
    else:
        with _open_read(args.ads) as fh:
            ads = corpus.parse_ads(fh)
        queries = [
            evaluation.RerankQuery(ad.ad_id, _ad_query_text(ad), ad.esco_id)
            for ad in ads
        ]
    if args.limit and args.limit < len(queries):
        import random

        rng = random.Random(args.sample_seed)
        queries = rng.sample(queries, args.limit)
        queries.sort(key=lambda q: q.query_id)
    return queries


def cmd_eval_rerank(args) -> int:
    index = _load_index(args.index)
    embedder = _embedder_from_args(args)
    classifier = _make_classifier(args)
    queries = _read_eval_queries(args)
    modes = [m.strip() for m in args.filter_mode.split(",") if m.strip()]
    if len(modes) > 1:
        table = evaluation.run_truncation_comparison(
            index,
            queries,
            embedder,
            modes,
            k=args.k,
            budget=args.budget,
            threshold=args.threshold,
            classifier=classifier,
        )
        if args.csv:
            writer = csv.writer(sys.stdout, lineterminator="\n")
            writer.writerow(["embedder"] + modes)
            for row in table["rows"]:
                writer.writerow(
                    [row["embedder"]] + [f"{row['cells'][m]:.3f}" for m in modes]
                )
        else:
            _report(table)
        return 0
    report = evaluation.run_rerank_eval(
        index,
        queries,
        embedder,
        modes[0] if modes else "none",
        k=args.k,
        budget=args.budget,
        threshold=args.threshold,
        classifier=classifier,
    )
    if args.csv:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(["query_id", "reciprocal_rank", "gold_rank"])
        for r in report.per_query:
            writer.writerow([r.query_id, f"{r.value:.6f}", r.gold_rank or ""])
        writer.writerow(["mrr", f"{report.aggregate:.6f}", ""])
    else:
        _report(report.as_dict())
    return 0


def cmd_eval_compare(args) -> int:
    spaces = {}
    for item in args.space:
        name, _, path = item.partition("=")
        if not name or not path:
            raise JobRecError(f"--space needs NAME=PATH, got {item!r}")
        if name in spaces:
            raise JobRecError(f"duplicate space name {name!r}")
        spaces[name] = _load_index(path)
    embedder = _embedder_from_args(args)
    queries = _read_eval_queries(args)
    table = evaluation.run_embedding_comparison(spaces, queries, embedder, k=args.k)
    if args.csv:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(["space", f"mrr_at_{args.k}"])
        for row in table["rows"]:
            writer.writerow([row["space"], f"{row['mrr']:.3f}"])
    else:
        _report(table)
    return 0


def cmd_eval_judgments(args) -> int:
    with _open_read(args.judgments) as fh:
        judgments = evaluation.read_judgments(fh)
    with _open_read(args.rankings) as fh:
        rankings = evaluation.read_rankings(fh)
    out = evaluation.run_judgment_eval(rankings, judgments, k=args.k)
    if args.csv:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        k = args.k
        writer.writerow(["resume", f"map_at_{k}", f"p_at_{k}", f"mrr_at_{k}"])
        for row in out["rows"]:
            writer.writerow(
                [
                    row["resume_id"],
                    f"{row['map_at_k']:.3f}",
                    f"{row['p_at_k']:.3f}",
                    f"{row['mrr_at_k']:.3f}",
                ]
            )
        avg = out["average"]
        writer.writerow(
            ["Average", f"{avg['map_at_k']:.3f}", f"{avg['p_at_k']:.3f}", f"{avg['mrr_at_k']:.3f}"]
        )
    else:
        _report(out)
    return 0


def _env(name, default):
    return os.environ.get(f"JOBREC_{name}", default)


def cmd_serve(args) -> int:
    from jobrec.service import ServiceConfig, create_app

    file_config = {}
    if args.config:
        with _open_read(args.config) as fh:
            file_config = json.load(fh)

    def resolve(flag_value, env_name, file_key, default, cast=str):
        if flag_value is not None:
            return flag_value
        env_value = os.environ.get(f"JOBREC_{env_name}")
        if env_value is not None:
            return cast(env_value)
        if file_key in file_config:
            return cast(file_config[file_key])
        return default

    config = ServiceConfig(
        index_path=resolve(args.index, "INDEX", "index", None),
        esco_path=resolve(args.esco, "ESCO", "esco", None),
        provider=resolve(args.provider, "PROVIDER", "provider", "builtin-hash"),
        classifier=resolve(args.classifier, "CLASSIFIER", "classifier", "baseline"),
        filter_mode=resolve(args.filter_mode, "FILTER_MODE", "filter_mode", "token-cutoff"),
        k_default=resolve(args.k_default, "K_DEFAULT", "k_default", 20, int),
        judgment_log=resolve(
            args.judgment_log, "JUDGMENT_LOG", "judgment_log", "judgments.jsonl"
        ),
        listen=resolve(args.listen, "LISTEN", "listen", "127.0.0.1:8080"),
        dim=resolve(args.dim, "DIM", "dim", DEFAULT_DIM, int),
        seed=resolve(args.seed, "SEED", "seed", DEFAULT_SEED, int),
    )
    if not config.index_path or not config.esco_path:
        raise JobRecError("serve requires --index and --esco (or env/config values)")
    app = create_app(config)
    host, _, port = config.listen.partition(":")
    import uvicorn

    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080), log_level="info")
    return 0


# --------------------------------------------------------------------------
# parser wiring
# --------------------------------------------------------------------------


def build_parser() -> CliParser:
    parser = CliParser(prog="jobrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-esco", help="validate an occupations CSV")
    p.add_argument("path")
    p.add_argument("--out", help="write the normalized CSV back out")
    p.set_defaults(func=cmd_ingest_esco)

    p = sub.add_parser("ingest-ads", help="validate an ads JSONL")
    p.add_argument("path")
    p.add_argument("--esco", help="occupations CSV for coverage stats")
    p.add_argument("--out", help="write the normalized JSONL back out")
    p.set_defaults(func=cmd_ingest_ads)

    p = sub.add_parser("export-pairs", help="export training sentence pairs")
    p.add_argument("--esco", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_pairs)

    p = sub.add_parser("filter-ads", help="shorten ad bodies to relevant text")
    p.add_argument("--ads", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--mode",
        default="token-cutoff",
        choices=adfilter.FILTER_MODES,
    )
    _add_filter_flags(p)
    p.set_defaults(func=cmd_filter_ads)

    p = sub.add_parser("embed", help="embed ads, descriptions, or raw texts")
    p.add_argument("--ads")
    p.add_argument("--esco")
    p.add_argument("--field", default="description", choices=("description", "title"))
    p.add_argument("--texts", help="JSONL with id/text records")
    p.add_argument("--out", required=True)
    _add_provider_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("ad-centroids", help="average ad embeddings per occupation")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--ads", required=True, help="ads JSONL carrying gold esco_ids")
    p.add_argument("--out", required=True)
    p.add_argument(
        "--raw-members",
        action="store_true",
        help="average raw embeddings instead of normalizing members first",
    )
    p.set_defaults(func=cmd_ad_centroids)

    p = sub.add_parser("job-centroids", help="hybrid centroids with description fallback")
    p.add_argument("--ad-centroids", required=True)
    p.add_argument("--descriptions", required=True, help="description embeddings JSONL")
    p.add_argument("--esco", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_job_centroids)

    p = sub.add_parser("build-index", help="build an index snapshot from centroids")
    p.add_argument("--centroids", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embedder-label", default="builtin-hash/d256/s0")
    p.add_argument("--kind", help="centroid kind (default: from sidecar metadata)")
    p.add_argument("--built-at", default="", help="build timestamp to stamp (default empty for reproducible bytes)")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("recommend", help="rank occupations for one text")
    p.add_argument("--index", required=True)
    p.add_argument("--text")
    p.add_argument("--text-file")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--esco", help="occupations CSV to join titles")
    p.add_argument("--filter-mode", default="none", choices=("none",) + adfilter.FILTER_MODES)
    _add_provider_flags(p)
    _add_filter_flags(p)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("eval-rerank", help="MRR@K reranking evaluation")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", help="JSONL query_id/text[/esco_id]")
    p.add_argument("--gold", help="JSONL query_id/esco_id gold labels")
    p.add_argument("--ads", help="use an ads JSONL as the query set")
    p.add_argument("--k", type=int, default=100)
    p.add_argument(
        "--filter-mode",
        default="none",
        help="preprocessing mode; a comma list emits a comparison table",
    )
    p.add_argument("--limit", type=int, help="evaluate a random sample of this size")
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--csv", action="store_true")
    _add_provider_flags(p)
    _add_filter_flags(p)
    p.set_defaults(func=cmd_eval_rerank)

    p = sub.add_parser("eval-compare", help="MRR@K across embedding spaces")
    p.add_argument(
        "--space",
        action="append",
        required=True,
        metavar="NAME=PATH",
        help="named index snapshot (repeatable)",
    )
    p.add_argument("--queries")
    p.add_argument("--gold")
    p.add_argument("--ads")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--limit", type=int)
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--csv", action="store_true")
    _add_provider_flags(p)
    p.set_defaults(func=cmd_eval_compare)

    p = sub.add_parser("eval-judgments", help="MAP/P/MRR from expert judgments")
    p.add_argument("--judgments", required=True)
    p.add_argument("--rankings", required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_eval_judgments)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--index")
    p.add_argument("--esco")
    p.add_argument("--provider")
    p.add_argument("--classifier")
    p.add_argument("--filter-mode", choices=("none",) + adfilter.FILTER_MODES)
    p.add_argument("--k-default", type=int)
    p.add_argument("--judgment-log")
    p.add_argument("--listen")
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON config file (lowest precedence)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ProtocolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except JobRecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
