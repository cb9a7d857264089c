"""Ranking metrics and experiment harnesses.

Metrics follow the binary-relevance definitions used throughout:

  reciprocal rank    1/rank of the gold item if ranked within the top K,
                     else 0 (a gold at rank 5 scores 0.2, at rank 20 0.05).
  MRR@K              arithmetic mean of reciprocal ranks across queries.
  P@K                |top-K that are relevant| / K.
  AP@K               sum of P@i at each relevant rank i <= K, divided by the
                     number of relevant items found in the top K (0 if none).
  MAP@K              mean of AP@K across queries.
  majority relevance an item is relevant iff at least half of the votes
                     cast mark it relevant.

AP@K's denominator is the number of relevant items *found in the top K*:
judgments are collected only for shown recommendations, so corpus-wide
relevant counts are unknowable by design.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

from jobrec import adfilter
from jobrec.embedding import Embedder
from jobrec.errors import EvaluationError
from jobrec.matcher import Index, recommend


@dataclass(frozen=True, slots=True)
class RankedList:
    query_id: str
    items: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.items)) != len(self.items):
            raise EvaluationError(
                f"ranked list for {self.query_id!r} contains duplicates"
            )


@dataclass(frozen=True, slots=True)
class GoldLabel:
    query_id: str
    relevant_esco_id: str


@dataclass(frozen=True, slots=True)
class Judgment:
    resume_id: str
    esco_id: str
    expert_id: str
    relevant: bool


@dataclass(slots=True)
class PerQueryResult:
    query_id: str
    value: float
    gold_rank: int | None = None


@dataclass(slots=True)
class MetricReport:
    metric: str
    k: int
    n_queries: int
    aggregate: float
    per_query: list[PerQueryResult] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "metric": self.metric,
            "k": self.k,
            "n_queries": self.n_queries,
            "aggregate": self.aggregate,
            "per_query": [
                {"query_id": r.query_id, "value": r.value, "gold_rank": r.gold_rank}
                for r in self.per_query
            ],
        }


def reciprocal_rank(ranked: Sequence[str], gold: str, k: int) -> float:
    if k < 1:
        raise EvaluationError("k must be >= 1")
    for position, esco_id in enumerate(ranked[:k], start=1):
        if esco_id == gold:
            return 1.0 / position
    return 0.0


def mrr_at_k(
    ranked_lists: Mapping[str, Sequence[str]],
    golds: Mapping[str, str],
    k: int,
) -> float:
    if not ranked_lists:
        raise EvaluationError("no ranked lists to evaluate")
    total = 0.0
    for query_id, ranked in ranked_lists.items():
        if query_id not in golds:
            raise EvaluationError(f"missing gold label for query {query_id!r}")
        total += reciprocal_rank(ranked, golds[query_id], k)
    return total / len(ranked_lists)


def majority_relevance(votes: Sequence[bool]) -> bool:
    """True iff at least 50% of the votes cast are relevant."""
    if not votes:
        raise EvaluationError("no judgments for this pair")
    return sum(votes) / len(votes) >= 0.5


def precision_at_k(ranked: Sequence[str], relevant: set[str], k: int) -> float:
    if k < 1:
        raise EvaluationError("k must be >= 1")
    if len(ranked) < k:
        raise EvaluationError(f"ranked list has {len(ranked)} items, need {k}")
    return sum(1 for esco_id in ranked[:k] if esco_id in relevant) / k


def average_precision_at_k(
    ranked: Sequence[str], relevant: set[str], k: int
) -> float:
    if k < 1:
        raise EvaluationError("k must be >= 1")
    if len(ranked) < k:
        raise EvaluationError(f"ranked list has {len(ranked)} items, need {k}")
    hits = 0
    precision_sum = 0.0
    for position, esco_id in enumerate(ranked[:k], start=1):
        if esco_id in relevant:
            hits += 1
            precision_sum += hits / position
    return precision_sum / hits if hits else 0.0


def map_at_k(
    ranked_lists: Mapping[str, Sequence[str]],
    relevant_sets: Mapping[str, set[str]],
    k: int,
) -> float:
    if not ranked_lists:
        raise EvaluationError("no ranked lists to evaluate")
    total = 0.0
    for query_id, ranked in ranked_lists.items():
        if query_id not in relevant_sets:
            raise EvaluationError(f"missing relevance set for query {query_id!r}")
        total += average_precision_at_k(ranked, relevant_sets[query_id], k)
    return total / len(ranked_lists)


def first_relevant_reciprocal_rank(
    ranked: Sequence[str], relevant: set[str], k: int
) -> float:
    """1/rank of the first relevant item within the top K, else 0; the
    multi-relevant generalization used by the human-grounded workflow."""
    if k < 1:
        raise EvaluationError("k must be >= 1")
    for position, esco_id in enumerate(ranked[:k], start=1):
        if esco_id in relevant:
            return 1.0 / position
    return 0.0


def dedup_judgments(judgments: Sequence[Judgment]) -> list[Judgment]:
    """Last write wins per (resume, esco, expert); output order is first
    appearance of each triple."""
    latest: dict[tuple[str, str, str], Judgment] = {}
    for j in judgments:
        latest[(j.resume_id, j.esco_id, j.expert_id)] = j
    return list(latest.values())


def majority_relevant_set(
    judgments: Sequence[Judgment], resume_id: str
) -> set[str]:
    """Majority-vote relevant esco_ids for one resume (votes deduped first)."""
    votes: dict[str, list[bool]] = {}
    for j in dedup_judgments(judgments):
        if j.resume_id == resume_id:
            votes.setdefault(j.esco_id, []).append(j.relevant)
    return {esco_id for esco_id, vs in votes.items() if majority_relevance(vs)}


# ---------------------------------------------------------------------------
# Harnesses
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class RerankQuery:
    query_id: str
    text: str
    gold_esco_id: str


def run_rerank_eval(
    index: Index,
    queries: Sequence[RerankQuery],
    embedder: Embedder,
    filter_mode: str = "none",
    k: int = 100,
    *,
    budget: int = adfilter.DEFAULT_TOKEN_BUDGET,
    threshold: float = adfilter.DEFAULT_THRESHOLD,
    classifier: adfilter.RelevanceFilter | None = None,
) -> MetricReport:
    """Embed each query (after filter-mode preprocessing), rank the whole
    index, and report MRR@K with per-query detail."""
    if not queries:
        raise EvaluationError("no queries to evaluate")
    per_query: list[PerQueryResult] = []
    total = 0.0
    for query in queries:
        try:
            text = adfilter.apply_filter_mode(
                query.text,
                filter_mode,
                budget=budget,
                threshold=threshold,
                filter_=classifier,
            )
            vector = embedder.embed_texts([text])[0]
        except Exception as exc:
            raise EvaluationError(
                f"query {query.query_id!r}: {exc}"
            ) from exc
        ranked = [r.esco_id for r in recommend(index, vector, k)]
        rank = None
        if query.gold_esco_id in ranked:
            rank = ranked.index(query.gold_esco_id) + 1
        rr = reciprocal_rank(ranked, query.gold_esco_id, k)
        total += rr
        per_query.append(PerQueryResult(query.query_id, rr, gold_rank=rank))
    return MetricReport(
        metric="mrr",
        k=k,
        n_queries=len(queries),
        aggregate=total / len(queries),
        per_query=per_query,
    )


def run_truncation_comparison(
    index: Index,
    queries: Sequence[RerankQuery],
    embedder: Embedder,
    modes: Sequence[str],
    k: int = 100,
    **kwargs,
) -> dict:
    """One row per embedder, one column per truncation mode, mirroring the
    two-column truncation comparison."""
    if not modes:
        raise EvaluationError("no filter modes requested")
    cells = {}
    reports = {}
    for mode in modes:
        report = run_rerank_eval(index, queries, embedder, mode, k, **kwargs)
        cells[mode] = report.aggregate
        reports[mode] = report.as_dict()
    return {
        "metric": "mrr",
        "k": k,
        "rows": [{"embedder": embedder.info().model, "cells": cells}],
        "reports": reports,
    }


def run_embedding_comparison(
    spaces: Mapping[str, Index],
    queries: Sequence[RerankQuery],
    embedder: Embedder,
    k: int = 100,
) -> dict:
    """MRR@K per named embedding space over one query set.

    All spaces must cover the same occupation ids; rows are ordered by
    space name so reruns are byte-stable.
    """
    if not spaces:
        raise EvaluationError("no embedding spaces to compare")
    names = sorted(spaces)
    id_sets = {name: set(spaces[name].ids) for name in names}
    reference = id_sets[names[0]]
    for name in names[1:]:
        if id_sets[name] != reference:
            raise EvaluationError(
                f"occupation set mismatch between spaces {names[0]!r} and {name!r}"
            )
    rows = []
    for name in names:
        report = run_rerank_eval(spaces[name], queries, embedder, "none", k)
        rows.append(
            {"space": name, "mrr": report.aggregate, "n_queries": report.n_queries}
        )
    return {"metric": "mrr", "k": k, "rows": rows}


# ---------------------------------------------------------------------------
# Human-judgment evaluation over stored rankings and votes
# ---------------------------------------------------------------------------


def judgment_metrics(
    ranked: Sequence[str], judgments: Sequence[Judgment], resume_id: str, k: int
) -> dict:
    """MAP/P/MRR at K for one resume from expert votes on its ranking."""
    relevant = majority_relevant_set(judgments, resume_id)
    deduped = [j for j in dedup_judgments(judgments) if j.resume_id == resume_id]
    return {
        "resume_id": resume_id,
        "k": k,
        "map_at_k": average_precision_at_k(ranked, relevant, k),
        "p_at_k": precision_at_k(ranked, relevant, k),
        "mrr_at_k": first_relevant_reciprocal_rank(ranked, relevant, k),
        "n_experts": len({j.expert_id for j in deduped}),
        "relevant_count": sum(1 for esco_id in ranked[:k] if esco_id in relevant),
    }


def run_judgment_eval(
    rankings: Mapping[str, Sequence[str]],
    judgments: Sequence[Judgment],
    k: int = 20,
) -> dict:
    """Per-resume MAP@K / P@K / MRR@K plus the across-resume averages."""
    if not rankings:
        raise EvaluationError("no rankings to evaluate")
    rows = []
    for resume_id in sorted(rankings):
        rows.append(judgment_metrics(rankings[resume_id], judgments, resume_id, k))
    n = len(rows)
    average = {
        "map_at_k": sum(r["map_at_k"] for r in rows) / n,
        "p_at_k": sum(r["p_at_k"] for r in rows) / n,
        "mrr_at_k": sum(r["mrr_at_k"] for r in rows) / n,
    }
    return {"k": k, "rows": rows, "average": average}


# ---------------------------------------------------------------------------
# File formats used by the harness CLI
# ---------------------------------------------------------------------------


def read_gold_labels(stream: IO[str]) -> dict[str, str]:
    golds: dict[str, str] = {}
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EvaluationError(f"line {lineno}: invalid JSON: {exc.msg}") from exc
        if "query_id" not in obj or "esco_id" not in obj:
            raise EvaluationError(f"line {lineno}: need query_id and esco_id")
        query_id = str(obj["query_id"])
        if query_id in golds:
            raise EvaluationError(f"line {lineno}: duplicate gold for {query_id!r}")
        golds[query_id] = str(obj["esco_id"])
    return golds


def read_queries(stream: IO[str], golds: Mapping[str, str] | None = None) -> list[RerankQuery]:
    """JSONL ``{"query_id", "text"[, "esco_id"]}``; a separate gold mapping
    overrides inline labels."""
    queries: list[RerankQuery] = []
    seen: set[str] = set()
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EvaluationError(f"line {lineno}: invalid JSON: {exc.msg}") from exc
        if "query_id" not in obj or "text" not in obj:
            raise EvaluationError(f"line {lineno}: need query_id and text")
        query_id = str(obj["query_id"])
        if query_id in seen:
            raise EvaluationError(f"line {lineno}: duplicate query {query_id!r}")
        seen.add(query_id)
        gold = (golds or {}).get(query_id, obj.get("esco_id"))
        if not gold:
            raise EvaluationError(f"line {lineno}: no gold label for {query_id!r}")
        queries.append(RerankQuery(query_id, str(obj["text"]), str(gold)))
    return queries


def read_judgments(stream: IO[str]) -> list[Judgment]:
    judgments: list[Judgment] = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EvaluationError(f"line {lineno}: invalid JSON: {exc.msg}") from exc
        try:
            judgments.append(
                Judgment(
                    resume_id=str(obj["resume_id"]),
                    esco_id=str(obj["esco_id"]),
                    expert_id=str(obj["expert_id"]),
                    relevant=bool(obj["relevant"]),
                )
            )
        except KeyError as exc:
            raise EvaluationError(f"line {lineno}: missing key {exc}") from None
    return judgments


def read_rankings(stream: IO[str]) -> dict[str, list[str]]:
    """JSONL ``{"query_id": ..., "ranking": [...]}``."""
    rankings: dict[str, list[str]] = {}
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EvaluationError(f"line {lineno}: invalid JSON: {exc.msg}") from exc
        if "query_id" not in obj or "ranking" not in obj:
            raise EvaluationError(f"line {lineno}: need query_id and ranking")
        query_id = str(obj["query_id"])
        if query_id in rankings:
            raise EvaluationError(f"line {lineno}: duplicate ranking for {query_id!r}")
        rankings[query_id] = [str(x) for x in obj["ranking"]]
    return rankings
