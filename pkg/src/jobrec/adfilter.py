"""Advertisement shortening: paragraph segmentation, token-budget cutoff,
and relevance filtering through the lexical baseline or a remote classifier.

Remote classifier wire protocol: ``POST {base}/classify`` with body
``{"paragraphs": [...]}``, response ``{"scores": [...], "labels": [...]}``
index-aligned with the request.

Cue lexicon config (JSON):
``{"cues": [...], "weights": {"cue": w1, "position": w2, "length": w3, "bias": w0}}``
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import IO, Protocol, Sequence

import httpx

from jobrec.embedding import tokenize
from jobrec.errors import EvaluationError, JobRecError, ProtocolError

DEFAULT_TOKEN_BUDGET = 512
DEFAULT_THRESHOLD = 0.5

_PARAGRAPH_SPLIT_RE = re.compile(r"\n[ \t\r]*\n[\s]*")

FILTER_MODES = ("token-cutoff", "classifier-baseline", "classifier-remote")


@dataclass(frozen=True, slots=True)
class Paragraph:
    ad_id: str
    index: int
    text: str
    label: bool | None = None


@dataclass(frozen=True, slots=True)
class FilterVerdict:
    keep: bool
    score: float


@dataclass(frozen=True, slots=True)
class ClassifierReport:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def segment_paragraphs(body: str, ad_id: str = "") -> list[Paragraph]:
    """Split on runs of one or more blank lines (whitespace-tolerant);
    segments are trimmed, empties dropped, indices consecutive from 0."""
    if not body.strip():
        raise JobRecError("advertisement body is empty after trimming")
    parts = [p.strip() for p in _PARAGRAPH_SPLIT_RE.split(body)]
    texts = [p for p in parts if p]
    return [Paragraph(ad_id=ad_id, index=i, text=t) for i, t in enumerate(texts)]


class TokenCounter(Protocol):
    def count(self, text: str) -> int: ...

    def truncate(self, text: str, budget: int) -> str: ...


class WhitespaceTokenCounter:
    """Default counter: whitespace-split words. The true wordpiece counter
    is model-specific and pluggable behind this interface."""

    def count(self, text: str) -> int:
        return len(text.split())

    def truncate(self, text: str, budget: int) -> str:
        return " ".join(text.split()[:budget])


def truncate_at_token_limit(
    paragraphs: Sequence[Paragraph],
    budget: int = DEFAULT_TOKEN_BUDGET,
    counter: TokenCounter | None = None,
) -> str:
    """Concatenate paragraphs in order, stopping before the first one that
    would push the total past ``budget``; a first paragraph that alone
    exceeds the budget is hard-cut at the boundary."""
    if budget < 1:
        raise JobRecError("token budget must be >= 1")
    counter = counter or WhitespaceTokenCounter()
    kept: list[str] = []
    used = 0
    for paragraph in paragraphs:
        n = counter.count(paragraph.text)
        if used + n > budget:
            if not kept:
                return counter.truncate(paragraph.text, budget)
            break
        kept.append(paragraph.text)
        used += n
    return "\n\n".join(kept)


class RelevanceFilter(Protocol):
    def score_paragraphs(self, texts: Sequence[str]) -> list[float]: ...


@dataclass(frozen=True, slots=True)
class CueConfig:
    cues: frozenset[str]
    w_cue: float
    w_position: float
    w_length: float
    bias: float


def load_cue_config(stream: IO[str]) -> CueConfig:
    obj = json.load(stream)
    try:
        weights = obj["weights"]
        return CueConfig(
            cues=frozenset(tokenize(" ".join(obj["cues"]))),
            w_cue=float(weights["cue"]),
            w_position=float(weights["position"]),
            w_length=float(weights["length"]),
            bias=float(weights["bias"]),
        )
    except (KeyError, TypeError) as exc:
        raise JobRecError(f"bad cue config: missing {exc}") from exc


@lru_cache(maxsize=1)
def default_cue_config() -> CueConfig:
    with (resources.files("jobrec") / "data" / "cue_config.json").open(
        "r", encoding="utf-8"
    ) as fh:
        return load_cue_config(fh)


def baseline_score(
    paragraph: Paragraph, config: CueConfig | None = None
) -> float:
    """Deterministic lexical relevance score in [0, 1].

    Logistic over three features: cue-term hits (token matches against the
    lexicon), position (1 / (1 + index)), and capped length
    (min(tokens, 40) / 40).
    """
    config = config or default_cue_config()
    tokens = tokenize(paragraph.text)
    hits = sum(1 for t in tokens if t in config.cues)
    position = 1.0 / (1.0 + paragraph.index)
    length = min(len(tokens), 40) / 40.0
    z = (
        config.bias
        + config.w_cue * hits
        + config.w_position * position
        + config.w_length * length
    )
    return 1.0 / (1.0 + math.exp(-z))


class BaselineFilter:
    """Transparent lexical stand-in for a trained paragraph classifier."""

    def __init__(self, config: CueConfig | None = None):
        self.config = config or default_cue_config()

    def score_paragraphs(self, texts: Sequence[str]) -> list[float]:
        return [
            baseline_score(Paragraph(ad_id="", index=i, text=t), self.config)
            for i, t in enumerate(texts)
        ]


class RemoteClassifierFilter:
    """Client for the remote classifier protocol; shareable across threads."""

    def __init__(self, base_url: str, client: httpx.Client | None = None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)

    def score_paragraphs(self, texts: Sequence[str]) -> list[float]:
        if not texts:
            return []
        endpoint = f"{self.base_url}/classify"
        try:
            response = self._client.post(endpoint, json={"paragraphs": list(texts)})
        except httpx.HTTPError as exc:
            raise ProtocolError(f"transport failure: {exc}", endpoint=endpoint) from exc
        if response.status_code != 200:
            raise ProtocolError(
                f"status {response.status_code} for {len(texts)} paragraphs",
                endpoint=endpoint,
            )
        try:
            payload = response.json()
        except ValueError as exc:
            raise ProtocolError("response is not JSON", endpoint=endpoint) from exc
        for key in ("scores", "labels"):
            if key not in payload or not isinstance(payload[key], list):
                raise ProtocolError(f"response missing list {key!r}", endpoint=endpoint)
        scores = payload["scores"]
        if len(scores) != len(texts) or len(payload["labels"]) != len(texts):
            raise ProtocolError(
                f"count mismatch: {len(texts)} paragraphs, "
                f"{len(scores)} scores, {len(payload['labels'])} labels",
                endpoint=endpoint,
            )
        out = []
        for i, s in enumerate(scores):
            if not isinstance(s, (int, float)) or not (0.0 <= float(s) <= 1.0):
                raise ProtocolError(f"score {i} = {s!r} outside [0, 1]", endpoint=endpoint)
            out.append(float(s))
        return out


def filter_relevant(
    paragraphs: Sequence[Paragraph],
    filter_: RelevanceFilter,
    threshold: float = DEFAULT_THRESHOLD,
    *,
    fallback_budget: int = DEFAULT_TOKEN_BUDGET,
    counter: TokenCounter | None = None,
) -> tuple[str, list[FilterVerdict]]:
    """Keep paragraphs scoring at or above the threshold (original order).

    When the filter rejects everything the token-limit cutoff of the full
    body is returned instead, so the result is never empty.
    """
    scores = filter_.score_paragraphs([p.text for p in paragraphs])
    verdicts = [FilterVerdict(keep=s >= threshold, score=s) for s in scores]
    kept = [p.text for p, v in zip(paragraphs, verdicts) if v.keep]
    if kept:
        return "\n\n".join(kept), verdicts
    return truncate_at_token_limit(paragraphs, fallback_budget, counter), verdicts


def apply_filter_mode(
    text: str,
    mode: str,
    *,
    budget: int = DEFAULT_TOKEN_BUDGET,
    threshold: float = DEFAULT_THRESHOLD,
    counter: TokenCounter | None = None,
    filter_: RelevanceFilter | None = None,
) -> str:
    """Preprocess query/advertisement text per filter mode.

    ``none`` passes the text through; the other modes segment into
    paragraphs first. ``classifier-remote`` requires ``filter_``.
    """
    if mode == "none":
        return text
    paragraphs = segment_paragraphs(text)
    if mode == "token-cutoff":
        return truncate_at_token_limit(paragraphs, budget, counter)
    if mode == "classifier-baseline":
        chosen = filter_ or BaselineFilter()
    elif mode == "classifier-remote":
        if filter_ is None:
            raise JobRecError("classifier-remote mode requires a classifier endpoint")
        chosen = filter_
    else:
        raise JobRecError(f"unknown filter mode {mode!r}")
    filtered, _ = filter_relevant(
        paragraphs, chosen, threshold, fallback_budget=budget, counter=counter
    )
    return filtered


def evaluate_filter(
    verdicts: Sequence[bool], labels: Sequence[bool]
) -> ClassifierReport:
    """Confusion-matrix accuracy/precision/recall/F1, positive = relevant."""
    if len(verdicts) != len(labels):
        raise EvaluationError(
            f"length mismatch: {len(verdicts)} verdicts, {len(labels)} labels"
        )
    if not verdicts:
        raise EvaluationError("need at least one verdict/label pair")
    tp = sum(1 for v, l in zip(verdicts, labels) if v and l)
    fp = sum(1 for v, l in zip(verdicts, labels) if v and not l)
    fn = sum(1 for v, l in zip(verdicts, labels) if not v and l)
    tn = sum(1 for v, l in zip(verdicts, labels) if not v and not l)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return ClassifierReport(
        accuracy=(tp + tn) / len(verdicts),
        precision=precision,
        recall=recall,
        f1=f1,
    )
