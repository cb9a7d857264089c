"""HTTP service over an immutable index snapshot: recommendations,
occupation lookup, durable judgment recording, and judgment metrics.

All endpoints speak UTF-8 JSON. The judgment log is append-only JSONL with
fsync on every append; repeated (resume, job, expert) triples are resolved
last-write-wins at read time. Metrics are computed by the evaluation module
on the session's served ranking; the service adds no metric logic of its
own.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from jobrec import adfilter, evaluation
from jobrec.corpus import EscoOccupation
from jobrec.embedding import Embedder, make_embedder
from jobrec.errors import JobRecError, ProtocolError
from jobrec.evaluation import Judgment
from jobrec.matcher import Index, load_index, recommend

DEFAULT_K = 20
MAX_K = 100


@dataclass
class ServiceConfig:
    index_path: str
    esco_path: str
    provider: str = "builtin-hash"
    classifier: str = "baseline"
    filter_mode: str = "token-cutoff"
    k_default: int = DEFAULT_K
    judgment_log: str = "judgments.jsonl"
    listen: str = "127.0.0.1:8080"
    dim: int = 256
    seed: int = 0
    threshold: float = adfilter.DEFAULT_THRESHOLD
    budget: int = adfilter.DEFAULT_TOKEN_BUDGET

    def __post_init__(self):
        if self.k_default < 1:
            raise JobRecError("k_default must be >= 1")
        if self.filter_mode not in ("none",) + adfilter.FILTER_MODES:
            raise JobRecError(f"unknown filter_mode {self.filter_mode!r}")


@dataclass
class ResumeSession:
    resume_id: str
    text: str
    created: float
    updated: float
    last_ranked: list = field(default_factory=list)
    served: set = field(default_factory=set)


class SessionStore:
    """Concurrent reads, exclusive per-session updates."""

    def __init__(self):
        self._sessions: dict[str, ResumeSession] = {}
        self._lock = threading.RLock()

    def create(self, text: str) -> ResumeSession:
        with self._lock:
            resume_id = uuid.uuid4().hex
            now = time.time()
            session = ResumeSession(resume_id, text, created=now, updated=now)
            self._sessions[resume_id] = session
            return session

    def get(self, resume_id: str) -> ResumeSession | None:
        with self._lock:
            return self._sessions.get(resume_id)

    def update(self, resume_id: str, text: str) -> ResumeSession | None:
        with self._lock:
            session = self._sessions.get(resume_id)
            if session is not None:
                session.text = text
                session.updated = time.time()
            return session

    def record_served(self, resume_id: str, ranked: list[str]) -> None:
        with self._lock:
            session = self._sessions[resume_id]
            session.last_ranked = list(ranked)
            session.served.update(ranked)


class JudgmentLog:
    """Append-only JSONL with fsync on every append (single writer)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.touch(exist_ok=True)

    def append(self, judgment: Judgment) -> None:
        record = {
            "resume_id": judgment.resume_id,
            "esco_id": judgment.esco_id,
            "expert_id": judgment.expert_id,
            "relevant": judgment.relevant,
        }
        line = json.dumps(record, ensure_ascii=False) + "\n"
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())

    def read_all(self) -> list[Judgment]:
        with self._lock:
            with open(self.path, "r", encoding="utf-8") as fh:
                return evaluation.read_judgments(fh)


class RecommendRequest(BaseModel):
    text: str
    k: int | None = Field(default=None, ge=1, le=MAX_K)
    resume_id: str | None = None


class JudgmentRequest(BaseModel):
    resume_id: str
    esco_id: str
    expert_id: str
    relevant: bool


def create_app(
    config: ServiceConfig,
    *,
    index: Index | None = None,
    occupations: list[EscoOccupation] | None = None,
    embedder: Embedder | None = None,
    classifier: adfilter.RelevanceFilter | None = None,
) -> FastAPI:
    """Wire the service; objects may be injected for tests, otherwise they
    load from the configured paths/endpoints."""
    if index is None:
        with open(config.index_path, "r", encoding="utf-8", newline="") as fh:
            index = load_index(fh)
    if occupations is None:
        from jobrec.corpus import parse_esco

        with open(config.esco_path, "r", encoding="utf-8", newline="") as fh:
            occupations = parse_esco(fh)
    if embedder is None:
        embedder = make_embedder(config.provider, dim=config.dim, seed=config.seed)
    if classifier is None and config.filter_mode == "classifier-remote":
        if config.classifier in ("baseline", ""):
            raise JobRecError("classifier-remote filter_mode needs a classifier URL")
        classifier = adfilter.RemoteClassifierFilter(config.classifier)
    elif classifier is None and config.filter_mode == "classifier-baseline":
        classifier = adfilter.BaselineFilter()

    # probe embed validates the provider's real output dim at startup; for
    # remote providers info() then reuses the probe's cached response
    probe = embedder.embed_texts(["startup dimension probe"])[0]
    if probe.shape[0] != index.dim:
        raise JobRecError(
            f"probe embed returned dim {probe.shape[0]}, index needs {index.dim}"
        )
    provider_info = embedder.info()
    if provider_info.dim != index.dim:
        raise JobRecError(
            f"provider dim {provider_info.dim} != index dim {index.dim}"
        )

    corpus_by_id = {occ.esco_id: occ for occ in occupations}
    app = FastAPI(title="jobrec", version="0.1.0")
    state = {"index": index}
    sessions = SessionStore()
    log = JudgmentLog(config.judgment_log)

    def current_index() -> Index:
        return state["index"]

    def preprocess(text: str) -> str:
        return adfilter.apply_filter_mode(
            text,
            config.filter_mode,
            budget=config.budget,
            threshold=config.threshold,
            filter_=classifier,
        )

    @app.get("/api/health")
    def health():
        idx = current_index()
        return {
            "status": "ok",
            "index": {
                "count": len(idx),
                "dim": idx.dim,
                "metadata": idx.metadata,
            },
            "provider": {"model": provider_info.model, "dim": provider_info.dim},
        }

    @app.post("/api/recommend")
    def recommend_endpoint(request: RecommendRequest):
        if not request.text.strip():
            raise HTTPException(status_code=400, detail="text must be non-empty")
        k = request.k or config.k_default
        if request.resume_id is not None:
            session = sessions.update(request.resume_id, request.text)
            if session is None:
                raise HTTPException(
                    status_code=404, detail=f"unknown resume session {request.resume_id!r}"
                )
        else:
            session = sessions.create(request.text)
        try:
            text = preprocess(request.text)
            vector = embedder.embed_texts([text])[0]
        except ProtocolError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        except JobRecError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        idx = current_index()
        if vector.shape[0] != idx.dim:
            raise HTTPException(
                status_code=422,
                detail=f"embedding dim {vector.shape[0]} != index dim {idx.dim}",
            )
        results = recommend(idx, vector, k)
        sessions.record_served(session.resume_id, [r.esco_id for r in results])
        payload = []
        for r in results:
            occ = corpus_by_id.get(r.esco_id)
            payload.append(
                {
                    "esco_id": r.esco_id,
                    "title": occ.title if occ else "",
                    "description": occ.description if occ else "",
                    "score": r.score,
                    "rank": r.rank,
                }
            )
        return {"resume_id": session.resume_id, "recommendations": payload}

    @app.get("/api/jobs/{esco_id}")
    def job_lookup(esco_id: str):
        occ = corpus_by_id.get(esco_id)
        if occ is None:
            raise HTTPException(status_code=404, detail=f"unknown esco_id {esco_id!r}")
        return {
            "esco_id": occ.esco_id,
            "title": occ.title,
            "description": occ.description,
            "skills": list(occ.skills),
            "synonyms": list(occ.synonyms),
        }

    @app.post("/api/judgments")
    def record_judgment(request: JudgmentRequest):
        for key in ("resume_id", "esco_id", "expert_id"):
            if not getattr(request, key).strip():
                raise HTTPException(status_code=400, detail=f"{key} must be non-empty")
        session = sessions.get(request.resume_id)
        if session is None:
            raise HTTPException(
                status_code=404, detail=f"unknown resume session {request.resume_id!r}"
            )
        if request.esco_id not in session.served:
            raise HTTPException(
                status_code=422,
                detail=f"esco_id {request.esco_id!r} was never served for this resume",
            )
        log.append(
            Judgment(
                resume_id=request.resume_id,
                esco_id=request.esco_id,
                expert_id=request.expert_id,
                relevant=request.relevant,
            )
        )
        return {"status": "recorded"}

    @app.get("/api/metrics/{resume_id}")
    def metrics(resume_id: str, k: int = DEFAULT_K):
        session = sessions.get(resume_id)
        if session is None:
            raise HTTPException(
                status_code=404, detail=f"unknown resume session {resume_id!r}"
            )
        judgments = [j for j in log.read_all() if j.resume_id == resume_id]
        if not judgments:
            raise HTTPException(
                status_code=409, detail="no judgments recorded for this resume yet"
            )
        try:
            return evaluation.judgment_metrics(
                session.last_ranked, judgments, resume_id, k
            )
        except JobRecError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/api/admin/reload")
    def reload_index():
        with open(config.index_path, "r", encoding="utf-8", newline="") as fh:
            fresh = load_index(fh)
        if fresh.dim != provider_info.dim:
            raise HTTPException(
                status_code=422,
                detail=f"new index dim {fresh.dim} != provider dim {provider_info.dim}",
            )
        state["index"] = fresh  # atomic swap; in-flight requests keep their snapshot
        return {"status": "reloaded", "count": len(fresh)}

    return app
