import concurrent.futures
import json

import httpx
import pytest
from fastapi.testclient import TestClient

from jobrec.corpus import EscoOccupation
from jobrec.embedding import HashEmbedder, RemoteEmbedder
from jobrec.evaluation import Judgment, judgment_metrics
from jobrec.matcher import build_index, recommend
from jobrec.service import JudgmentLog, ServiceConfig, create_app

N_OCC = 30
DIM = 64


def make_corpus():
    occupations = []
    for i in range(N_OCC):
        occupations.append(
            EscoOccupation(
                esco_id=f"occ{i:03d}",
                title=f"Occupation {i:03d}",
                description=f"occupation {i} duty{i}a duty{i}b duty{i}c skill{i}x",
                skills=(f"skill{i}x", f"skill{i}y"),
            )
        )
    return occupations


@pytest.fixture()
def setup(tmp_path):
    occupations = make_corpus()
    embedder = HashEmbedder(dim=DIM, seed=0)
    vectors = {
        occ.esco_id: embedder.embed_texts([occ.description])[0]
        for occ in occupations
    }
    index = build_index(vectors, {"embedder": embedder.info().model, "kind": "desc"})
    config = ServiceConfig(
        index_path=str(tmp_path / "index.cbidx.json"),
        esco_path=str(tmp_path / "occupations.csv"),
        provider="builtin-hash",
        filter_mode="none",
        judgment_log=str(tmp_path / "judgments.jsonl"),
        dim=DIM,
    )
    app = create_app(
        config, index=index, occupations=occupations, embedder=embedder
    )
    return TestClient(app), index, occupations, embedder, config


class TestRecommendEndpoint:
    def test_self_similarity_rank_one(self, setup):
        client, index, occupations, embedder, _ = setup
        occ = occupations[7]
        response = client.post("/api/recommend", json={"text": occ.description, "k": 5})
        assert response.status_code == 200
        body = response.json()
        assert body["recommendations"][0]["esco_id"] == occ.esco_id
        assert body["recommendations"][0]["score"] == pytest.approx(1.0, abs=1e-12)
        assert body["recommendations"][0]["title"] == occ.title
        assert body["resume_id"]

    def test_default_k_twenty(self, setup):
        client, *_ = setup
        response = client.post("/api/recommend", json={"text": "duty3a skill3x occupation"})
        assert response.status_code == 200
        assert len(response.json()["recommendations"]) == 20

    def test_empty_text_400(self, setup):
        client, *_ = setup
        assert client.post("/api/recommend", json={"text": "   "}).status_code == 400

    def test_k_out_of_range_422(self, setup):
        client, *_ = setup
        assert (
            client.post("/api/recommend", json={"text": "x", "k": 0}).status_code == 422
        )
        assert (
            client.post("/api/recommend", json={"text": "x", "k": 101}).status_code
            == 422
        )

    def test_session_reuse_and_update(self, setup):
        client, _, occupations, _, _ = setup
        first = client.post(
            "/api/recommend", json={"text": occupations[0].description}
        ).json()
        resume_id = first["resume_id"]
        second = client.post(
            "/api/recommend",
            json={"text": occupations[1].description, "resume_id": resume_id},
        ).json()
        assert second["resume_id"] == resume_id
        assert (
            second["recommendations"][0]["esco_id"] == occupations[1].esco_id
        )

    def test_unknown_session_404(self, setup):
        client, *_ = setup
        response = client.post(
            "/api/recommend", json={"text": "x", "resume_id": "nope"}
        )
        assert response.status_code == 404

    def test_matches_library_call(self, setup):
        client, index, occupations, embedder, _ = setup
        text = occupations[3].description
        via_api = client.post("/api/recommend", json={"text": text, "k": 10}).json()
        direct = recommend(index, embedder.embed_texts([text])[0], 10)
        assert [r["esco_id"] for r in via_api["recommendations"]] == [
            r.esco_id for r in direct
        ]
        assert [r["score"] for r in via_api["recommendations"]] == [
            r.score for r in direct
        ]


class TestJobLookup:
    def test_known_id(self, setup):
        client, _, occupations, _, _ = setup
        response = client.get(f"/api/jobs/{occupations[5].esco_id}")
        assert response.status_code == 200
        assert response.json()["title"] == occupations[5].title
        assert response.json()["skills"] == list(occupations[5].skills)

    def test_unknown_id_404(self, setup):
        client, *_ = setup
        assert client.get("/api/jobs/zzz").status_code == 404


class TestJudgments:
    def _serve(self, client, text, k=5):
        return client.post("/api/recommend", json={"text": text, "k": k}).json()

    def test_store_and_metrics_roundtrip(self, setup):
        client, _, occupations, _, config = setup
        served = self._serve(client, occupations[0].description, k=5)
        resume_id = served["resume_id"]
        for rec in served["recommendations"]:
            response = client.post(
                "/api/judgments",
                json={
                    "resume_id": resume_id,
                    "esco_id": rec["esco_id"],
                    "expert_id": "e1",
                    "relevant": True,
                },
            )
            assert response.status_code == 200
        metrics = client.get(f"/api/metrics/{resume_id}", params={"k": 5}).json()
        assert metrics["map_at_k"] == 1.0
        assert metrics["p_at_k"] == 1.0
        assert metrics["mrr_at_k"] == 1.0
        assert metrics["n_experts"] == 1
        assert metrics["relevant_count"] == 5

    def test_never_served_esco_id_422(self, setup):
        client, _, occupations, _, _ = setup
        served = self._serve(client, occupations[0].description, k=3)
        response = client.post(
            "/api/judgments",
            json={
                "resume_id": served["resume_id"],
                "esco_id": "occ029",
                "expert_id": "e1",
                "relevant": True,
            },
        )
        assert response.status_code == 422

    def test_unknown_session_404(self, setup):
        client, *_ = setup
        response = client.post(
            "/api/judgments",
            json={"resume_id": "nope", "esco_id": "x", "expert_id": "e", "relevant": True},
        )
        assert response.status_code == 404

    def test_metrics_409_without_judgments(self, setup):
        client, _, occupations, _, _ = setup
        served = self._serve(client, occupations[0].description)
        assert client.get(f"/api/metrics/{served['resume_id']}").status_code == 409

    def test_rejudge_last_write_wins(self, setup):
        client, _, occupations, _, config = setup
        served = self._serve(client, occupations[0].description, k=2)
        resume_id = served["resume_id"]
        top = served["recommendations"][0]["esco_id"]
        second = served["recommendations"][1]["esco_id"]
        for esco_id in (top, second):
            client.post(
                "/api/judgments",
                json={
                    "resume_id": resume_id,
                    "esco_id": esco_id,
                    "expert_id": "e1",
                    "relevant": True,
                },
            )
        client.post(
            "/api/judgments",
            json={
                "resume_id": resume_id,
                "esco_id": second,
                "expert_id": "e1",
                "relevant": False,
            },
        )
        metrics = client.get(f"/api/metrics/{resume_id}", params={"k": 2}).json()
        assert metrics["p_at_k"] == 0.5
        assert metrics["relevant_count"] == 1

    def test_majority_boundary_five_of_ten(self, setup):
        client, _, occupations, _, _ = setup
        served = self._serve(client, occupations[0].description, k=2)
        resume_id = served["resume_id"]
        top = served["recommendations"][0]["esco_id"]
        second = served["recommendations"][1]["esco_id"]
        for i in range(10):
            client.post(
                "/api/judgments",
                json={
                    "resume_id": resume_id,
                    "esco_id": top,
                    "expert_id": f"expert{i}",
                    "relevant": i < 5,  # exactly 50% -> relevant
                },
            )
            client.post(
                "/api/judgments",
                json={
                    "resume_id": resume_id,
                    "esco_id": second,
                    "expert_id": f"expert{i}",
                    "relevant": i < 4,  # 40% -> not relevant
                },
            )
        metrics = client.get(f"/api/metrics/{resume_id}", params={"k": 2}).json()
        assert metrics["n_experts"] == 10
        assert metrics["relevant_count"] == 1
        assert metrics["p_at_k"] == 0.5
        assert metrics["mrr_at_k"] == 1.0

    def test_metrics_equal_evaluation_module(self, setup):
        client, _, occupations, _, config = setup
        served = self._serve(client, occupations[0].description, k=4)
        resume_id = served["resume_id"]
        ranked = [r["esco_id"] for r in served["recommendations"]]
        judgments = []
        for i, esco_id in enumerate(ranked):
            for e in range(3):
                relevant = (i + e) % 2 == 0
                judgments.append(Judgment(resume_id, esco_id, f"e{e}", relevant))
                client.post(
                    "/api/judgments",
                    json={
                        "resume_id": resume_id,
                        "esco_id": esco_id,
                        "expert_id": f"e{e}",
                        "relevant": relevant,
                    },
                )
        via_api = client.get(f"/api/metrics/{resume_id}", params={"k": 4}).json()
        direct = judgment_metrics(ranked, judgments, resume_id, 4)
        assert via_api == direct


class TestConcurrency:
    def test_concurrent_recommends_match_library(self, setup):
        client, index, occupations, embedder, _ = setup
        texts = [occupations[i % N_OCC].description for i in range(40)]

        def call(text):
            response = client.post("/api/recommend", json={"text": text, "k": 10})
            assert response.status_code == 200
            return response.json()["recommendations"]

        with concurrent.futures.ThreadPoolExecutor(max_workers=40) as pool:
            results = list(pool.map(call, texts))
        for text, got in zip(texts, results):
            expected = recommend(index, embedder.embed_texts([text])[0], 10)
            assert [r["esco_id"] for r in got] == [r.esco_id for r in expected]
            assert [r["score"] for r in got] == [r.score for r in expected]


class TestHealthAndReload:
    def test_health_shape(self, setup):
        client, index, _, embedder, _ = setup
        body = client.get("/api/health").json()
        assert body["status"] == "ok"
        assert body["index"]["count"] == len(index)
        assert body["provider"]["dim"] == DIM

    def test_provider_failure_502(self, tmp_path):
        occupations = make_corpus()
        good = HashEmbedder(dim=DIM, seed=0)
        vectors = {
            occ.esco_id: good.embed_texts([occ.description])[0] for occ in occupations
        }
        index = build_index(vectors, {})

        calls = {"n": 0}

        def flaky(request):
            calls["n"] += 1
            if calls["n"] <= 1:  # allow the startup probe, then fail
                return httpx.Response(
                    200,
                    json={"model": "fake", "dim": DIM, "vectors": [[1.0] * DIM]},
                )
            raise httpx.ConnectError("provider down")

        embedder = RemoteEmbedder(
            "http://provider",
            client=httpx.Client(transport=httpx.MockTransport(flaky)),
        )
        config = ServiceConfig(
            index_path=str(tmp_path / "i.cbidx.json"),
            esco_path=str(tmp_path / "o.csv"),
            provider="http://provider",
            filter_mode="none",
            judgment_log=str(tmp_path / "j.jsonl"),
            dim=DIM,
        )
        app = create_app(config, index=index, occupations=occupations, embedder=embedder)
        client = TestClient(app)
        assert client.post("/api/recommend", json={"text": "hello"}).status_code == 502


class TestJudgmentLog:
    def test_append_and_read(self, tmp_path):
        log = JudgmentLog(tmp_path / "log.jsonl")
        log.append(Judgment("r", "j", "e", True))
        log.append(Judgment("r", "j2", "e", False))
        assert log.read_all() == [Judgment("r", "j", "e", True), Judgment("r", "j2", "e", False)]
        raw = (tmp_path / "log.jsonl").read_text().splitlines()
        assert len(raw) == 2
        assert json.loads(raw[0])["relevant"] is True
