import numpy as np
import pytest
from fastapi.testclient import TestClient

from voxrot.pool import load_pool
from voxrot.service.app import create_app


@pytest.fixture()
def client(tmp_path):
    with TestClient(create_app(tmp_path)) as c:
        c.workspace = tmp_path
        yield c


GEN = {
    "name": "demo",
    "speakers": 6,
    "utterances": 6,
    "dim": 6,
    "seed": 7,
}
TRAIN = {
    "pool": "demo",
    "run": "run1",
    "train": {"iterations": 5, "batch_size": 8},
    "stack": {"layers": 2, "reflections": 3},
}
SELECTION = {"n_far": 4, "n_pick": 2, "seed": 0}


def make_pool(client, **overrides):
    body = dict(GEN)
    body.update(overrides)
    resp = client.post("/pools", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()


class TestHealth:
    def test_ok(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["version"]


class TestPools:
    def test_create_and_list(self, client):
        summary = make_pool(client)
        assert summary["dim"] == 6
        assert summary["records"] == 36
        assert summary["splits"] == {"enroll": 12, "train": 12, "trial": 12}
        listed = client.get("/pools").json()["pools"]
        assert [p["fingerprint"] for p in listed] == [summary["fingerprint"]]

    def test_file_lands_in_workspace(self, client):
        make_pool(client)
        path = client.workspace / "pools" / "demo.emb1"
        assert path.exists()
        assert load_pool(path).dim == 6

    def test_name_with_slash_rejected(self, client):
        resp = client.post("/pools", json={**GEN, "name": "../evil"})
        assert resp.status_code == 422

    def test_unknown_key_rejected(self, client):
        resp = client.post("/pools", json={**GEN, "speekers": 9})
        assert resp.status_code == 422

    def test_semantic_error_maps_to_422(self, client):
        resp = client.post("/pools", json={**GEN, "speakers": 1})
        assert resp.status_code == 422
        assert "speaker" in resp.json()["detail"]

    def test_empty_list(self, client):
        assert client.get("/pools").json() == {"pools": []}


class TestTrain:
    def test_train_and_artifacts(self, client):
        make_pool(client)
        resp = client.post("/train", json=TRAIN)
        assert resp.status_code == 200, resp.text
        body = resp.json()
        assert body["iterations"] == 5
        assert -1.0 <= body["final_pair_cosine"] <= 1.0
        run_dir = client.workspace / "runs" / "run1"
        for name in ("model.ohnn", "model.json", "report.json"):
            assert (run_dir / name).exists()

    def test_missing_pool_is_404(self, client):
        resp = client.post("/train", json=TRAIN)
        assert resp.status_code == 404

    def test_invalid_batch_size_is_422(self, client):
        make_pool(client)
        resp = client.post(
            "/train", json={**TRAIN, "train": {"batch_size": 7, "iterations": 5}}
        )
        assert resp.status_code == 422


class TestAnonymize:
    def trained(self, client):
        make_pool(client)
        assert client.post("/train", json=TRAIN).status_code == 200

    def test_vector_round_trip(self, client):
        self.trained(client)
        resp = client.post(
            "/anonymize/vector",
            json={"model": "run1", "vector": [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]},
        )
        assert resp.status_code == 200, resp.text
        out = resp.json()["vector"]
        assert len(out) == 6
        assert out != [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]

    def test_vector_wrong_dim(self, client):
        self.trained(client)
        resp = client.post(
            "/anonymize/vector", json={"model": "run1", "vector": [1.0, 0.0]}
        )
        assert resp.status_code in (400, 422)

    def test_pool_with_model(self, client):
        self.trained(client)
        resp = client.post(
            "/anonymize/pool",
            json={"pool": "demo", "out": "demo-anon", "model": "run1", "side": "trial"},
        )
        assert resp.status_code == 200, resp.text
        assert (client.workspace / "pools" / "demo-anon.emb1").exists()
        listed = {p["path"] for p in client.get("/pools").json()["pools"]}
        assert any("demo-anon" in p for p in listed)

    def test_pool_with_selection(self, client):
        make_pool(client)
        resp = client.post(
            "/anonymize/pool",
            json={"pool": "demo", "out": "demo-sel", "selection": SELECTION},
        )
        assert resp.status_code == 200, resp.text

    def test_model_and_selection_exclusive(self, client):
        self.trained(client)
        resp = client.post(
            "/anonymize/pool",
            json={
                "pool": "demo",
                "out": "x",
                "model": "run1",
                "selection": SELECTION,
            },
        )
        assert resp.status_code == 422
        resp = client.post(
            "/anonymize/pool", json={"pool": "demo", "out": "x"}
        )
        assert resp.status_code == 422

    def test_missing_model_is_404(self, client):
        make_pool(client)
        resp = client.post(
            "/anonymize/pool",
            json={"pool": "demo", "out": "x", "model": "ghost"},
        )
        assert resp.status_code == 404


class TestEvaluate:
    def test_selection_evaluation(self, client):
        make_pool(client)
        resp = client.post(
            "/evaluate",
            json={"pool": "demo", "run": "eval1", "selection": SELECTION},
        )
        assert resp.status_code == 200, resp.text
        body = resp.json()
        assert body["speakers"] == 6
        assert np.isfinite(body["g_vd"])
        run_dir = client.workspace / "runs" / "eval1"
        for block in ("oo", "aa", "oa"):
            assert (run_dir / f"matrix_{block}.csv").exists()

    def test_exclusive_inputs(self, client):
        make_pool(client)
        resp = client.post("/evaluate", json={"pool": "demo", "run": "e"})
        assert resp.status_code == 422


class TestAttackSim:
    def test_selection_suite(self, client):
        make_pool(client)
        resp = client.post(
            "/attack-sim",
            json={
                "pools": ["demo"],
                "run": "atk",
                "kind": "selection",
                "scenarios": ["unprotected", "ignorant"],
                "selection": SELECTION,
            },
        )
        assert resp.status_code == 200, resp.text
        body = resp.json()
        assert body["kind"] == "selection"
        assert set(body["weighted_eer"]) == {"unprotected", "ignorant"}
        assert body["subsets"]["demo"]["unprotected"] < 0.1
        run_dir = client.workspace / "runs" / "atk"
        assert (run_dir / "report_demo.unprotected.json").exists()
        assert (run_dir / "summary.json").exists()

    def test_unknown_scenario_is_422(self, client):
        make_pool(client)
        resp = client.post(
            "/attack-sim",
            json={
                "pools": ["demo"],
                "run": "atk",
                "kind": "selection",
                "scenarios": ["oracle"],
                "selection": SELECTION,
            },
        )
        assert resp.status_code == 422

    def test_weight_mismatch_is_422(self, client):
        make_pool(client)
        resp = client.post(
            "/attack-sim",
            json={
                "pools": ["demo"],
                "weights": [0.5, 0.5],
                "run": "atk",
                "kind": "selection",
                "scenarios": ["unprotected"],
                "selection": SELECTION,
            },
        )
        assert resp.status_code == 422
