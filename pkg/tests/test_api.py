import pytest
from fastapi.testclient import TestClient

import hamlaw.utilities.counting as counting
import hamlaw.utilities.data_models as models
import hamlaw.utilities.hypergraph as hypergraph
from hamlaw.api import app
from hamlaw.configs.config import Settings

client = TestClient(app)
TEXT = {"content-type": "text/plain"}


def test_get_constants():
    response = client.get("/constants", params={"n": 7, "r": 3, "ell": 2, "K": 4})
    assert response.status_code == 200
    data = response.json()
    assert data["n_c"] == "360"
    assert data["A"]["values"] == ["6", "4", "2", "2"]


def test_get_constants_bad_geometry():
    response = client.get("/constants", params={"n": 7, "r": 3, "ell": 3})
    assert response.status_code == 422


def test_get_theory():
    response = client.get("/theory", params={"n": 20, "r": 3, "ell": 2, "c": 1.0, "K": 8})
    assert response.status_code == 200
    assert response.json()["sigma2"] == pytest.approx(2.9057512820)


@pytest.mark.parametrize(
    "params",
    [
        {"n": 20, "r": 3, "ell": 2, "p": 0.1, "c": 1.0},
        {"n": 5, "r": 3, "ell": 2, "target_m": 13.0},
    ],
)
def test_get_theory_rejects(params):
    assert client.get("/theory", params=params).status_code == 422


def test_post_count():
    body = hypergraph.dump_text(hypergraph.complete_hypergraph(6, 3))
    response = client.post("/count", params={"ell": 2}, content=body, headers=TEXT)
    assert response.status_code == 200
    assert response.json()["count"] == "60"


def test_post_count_rejects_malformed_graph():
    response = client.post("/count", params={"ell": 2}, content="5 3\n", headers=TEXT)
    assert response.status_code == 422


def test_post_count_resource_limit(monkeypatch):
    monkeypatch.setattr(counting, "get_settings", lambda: Settings(node_budget=5))
    body = hypergraph.dump_text(hypergraph.complete_hypergraph(8, 4))
    response = client.post("/count", params={"ell": 2}, content=body, headers=TEXT)
    assert response.status_code == 400
    assert "ResourceLimitError" in response.json()["detail"]


def test_post_stat_y():
    params = models.Params(n=7, r=3, ell=2, p=0.5)
    graph = hypergraph.sample_gnp(params, models.Seed(root=2))
    payload = {"graph": hypergraph.dump_text(graph), "ell": 2, "p": 0.5, "K": 2}
    response = client.post("/stat-y", json=payload)
    assert response.status_code == 200
    data = response.json()
    expected = counting.y_combined(graph, params, data["c"], 2)
    assert data["y_n"] == pytest.approx(expected.y_n)


def test_post_stat_y_rejects_density():
    payload = {"graph": "5 3 0\n", "ell": 2, "p": 1.0}
    assert client.post("/stat-y", json=payload).status_code == 422
