"""HTTP service endpoints (same documents as the CLI, inline results)."""

import pytest
from fastapi.testclient import TestClient

from fvqsd.service.app import app
from fvqsd.service.examples import EXAMPLE_DOCUMENTS


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


GW_DOC = EXAMPLE_DOCUMENTS["galton-watson"]


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert body["version"]


def test_families_lists_all(client):
    body = client.get("/families").json()
    assert set(body) == {"galton-watson", "birth-death",
                         "multitype-galton-watson", "diffusion"}


def test_check_endpoint(client):
    r = client.post("/check", json={"model": GW_DOC["model"]})
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "PASS"
    assert body["certificate"]["min_particles"] == 8
    assert body["certificate"]["lambda1"] == pytest.approx(0.7)


def test_check_reports_model_failure(client):
    doc = {"model": {"family": "galton-watson", "offspring": {0: 0.3, 2: 0.7}, "alpha": 4.0}}
    body = client.post("/check", json=doc).json()
    assert body["status"] == "FAIL"
    assert "mean" in body["message"]


def test_qsd_endpoint(client):
    r = client.post("/qsd", json={"model": GW_DOC["model"]})
    assert r.status_code == 200
    body = r.json()
    assert body["header"]["lambda0"] == pytest.approx(0.2, abs=1e-3)
    assert len(body["states"]) == body["header"]["truncation_size"]
    assert sum(body["nu"]) == pytest.approx(1.0, abs=1e-9)


def test_fv_endpoint(client):
    doc = {
        "model": GW_DOC["model"],
        "fv": {"n": 20, "horizon": 5.0, "observation_times": [2.5, 5.0]},
        "runtime": {"seed": 3},
    }
    r = client.post("/fv", json=doc)
    assert r.status_code == 200
    body = r.json()
    assert body["n"] == 20
    assert len(body["snapshots"]) == 2
    assert sum(body["snapshots"][0]["counts"]) == 20


def test_fv_invalid_n_rejected(client):
    doc = {"model": GW_DOC["model"], "fv": {"n": 1, "horizon": 5.0, "observation_times": []}}
    assert client.post("/fv", json=doc).status_code == 422


def test_unknown_key_rejected(client):
    doc = {"model": {**GW_DOC["model"], "bogus": 1}}
    assert client.post("/check", json=doc).status_code == 422


def test_experiment_endpoint_matches_runner(client):
    doc = {
        "model": GW_DOC["model"],
        "experiment": {"kind": "conditional-decay", "times": [2.0, 6.0], "mode": "oracle"},
        "runtime": {"seed": 12},
    }
    r = client.post("/experiment", json=doc)
    assert r.status_code == 200
    body = r.json()
    assert body["kind"] == "conditional-decay"
    assert body["columns"][:2] == ["t", "tv_to_qsd"]

    from fvqsd.config import validate_config
    from fvqsd.runner import experiment_result, run_experiment

    direct = experiment_result(run_experiment(validate_config(doc)))
    assert body["rows"] == [
        [v for v in row] for row in direct.rows
    ]


def test_experiment_missing_section_rejected(client):
    assert client.post("/experiment", json={"model": GW_DOC["model"]}).status_code == 422
