import json

import pytest
from fastapi.testclient import TestClient

import cli
from main import app
from schema import SCHEMA_VERSION

EQUAL_RUN = {"n": 8, "seed": 42, "secret_a": "10110010", "secret_b": "10110010", "retries": 60}


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as test_client:
        yield test_client


# ============================================
# HEALTH
# ============================================

@pytest.mark.parametrize("path", ["/", "/health"])
def test_health(client, path):
    response = client.get(path)
    assert response.status_code == 200
    body = response.json()
    assert body["schema_version"] == SCHEMA_VERSION
    assert body["roles"] == ["tp", "alice", "bob"]
    assert body["group_size"] == 4


def test_security_headers(client):
    response = client.get("/health")
    assert response.headers["X-Content-Type-Options"] == "nosniff"
    assert response.headers["X-Frame-Options"] == "DENY"
    assert response.headers["X-Schema-Version"] == SCHEMA_VERSION


# ============================================
# RUNS
# ============================================

def test_run_returns_the_transcript(client):
    response = client.post("/api/runs", json=EQUAL_RUN)
    assert response.status_code == 200
    body = response.json()
    assert body["verdict"] == "equal"
    assert len(body["groups"]) == 16
    assert set(body["views"]) == {"tp", "alice", "bob"}
    assert body["views"]["tp"]["knows_swap_plan"] is True
    assert body["views"]["alice"]["knows_swap_plan"] is False


def test_run_matches_the_command_line_document(client, capsys):
    cli.main(["run", "--n", "8", "--seed", "42", "--secrets-a", "10110010", "--secrets-b", "10110010",
              "--retries", "60"])
    printed = capsys.readouterr().out
    assert client.post("/api/runs", json=EQUAL_RUN).json() == json.loads(printed)


def test_detection_abort_is_409(client):
    response = client.post("/api/runs", json={"n": 64, "seed": 3, "attack": "measure-resend-z", "threshold": 0.0})
    assert response.status_code == 409
    detail = response.json()["detail"]
    assert detail["violations"] > 0
    assert detail["threshold"] == 0.0


def test_insufficient_key_is_422(client):
    for seed in range(40):
        response = client.post("/api/runs", json={"n": 64, "seed": seed})
        if response.status_code == 422:
            detail = response.json()["detail"]
            assert detail["have"] < detail["need"] == 64
            return
        assert response.status_code == 200
    pytest.fail("every run produced full keys")


@pytest.mark.parametrize("body", [
    {"n": 8, "secret_a": "1011"},
    {"attack": "photon-number-splitting"},
    {"attack": "double-cnot", "insider": "alice"},
])
def test_configuration_errors_are_400(client, body):
    assert client.post("/api/runs", json=body).status_code == 400


def test_body_validation_errors_are_422(client):
    assert client.post("/api/runs", json={"n": 0}).status_code == 422
    assert client.post("/api/runs", json={"colour": "blue"}).status_code == 422


def test_attack_eval(client):
    response = client.post("/api/runs/attack-eval", json={"attack": "double-cnot", "trials": 5})
    assert response.status_code == 200
    body = response.json()
    assert body["detected"] == 0
    assert body["trials"] == 5


def test_attack_eval_trial_cap(client):
    response = client.post("/api/runs/attack-eval", json={"attack": "none", "trials": 5000})
    assert response.status_code == 400


# ============================================
# REPORTS
# ============================================

def test_histogram(client):
    response = client.post("/api/reports/histogram", json={"scenario": "bell", "kind": "psi+", "shots": 32})
    assert response.status_code == 200
    assert response.json()["counts"] == {"10": 32}


def test_histogram_unknown_scenario(client):
    response = client.post("/api/reports/histogram", json={"scenario": "ghz"})
    assert response.status_code == 400


def test_efficiency(client):
    response = client.get("/api/reports/efficiency", params={"n": 1})
    assert response.status_code == 200
    rows = response.json()["rows"]
    assert len(rows) == 8
    assert rows[-1]["eta_at_n"] == "1/19"
    assert rows[-1]["eta_limit"] == "1/18"


def test_detection_curve(client):
    response = client.post("/api/reports/detection-curve",
                           json={"p": 0.25, "ks": [1, 2], "failures": [True, False, False, False]})
    assert response.status_code == 200
    points = response.json()["points"]
    assert points[0] == {"k": 1, "analytic": 0.25, "empirical": 0.25}
    assert points[1]["analytic"] == pytest.approx(0.4375)
    assert points[1]["empirical"] == 0.5


def test_detection_curve_rejects_bad_k(client):
    response = client.post("/api/reports/detection-curve", json={"p": 0.5, "ks": [0]})
    assert response.status_code == 422
