"""
Tests for the HTTP API.
"""

import pytest
from fastapi.testclient import TestClient

from can_translation import __version__
from can_translation.api.main import app, load_api_config
from can_translation.data.canio import write_log
from can_translation.data.synth import default_synth_config, generate_capture

client = TestClient(app)


@pytest.fixture(scope="module")
def capture_text():
    capture, _ = generate_capture(default_synth_config(duration=120.0, seed=11))
    return write_log(capture).decode()


def test_health():
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "healthy", "message": "CAN Translation API is running",
                               "version": __version__}


def test_api_config_has_host_and_port():
    config = load_api_config()
    assert set(config) == {"api_host", "api_port"}
    assert isinstance(config["api_port"], int)


def test_analyze(capture_text):
    response = client.post("/analyze", json={"capture": capture_text, "alpha": 0.5})
    assert response.status_code == 200
    body = response.json()
    assert body["schema"] == 1
    assert body["stats"]["aid_count"] == 3
    assert body["stats"]["matched_fraction"] == pytest.approx(84 / 192)
    selected = body["report"]["aids"]["0C5"]["selected"]
    assert [(s["j_s"], s["j_e"], s["did"]) for s in selected] == [(10, 25, 12), (28, 39, 13)]


def test_analyze_anonymized(capture_text):
    response = client.post("/analyze", json={"capture": capture_text, "anonymize_aids": True})
    assert response.status_code == 200
    assert sorted(response.json()["report"]["aids"]) == ["AID1", "AID2", "AID3"]


def test_dbc(capture_text):
    response = client.post("/dbc", json={"capture": capture_text})
    assert response.status_code == 200
    assert response.headers["content-type"].startswith("text/plain")
    assert "BO_ 416 AID_1A0: 8 Vector__XXX" in response.text
    assert "DID12_EngineRPM" in response.text


def test_invalid_settings_are_422(capture_text):
    response = client.post("/analyze", json={"capture": capture_text, "alpha": 1.5})
    assert response.status_code == 422
    response = client.post("/analyze", json={"capture": capture_text, "diag_ranges": ["XYZ"]})
    assert response.status_code == 422


def test_missing_capture_is_422():
    assert client.post("/analyze", json={"alpha": 0.5}).status_code == 422


def test_capture_without_diagnostics_is_400():
    text = "".join(f"({i}.000000) can0 100#{i:016X}\n" for i in range(1, 40))
    response = client.post("/analyze", json={"capture": text})
    assert response.status_code == 400
    assert response.json()["detail"].startswith("NoUsableDiagnostics")


def test_garbage_capture_is_400():
    response = client.post("/analyze", json={"capture": "not a candump log\n" * 10})
    assert response.status_code == 400
