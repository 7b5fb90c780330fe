import base64

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from lightsep.config import STFTConfig
from lightsep.service import create_app
from lightsep.service.app import decode_wav, encode_wav

STFT = STFTConfig(window_size=256, hop=64, kept_bins=128)


def identity(spec):
    return spec


@pytest.fixture
def client():
    app = create_app(models={"vocals": identity, "drums": torch.zeros_like}, stft_cfg=STFT, chunk_seconds=0.5)
    return TestClient(app)


def test_health(client):
    assert client.get("/health").json() == {"status": "ok", "stems": ["drums", "vocals"]}


def test_params(client):
    assert client.get("/params", params={"preset": "proposed-s"}).json() == {"preset": "proposed-s", "parameters": 2271296}
    assert client.get("/params", params={"preset": "nope"}).status_code == 404


def test_describe(client):
    assert "bins_per_band=512" in client.post("/describe", json={"preset": "proposed"}).json()["summary"]
    r = client.post("/describe", json={"config": "[model]\ng = 30\n"})
    assert r.status_code == 422 and "g mod n_band != 0" in r.text


def test_separate_round_trip(client):
    t = np.arange(30000) / 44100
    env = np.minimum(1, np.minimum(t, t[-1] - t) / 0.05)
    wave = np.stack([0.3 * np.sin(2 * np.pi * 440 * t) * env] * 2).astype(np.float32)
    r = client.post("/separate", json={"audio": encode_wav(wave)})
    assert r.status_code == 200
    body = r.json()
    assert body["num_samples"] == 30000
    vocals, sr = decode_wav(body["stems"]["vocals"])
    assert sr == 44100 and np.max(np.abs(vocals - wave)) < 1e-4
    drums, _ = decode_wav(body["stems"]["drums"])
    assert not drums.any()


def test_separate_errors(client):
    assert client.post("/separate", json={"audio": "not base64!"}).status_code == 400
    mono = base64.b64encode(b"RIFF....").decode()
    assert client.post("/separate", json={"audio": mono}).status_code == 400
    wave = np.zeros((2, 100), np.float32)
    assert client.post("/separate", json={"audio": encode_wav(wave, 22050)}).status_code == 400
    assert client.post("/separate", json={"audio": encode_wav(wave), "overlap": 1.5}).status_code == 422
    empty = TestClient(create_app())
    assert empty.post("/separate", json={"audio": encode_wav(wave)}).status_code == 503


def test_evaluate(client, corpus_dir, tmp_path):
    r = client.post("/evaluate", json={"data_dir": str(corpus_dir)})
    assert r.status_code == 200
    report = r.json()
    assert sorted(report["per_song"]) == ["song0", "song1", "song2"]
    assert report["per_stem"]["drums"] == pytest.approx(0.0)
    assert report["metadata"]["num_songs"] == 3
    assert client.post("/evaluate", json={"data_dir": str(tmp_path / "none")}).status_code == 404
