import numpy as np
import pytest
import torch

from lightsep.augment import AugmentSpec
from lightsep.config import ModelConfig, STFTConfig, TrainConfig
from lightsep.dataset import STEMS, write_wav

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def tiny_stft():
    return STFTConfig(window_size=64, hop=16, kept_bins=32, sample_rate=8000)


@pytest.fixture
def tiny_model_cfg():
    return ModelConfig(g=8, n_band=2, n_rope=1, tdf_factor=4, chunk_seconds=0.128)


@pytest.fixture
def tiny_train_cfg():
    return TrainConfig(
        lr=2e-3,
        batch_size=2,
        multires_windows=((256, 64), (128, 32), (64, 16)),
        augment=AugmentSpec.disabled(),
    )


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)


def write_song(root, name, seconds=2.0, seed=0, sr=44100, with_mixture=True, skip=()):
    """Synthetic song: tone, clicks, low tone, noise; returns the stems."""
    rng = np.random.default_rng(seed)
    n = int(seconds * sr)
    t = np.arange(n) / sr
    stems = {
        "vocals": 0.3 * np.sin(2 * np.pi * (300 + 50 * seed) * t),
        "drums": (rng.random(n) < 0.001) * rng.standard_normal(n) * 0.8,
        "bass": 0.4 * np.sin(2 * np.pi * (55 + 5 * seed) * t),
        "other": 0.05 * rng.standard_normal(n),
    }
    stems = {k: np.stack([v, 0.9 * v]).astype(np.float32) for k, v in stems.items()}
    song = root / name
    song.mkdir(parents=True, exist_ok=True)
    for stem in STEMS:
        if stem not in skip:
            write_wav(song / f"{stem}.wav", stems[stem], sr)
    if with_mixture:
        write_wav(song / "mixture.wav", sum(stems.values()), sr)
    return stems


@pytest.fixture
def corpus_dir(tmp_path):
    root = tmp_path / "corpus"
    for i in range(3):
        write_song(root, f"song{i}", seconds=2.0 + 0.5 * i, seed=i)
    return root


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        status, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{status}] criterion {key}: {detail}")
