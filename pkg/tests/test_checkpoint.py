import json

import pytest
import torch

from lightsep.checkpoint import (
    MAGIC,
    CheckpointError,
    CheckpointRecord,
    load_checkpoint,
    load_manifest,
    read_manifest,
    save_checkpoint,
    write_manifest,
)
from lightsep.config import STFTConfig, TrainConfig
from lightsep.network import BandSplitSeparator


def make_record(model_cfg, stft_cfg, stem="vocals", epoch=3):
    torch.manual_seed(0)
    model = BandSplitSeparator(model_cfg, stft_cfg.kept_bins)
    return CheckpointRecord(model_cfg, stft_cfg, TrainConfig(), stem, model.state_dict(), epoch=epoch,
                            val_loss=0.25, val_csdr=4.5, train_state={"lr": 2e-4})


def test_round_trip_with_header(tmp_path, tiny_model_cfg, tiny_stft):
    rec = make_record(tiny_model_cfg, tiny_stft)
    path = save_checkpoint(tmp_path / "m.ckpt", rec)
    assert path.read_bytes()[:4] == MAGIC == b"MSL1"
    back = load_checkpoint(path)
    assert (back.model_config, back.stft_config, back.train_config) == (tiny_model_cfg, tiny_stft, TrainConfig())
    assert back.stem == "vocals" and back.epoch == 3 and back.val_csdr == 4.5
    assert all(torch.equal(back.model_state[k], v) for k, v in rec.model_state.items())
    x = torch.randn(1, 4, tiny_stft.kept_bins, 16)
    model = BandSplitSeparator(tiny_model_cfg, tiny_stft.kept_bins)
    model.load_state_dict(rec.model_state)
    assert torch.equal(back.build_model()(x), model.eval()(x))


def test_bad_header(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"PK\x03\x04junk")
    with pytest.raises(CheckpointError, match="header"):
        load_checkpoint(path)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")


def test_manifest(tmp_path, tiny_model_cfg, tiny_stft):
    for stem in ("vocals", "bass"):
        save_checkpoint(tmp_path / "ck" / f"{stem}.ckpt", make_record(tiny_model_cfg, tiny_stft, stem))
    manifest = write_manifest(tmp_path / "m.json", {"vocals": "ck/vocals.ckpt", "bass": "ck/bass.ckpt"})
    assert read_manifest(manifest)["bass"] == (tmp_path / "ck" / "bass.ckpt").resolve()
    records = load_manifest(manifest)
    assert sorted(records) == ["bass", "vocals"]

    write_manifest(tmp_path / "swap.json", {"vocals": "ck/bass.ckpt"})
    with pytest.raises(CheckpointError, match="trained for"):
        load_manifest(tmp_path / "swap.json")
    (tmp_path / "bad.json").write_text(json.dumps({"piano": "x"}))
    with pytest.raises(CheckpointError, match="unknown stems"):
        read_manifest(tmp_path / "bad.json")


def test_manifest_rejects_mixed_stft(tmp_path, tiny_model_cfg, tiny_stft):
    save_checkpoint(tmp_path / "a.ckpt", make_record(tiny_model_cfg, tiny_stft, "vocals"))
    other = STFTConfig(window_size=128, hop=32, kept_bins=32, sample_rate=8000)
    save_checkpoint(tmp_path / "b.ckpt", make_record(tiny_model_cfg, other, "bass"))
    write_manifest(tmp_path / "m.json", {"vocals": "a.ckpt", "bass": "b.ckpt"})
    with pytest.raises(CheckpointError, match="STFT"):
        load_manifest(tmp_path / "m.json")
