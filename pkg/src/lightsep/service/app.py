"""HTTP front end: models are loaded once and shared across requests."""
from __future__ import annotations

import base64
import binascii
import io
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from scipy.io import wavfile

from ..checkpoint import load_manifest
from ..config import ConfigError, STFTConfig, describe, loads_config, preset
from ..dataset import CorpusError, SAMPLE_RATE, _to_float
from ..network import count_parameters
from ..runtime import evaluate, separate
from .schemas import (
    DescribeRequest,
    DescribeResponse,
    EvaluateRequest,
    EvaluateResponse,
    HealthResponse,
    ParamsResponse,
    SeparateRequest,
    SeparateResponse,
)


def encode_wav(wave: np.ndarray, sample_rate: int = SAMPLE_RATE) -> str:
    buf = io.BytesIO()
    wavfile.write(buf, sample_rate, np.ascontiguousarray(np.asarray(wave, np.float32).T))
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_wav(text: str) -> tuple[np.ndarray, int]:
    sr, data = wavfile.read(io.BytesIO(base64.b64decode(text, validate=True)))
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"expected stereo audio, got shape {data.shape}")
    return np.ascontiguousarray(_to_float(data).T), sr


def create_app(
    manifest: str | Path | None = None,
    models: Mapping[str, Callable] | None = None,
    stft_cfg: STFTConfig | None = None,
    chunk_seconds: float | None = None,
) -> FastAPI:
    """Build the app from a checkpoint manifest, or from in-memory spectrogram models."""
    provenance = {}
    if manifest is not None:
        records = load_manifest(manifest)
        models = {stem: rec.build_model() for stem, rec in records.items()}
        first = next(iter(records.values()))
        stft_cfg = first.stft_config
        chunk_seconds = chunk_seconds or first.model_config.chunk_seconds
        provenance = {stem: str(rec.path) for stem, rec in records.items()}
    models = dict(models or {})
    stft_cfg = stft_cfg or STFTConfig()
    chunk_seconds = chunk_seconds or 9.0

    app = FastAPI(title="lightsep", version="0.1.0")

    def require_models():
        if not models:
            raise HTTPException(503, "no separation models loaded")

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", stems=sorted(models))

    @app.get("/params", response_model=ParamsResponse)
    def params(preset_name: str = Query("proposed", alias="preset")):
        try:
            cfg = preset(preset_name)
        except ConfigError as exc:
            raise HTTPException(404, str(exc))
        return ParamsResponse(preset=preset_name, parameters=count_parameters(cfg))

    @app.post("/describe", response_model=DescribeResponse)
    def describe_config(req: DescribeRequest):
        try:
            if req.config is not None:
                model_cfg, stft, train = loads_config(req.config, req.preset)
            else:
                model_cfg, stft, train = preset(req.preset or "proposed"), None, None
        except ConfigError as exc:
            raise HTTPException(422, str(exc))
        return DescribeResponse(summary=describe(model_cfg, stft, train))

    @app.post("/separate", response_model=SeparateResponse)
    def separate_audio(req: SeparateRequest):
        require_models()
        try:
            wave, sr = decode_wav(req.audio)
        except (ValueError, binascii.Error) as exc:
            raise HTTPException(400, f"cannot decode audio: {exc}")
        if sr != stft_cfg.sample_rate:
            raise HTTPException(400, f"sample rate {sr} != {stft_cfg.sample_rate}")
        result = separate(wave, models, stft_cfg, req.chunk_seconds or chunk_seconds, req.overlap,
                          provenance={"checkpoints": provenance})
        return SeparateResponse(
            sample_rate=sr,
            num_samples=wave.shape[1],
            stems={k: encode_wav(v, sr) for k, v in result.stems.items()},
            provenance=result.provenance,
        )

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate_corpus(req: EvaluateRequest):
        require_models()
        try:
            report = evaluate(req.data_dir, models, stft_cfg, req.chunk_seconds or chunk_seconds, req.overlap,
                              metadata={"checkpoints": provenance})
        except CorpusError as exc:
            raise HTTPException(404, str(exc))
        return EvaluateResponse(**report.to_dict())

    return app
