"""Command line entry point.

``separate``, ``evaluate``, ``params`` and ``describe`` run in-process by
default; with ``--server URL`` they become thin clients of a running
``lightsep serve`` instance. ``train`` always runs locally.
"""
from __future__ import annotations

import argparse
import base64
import json
import logging
import sys
from pathlib import Path

import torch

from .config import PRESETS, ModelConfig, STFTConfig, TrainConfig, describe, dumps_config, load_config, preset
from .dataset import ChunkDataset, Corpus, load_song, read_wav, write_wav

log = logging.getLogger("lightsep")


def _configs(args) -> tuple[ModelConfig, STFTConfig, TrainConfig]:
    if getattr(args, "config", None):
        return load_config(args.config, args.preset)
    return preset(args.preset or "proposed"), STFTConfig(), TrainConfig()


def _client(url: str):
    import httpx

    return httpx.Client(base_url=url, timeout=None)


def _check(resp):
    if resp.status_code >= 400:
        raise SystemExit(f"server error {resp.status_code}: {resp.text}")
    return resp.json()


def cmd_params(args) -> int:
    if args.server:
        with _client(args.server) as client:
            print(_check(client.get("/params", params={"preset": args.preset}))["parameters"])
        return 0
    from .network import count_parameters

    model, stft, _ = _configs(args)
    print(count_parameters(model, stft.kept_bins))
    return 0


def cmd_describe(args) -> int:
    if args.server:
        body = {"preset": args.preset, "config": Path(args.config).read_text() if args.config else None}
        with _client(args.server) as client:
            print(_check(client.post("/describe", json=body))["summary"])
        return 0
    print(describe(*_configs(args)))
    return 0


def cmd_train(args) -> int:
    from .network import BandSplitSeparator
    from .trainer import Trainer

    model_cfg, stft_cfg, train_cfg = _configs(args)
    data = Path(args.data)
    train_root, val_root = data, Path(args.val_data) if args.val_data else None
    if val_root is None and (data / "train").is_dir() and (data / "valid").is_dir():
        train_root, val_root = data / "train", data / "valid"
    train_corpus = Corpus(train_root)
    val_corpus = Corpus(val_root) if val_root else train_corpus
    if val_root is None:
        log.warning("no validation split found; validating on the training corpus")

    if args.resume:
        trainer = Trainer.from_checkpoint(args.resume)
    else:
        torch.manual_seed(train_cfg.seed)
        model = BandSplitSeparator(model_cfg, stft_cfg.kept_bins)
        trainer = Trainer(model, stft_cfg, train_cfg, args.stem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dumps_config(trainer.model_cfg, stft_cfg, trainer.cfg))
    train_data = ChunkDataset(train_corpus, trainer.model_cfg.chunk_seconds, trainer.cfg.train_overlap)
    val_songs = [load_song(s) for s in val_corpus.songs]
    state = trainer.fit(train_data, val_songs, out, args.max_epochs)
    print(json.dumps({"epochs": state.epoch, "best_val_csdr": state.best_val_csdr, "best_epoch": state.best_epoch}))
    return 0


def cmd_separate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.server:
        from .service.app import decode_wav

        body = {"audio": base64.b64encode(Path(args.input).read_bytes()).decode("ascii"),
                "chunk_seconds": args.chunk_seconds}
        with _client(args.server) as client:
            resp = _check(client.post("/separate", json=body))
        for stem, data in resp["stems"].items():
            wave, sr = decode_wav(data)
            write_wav(out / f"{stem}.wav", wave, sr)
        return 0
    if not args.checkpoints:
        raise SystemExit("separate needs --checkpoints MANIFEST (or --server URL)")
    from .checkpoint import load_manifest
    from .runtime import separate

    records = load_manifest(args.checkpoints)
    first = next(iter(records.values()))
    wave, sr = read_wav(args.input)
    if sr != first.stft_config.sample_rate:
        raise SystemExit(f"input sample rate {sr} != {first.stft_config.sample_rate}")
    models = {stem: rec.build_model() for stem, rec in records.items()}
    chunk = args.chunk_seconds or first.model_config.chunk_seconds
    result = separate(wave, models, first.stft_config, chunk, first.train_config.infer_overlap)
    for stem, data in result.stems.items():
        write_wav(out / f"{stem}.wav", data, sr)
    return 0


def cmd_evaluate(args) -> int:
    if args.server:
        body = {"data_dir": str(Path(args.data).resolve()), "chunk_seconds": args.chunk_seconds}
        with _client(args.server) as client:
            report = _check(client.post("/evaluate", json=body))
        text = json.dumps(report, indent=2, sort_keys=True)
        Path(args.report).write_text(text)
        print(text)
        return 0
    if not args.checkpoints:
        raise SystemExit("evaluate needs --checkpoints MANIFEST (or --server URL)")
    from .checkpoint import load_manifest
    from .runtime import evaluate

    records = load_manifest(args.checkpoints)
    first = next(iter(records.values()))
    models = {stem: rec.build_model() for stem, rec in records.items()}
    chunk = args.chunk_seconds or first.model_config.chunk_seconds
    report = evaluate(args.data, models, first.stft_config, chunk, first.train_config.infer_overlap,
                      metadata={"checkpoints": {s: str(r.path) for s, r in records.items()}})
    print(report.to_json(args.report))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.checkpoints, chunk_seconds=args.chunk_seconds)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lightsep", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--preset", choices=sorted(PRESETS), help="model preset (overrides the file's)")

    p = sub.add_parser("params", help="print the parameter count of a single-stem model")
    config_args(p)
    p.add_argument("--server")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("describe", help="print every config field and derived shapes")
    config_args(p)
    p.add_argument("--server")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("train", help="train one stem model")
    config_args(p)
    p.add_argument("--stem", required=True, choices=["vocals", "drums", "bass", "other"])
    p.add_argument("--data", required=True, help="corpus root (uses train/ and valid/ subfolders if present)")
    p.add_argument("--val-data", help="validation corpus root")
    p.add_argument("--out", required=True)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("separate", help="separate a stereo WAV into stems")
    p.add_argument("input")
    p.add_argument("--checkpoints", help="JSON manifest: stem -> checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--chunk-seconds", type=float)
    p.add_argument("--server")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("evaluate", help="cSDR evaluation over a corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoints")
    p.add_argument("--report", required=True)
    p.add_argument("--chunk-seconds", type=float)
    p.add_argument("--server")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP separation service")
    p.add_argument("--checkpoints", help="JSON manifest: stem -> checkpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--chunk-seconds", type=float)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
