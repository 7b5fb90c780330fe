"""AdamW training with plateau learning-rate decay, early stopping and cSDR model selection."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .augment import augment_batch
from .checkpoint import CheckpointRecord, load_checkpoint, save_checkpoint
from .config import ModelConfig, STFTConfig, TrainConfig
from .dataset import ChunkRef, StemSet, epoch_order, index_chunks, iter_batches, stack_stem
from .losses import total_loss
from .network import BandSplitSeparator
from .runtime import csdr_song, separate
from .spectral import ComplexSpectrogram, stft

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainState:
    initial_lr: float
    lr: float
    epoch: int = 0  # completed epochs
    step: int = 0
    n_decays: int = 0
    best_val_loss: float = math.inf
    best_val_csdr: float = -math.inf
    best_epoch: int = -1
    epochs_since_improve: int = 0
    plateau_counter: int = 0

    @classmethod
    def initial(cls, cfg: TrainConfig) -> "TrainState":
        return cls(initial_lr=cfg.lr, lr=cfg.lr)


def plateau_step(state: TrainState, val_loss: float, cfg: TrainConfig) -> TrainState:
    """Update the improvement counters and decay the rate after ``plateau_patience`` flat epochs."""
    if not math.isfinite(val_loss):
        raise ValueError(f"validation loss must be finite, got {val_loss}")
    if val_loss < state.best_val_loss - cfg.improvement_tol:
        return dataclasses.replace(state, best_val_loss=val_loss, epochs_since_improve=0, plateau_counter=0)
    since = state.epochs_since_improve + 1
    plateau = state.plateau_counter + 1
    decays = state.n_decays
    if plateau >= cfg.plateau_patience:
        decays += 1
        plateau = 0
    return dataclasses.replace(
        state,
        epochs_since_improve=since,
        plateau_counter=plateau,
        n_decays=decays,
        lr=state.initial_lr * cfg.plateau_factor**decays,
    )


def early_stop(state: TrainState, cfg: TrainConfig) -> bool:
    return state.epochs_since_improve >= cfg.early_stop_patience


def select_best(records: Sequence[CheckpointRecord]) -> CheckpointRecord:
    """Highest validation cSDR; ties go to the earliest epoch."""
    scored = [r for r in records if r.val_csdr is not None and not math.isnan(r.val_csdr)]
    if not scored:
        raise ValueError("no checkpoint with a recorded validation cSDR")
    return min(scored, key=lambda r: (-r.val_csdr, r.epoch))


class Trainer:
    def __init__(
        self,
        model: BandSplitSeparator,
        stft_cfg: STFTConfig,
        train_cfg: TrainConfig,
        stem: str,
        state: TrainState | None = None,
    ):
        self.model = model
        self.stft_cfg = stft_cfg
        self.cfg = train_cfg
        self.stem = stem
        self.state = state or TrainState.initial(train_cfg)
        self.optimizer = torch.optim.AdamW(
            model.parameters(), lr=self.state.lr, betas=train_cfg.betas, weight_decay=train_cfg.weight_decay
        )

    @property
    def model_cfg(self) -> ModelConfig:
        return self.model.cfg

    def loss(self, mixture: torch.Tensor, target: torch.Tensor):
        spec = stft(mixture, self.stft_cfg)
        est = ComplexSpectrogram(self.model(spec.data), self.stft_cfg, spec.original_length)
        return total_loss(est, target, self.cfg.multires_windows)

    def train_step(self, mixture: torch.Tensor, target: torch.Tensor):
        self.model.train()
        for group in self.optimizer.param_groups:
            group["lr"] = self.state.lr
        breakdown = self.loss(mixture, target)
        self.optimizer.zero_grad(set_to_none=True)
        breakdown.total.backward()
        if self.cfg.grad_clip:
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), self.cfg.grad_clip)
        self.optimizer.step()
        self.state = dataclasses.replace(self.state, step=self.state.step + 1)
        return breakdown

    def train_epoch(self, data: Sequence[StemSet]) -> float:
        """One pass over ``data`` in a seeded per-epoch order; returns the mean batch loss."""
        if len(data) == 0:
            raise ValueError("empty training set")
        order = epoch_order(len(data), self.cfg.seed, self.state.epoch)
        rng = np.random.default_rng([self.cfg.seed, self.state.epoch, 1])
        losses = []
        for i, batch in enumerate(iter_batches(data, order, self.cfg.batch_size)):
            items = augment_batch(batch, self.cfg.augment, rng)
            mixture, target = stack_stem(items, self.stem)
            try:
                breakdown = self.train_step(mixture, target)
            except FloatingPointError as exc:
                raise FloatingPointError(f"epoch {self.state.epoch} batch {i}: {exc}") from exc
            losses.append(breakdown.total.item())
        return float(np.mean(losses))

    @torch.no_grad()
    def validation_loss(self, songs: Sequence[StemSet]) -> float:
        """Mean total loss over non-overlapping, zero-padded chunks of every song."""
        self.model.eval()
        chunk_seconds = self.model_cfg.chunk_seconds
        values = []
        for song in songs:
            mixture = torch.from_numpy(song.mixture)
            target = torch.from_numpy(song.stems[self.stem])
            for ref in index_chunks(song.num_samples, chunk_seconds, 0.0, song.sample_rate):
                mix = _crop(mixture, ref)
                tgt = _crop(target, ref)
                values.append(self.loss(mix[None], tgt[None]).total.item())
        return float(np.mean(values))

    @torch.no_grad()
    def validate(self, songs: Sequence[StemSet]) -> tuple[float, float]:
        """(validation loss, median over songs of the song cSDR)."""
        if len(songs) == 0:
            raise ValueError("empty validation set")
        val_loss = self.validation_loss(songs)
        scores = []
        for song in songs:
            result = separate(
                song.mixture,
                {self.stem: self.model},
                self.stft_cfg,
                self.model_cfg.chunk_seconds,
                self.cfg.infer_overlap,
            )
            scores.append(csdr_song(song.stems[self.stem], result.stems[self.stem], song.sample_rate))
        finite = [s for s in scores if not math.isnan(s)]
        return val_loss, float(np.median(finite)) if finite else math.nan

    def record(self, val_loss: float | None = None, val_csdr: float | None = None) -> CheckpointRecord:
        return CheckpointRecord(
            model_config=self.model_cfg,
            stft_config=self.stft_cfg,
            train_config=self.cfg,
            stem=self.stem,
            model_state={k: v.detach().clone() for k, v in self.model.state_dict().items()},
            epoch=self.state.epoch,
            val_loss=val_loss,
            val_csdr=val_csdr,
            optimizer_state=self.optimizer.state_dict(),
            train_state=dataclasses.asdict(self.state),
            rng_state={"torch": torch.get_rng_state()},
        )

    @classmethod
    def from_checkpoint(cls, path: str | Path) -> "Trainer":
        rec = load_checkpoint(path)
        model = BandSplitSeparator(rec.model_config, rec.stft_config.kept_bins)
        model.load_state_dict(rec.model_state)
        trainer = cls(model, rec.stft_config, rec.train_config, rec.stem, TrainState(**rec.train_state))
        if rec.optimizer_state is not None:
            trainer.optimizer.load_state_dict(rec.optimizer_state)
        if "torch" in rec.rng_state:
            torch.set_rng_state(rec.rng_state["torch"])
        return trainer

    def fit(
        self,
        train_data: Sequence[StemSet],
        val_songs: Sequence[StemSet],
        out_dir: str | Path,
        max_epochs: int | None = None,
    ) -> TrainState:
        """Train until early stopping or ``max_epochs``; writes ``last.ckpt``, ``best.ckpt`` and ``log.jsonl``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        max_epochs = max_epochs if max_epochs is not None else self.cfg.max_epochs
        while self.state.epoch < max_epochs:
            train_loss = self.train_epoch(train_data)
            val_loss, val_csdr = self.validate(val_songs)
            lr_used = self.state.lr
            self.state = plateau_step(self.state, val_loss, self.cfg)
            improved = not math.isnan(val_csdr) and val_csdr > self.state.best_val_csdr
            if improved:
                self.state = dataclasses.replace(self.state, best_val_csdr=val_csdr, best_epoch=self.state.epoch)
            self.state = dataclasses.replace(self.state, epoch=self.state.epoch + 1)
            rec = self.record(val_loss, val_csdr)
            save_checkpoint(out_dir / "last.ckpt", rec)
            if improved:
                save_checkpoint(out_dir / "best.ckpt", rec)
            entry = {"epoch": self.state.epoch - 1, "train_loss": train_loss, "val_loss": val_loss,
                     "val_csdr": None if math.isnan(val_csdr) else val_csdr, "lr": lr_used}
            with open(out_dir / "log.jsonl", "a") as fh:
                fh.write(json.dumps(entry) + "\n")
            log.info("epoch %(epoch)d train %(train_loss).4f val %(val_loss).4f cSDR %(val_csdr)s lr %(lr).3g", entry)
            if early_stop(self.state, self.cfg):
                log.info("early stop after %d epochs without improvement", self.state.epochs_since_improve)
                break
        return self.state


def _crop(wave: torch.Tensor, ref: ChunkRef) -> torch.Tensor:
    seg = wave[:, ref.start : ref.start + ref.length]
    return torch.nn.functional.pad(seg, (0, ref.length - seg.shape[-1]))
