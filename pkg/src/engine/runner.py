"""
Training Runner

Runs the L1 / Adam training loop on a prepared dataset:
sample HR patches and their LR counterparts, augment, forward, L1,
backward, Adam, halve the learning rate on schedule; log the training
loss and validation PSNR to a metric sink and write checkpoints.

Batches are sampled ahead of the trainer on a ThreadPoolExecutor. Each
batch's RNG seed is drawn on the trainer thread, so the loss trajectory
does not depend on the worker count.
"""

import logging
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from src.autograd import Tensor, backward
from src.data import MetricSink, SRDataset, save_checkpoint
from src.errors import ConfigError, DataError, NumericalError
from .augment import apply_transform, draw_transform
from .evaluate import evaluate_model
from .losses import l1_loss
from .optim import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, Adam, lr_schedule

logger = logging.getLogger(__name__)

# Number of sampling workers (default: CPU count, min 2)
DEFAULT_WORKERS = max(2, os.cpu_count() or 4)

LAST_GOOD = "last_good.ckpt"
LATEST = "latest.ckpt"


@dataclass
class TrainConfig:
    """Optimization protocol of one training run."""
    lr0: float = 1e-3
    lr_halving_period: int = 200_000
    batch_size: int = 16
    patch_size: int = 96
    max_steps: int = 5000
    seed: int = 0
    normalization: str = "weight-norm"
    adam_beta1: float = ADAM_BETA1
    adam_beta2: float = ADAM_BETA2
    adam_eps: float = ADAM_EPSILON
    augment: bool = True
    val_every: int = 1000
    log_every: int = 50
    checkpoint_every: int = 1000
    val_crop: int = 0
    psnr_shave: int = 0
    prefetch: int = 2
    workers: int = DEFAULT_WORKERS

    def validate(self, scale: int):
        if not 0.0 < self.adam_beta1 < 1.0 or not 0.0 < self.adam_beta2 < 1.0:
            raise ConfigError(f"adam betas must be in (0, 1), got ({self.adam_beta1}, {self.adam_beta2})")
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if self.patch_size % scale:
            raise ConfigError(f"patch_size {self.patch_size} is not divisible by scale {scale}")
        for name in ("batch_size", "patch_size", "lr_halving_period", "log_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("max_steps", "val_every", "checkpoint_every", "val_crop", "psnr_shave", "prefetch", "workers"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass
class TrainResult:
    steps: int
    losses: List[float] = field(default_factory=list)
    val_psnr: List[Tuple[int, float]] = field(default_factory=list)
    checkpoint: Optional[Path] = None
    seconds: float = 0.0


def loss_ema(losses: List[float], span: int = 50) -> np.ndarray:
    """Exponential moving average with alpha = 2 / (span + 1)."""
    alpha = 2.0 / (span + 1.0)
    out = np.empty(len(losses))
    acc = losses[0] if losses else 0.0
    for i, value in enumerate(losses):
        acc = alpha * value + (1.0 - alpha) * acc
        out[i] = acc
    return out


# ========== Patch Sampling ==========

class PatchSampler:
    """
    Draws aligned HR/LR patch batches: image chosen uniformly, LR top-left
    corner uniform over valid positions, HR corner = LR corner * S.
    """

    def __init__(self, dataset: SRDataset, batch_size: int, patch_size: int, augment: bool = True):
        self.dataset = dataset
        self.scale = dataset.scale
        self.batch_size = batch_size
        self.patch_size = patch_size
        self.lr_patch = patch_size // self.scale
        self.augment = augment
        min_h, min_w = dataset.min_lr_size()
        if min_h < self.lr_patch or min_w < self.lr_patch:
            raise DataError(
                f"LR images as small as {min_w}x{min_h} cannot hold {self.lr_patch}x{self.lr_patch} patches "
                f"(patch_size {patch_size} / S={self.scale})"
            )

    def sample(self, seed: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Build one batch from its own seed.

        Returns:
            Tuple of (lr batch (N, 3, p/S, p/S), hr batch (N, 3, p, p)), float32 0-255
        """
        rng = np.random.default_rng(seed)
        lp, s = self.lr_patch, self.scale
        lr_batch = np.empty((self.batch_size, 3, lp, lp), dtype=np.float32)
        hr_batch = np.empty((self.batch_size, 3, lp * s, lp * s), dtype=np.float32)
        for i in range(self.batch_size):
            hr, lr = self.dataset[int(rng.integers(len(self.dataset)))]
            top = int(rng.integers(lr.height - lp + 1))
            left = int(rng.integers(lr.width - lp + 1))
            lr_patch = lr.pixels[top:top + lp, left:left + lp].transpose(2, 0, 1)
            hr_patch = hr.pixels[top * s:(top + lp) * s, left * s:(left + lp) * s].transpose(2, 0, 1)
            if self.augment:
                t = draw_transform(rng)
                lr_patch, hr_patch = apply_transform(lr_patch, t), apply_transform(hr_patch, t)
            lr_batch[i] = lr_patch
            hr_batch[i] = hr_patch
        return lr_batch, hr_batch


class BatchStream:
    """Bounded look-ahead over PatchSampler.sample(seed) for a fixed seed sequence."""

    def __init__(self, sampler: PatchSampler, seed: int, depth: int, workers: int):
        self.sampler = sampler
        self._seeds = np.random.default_rng([seed, 0x5EED])
        self.depth = depth if workers > 0 else 0
        self._executor = ThreadPoolExecutor(max_workers=workers) if self.depth > 0 else None
        self._pending = deque()

    def _next_seed(self) -> int:
        return int(self._seeds.integers(2 ** 32))

    def __next__(self) -> Tuple[np.ndarray, np.ndarray]:
        if self._executor is None:
            return self.sampler.sample(self._next_seed())
        while len(self._pending) < self.depth + 1:
            self._pending.append(self._executor.submit(self.sampler.sample, self._next_seed()))
        return self._pending.popleft().result()

    def close(self):
        if self._executor is not None:
            for future in self._pending:
                future.cancel()
            self._executor.shutdown(wait=True)
            self._executor = None


# ========== Trainer ==========

class Trainer:
    """
    Trains one SRNetwork.

    Usage:
        trainer = Trainer(model, train_set, cfg, sink, out_dir, val_set=val_set)
        result = trainer.run()
    """

    def __init__(
        self,
        model,
        train_set: SRDataset,
        cfg: TrainConfig,
        sink: MetricSink,
        out_dir,
        val_set: Optional[SRDataset] = None,
        config_echo: Optional[dict] = None,
    ):
        cfg.validate(model.spec.scale)
        if train_set.scale != model.spec.scale:
            raise ConfigError(f"dataset scale {train_set.scale} differs from network scale {model.spec.scale}")
        self.model = model
        self.train_set = train_set
        self.val_set = val_set
        self.cfg = cfg
        self.sink = sink
        self.out_dir = Path(out_dir)
        self.config_echo = config_echo or {}
        self.optimizer = Adam(
            model.named_parameters(), lr=cfg.lr0,
            beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, epsilon=cfg.adam_eps,
        )
        self.sampler = PatchSampler(train_set, cfg.batch_size, cfg.patch_size, cfg.augment)
        self.step = 0

    # ---------- pieces ----------

    def train_step(self, lr_batch: np.ndarray, hr_batch: np.ndarray, lr: float) -> float:
        """Forward, L1, backward and one Adam update; returns the batch loss."""
        self.model.train()
        pred = self.model(Tensor(lr_batch))
        loss = l1_loss(pred, Tensor(hr_batch))
        backward(loss)
        self.optimizer.step(lr)
        self.optimizer.zero_grad()
        return loss.item()

    def validate(self) -> Optional[float]:
        if self.val_set is None or len(self.val_set) == 0:
            return None
        report = evaluate_model(self.model, self.val_set, shave=self.cfg.psnr_shave, crop=self.cfg.val_crop or None)
        return report.mean_model

    def save(self, name: str) -> Path:
        path = self.out_dir / "checkpoints" / name
        return save_checkpoint(self.model, path, step=self.step, config=self.config_echo)

    def _params_finite(self) -> bool:
        return all(np.isfinite(p.data).all() for p in self.model.parameters())

    def _abort(self, error: NumericalError):
        if self._params_finite():
            path = self.save(LAST_GOOD)
            logger.error(f"Non-finite value at step {self.step}; last good weights saved to {path}")
        else:
            logger.error(f"Non-finite value at step {self.step}; parameters are corrupt, see {LATEST}")
        raise error

    # ---------- loop ----------

    def run(self) -> TrainResult:
        cfg = self.cfg
        result = TrainResult(steps=0)
        stream = BatchStream(self.sampler, cfg.seed, cfg.prefetch, cfg.workers)
        window: List[float] = []
        started = time.perf_counter()
        logger.info(
            f"Training {self.model.spec.topology}/{self.model.spec.block.family} for {cfg.max_steps} steps "
            f"(batch {cfg.batch_size}, patch {cfg.patch_size}, lr0 {cfg.lr0:g})"
        )
        try:
            while self.step < cfg.max_steps:
                lr = lr_schedule(self.step, cfg.lr0, cfg.lr_halving_period)
                lr_batch, hr_batch = next(stream)
                try:
                    loss = self.train_step(lr_batch, hr_batch, lr)
                except NumericalError as e:
                    self._abort(e)
                self.step += 1
                result.losses.append(loss)
                window.append(loss)

                train_l1 = None
                if self.step % cfg.log_every == 0 or self.step == cfg.max_steps:
                    train_l1 = float(np.mean(window))
                    window = []
                    logger.info(f"  step {self.step:>6}/{cfg.max_steps}  lr {lr:.2e}  L1 {train_l1:.4f}")

                val_psnr = None
                if cfg.val_every and (self.step % cfg.val_every == 0 or self.step == cfg.max_steps):
                    try:
                        val_psnr = self.validate()
                    except NumericalError as e:
                        self._abort(e)
                    if val_psnr is not None:
                        result.val_psnr.append((self.step, val_psnr))
                        logger.info(f"  step {self.step:>6}  val PSNR {val_psnr:.2f} dB")

                if train_l1 is not None or val_psnr is not None:
                    self.sink.log(self.step, lr, train_l1, val_psnr)

                if cfg.checkpoint_every and self.step % cfg.checkpoint_every == 0:
                    self.save(f"step_{self.step:07d}.ckpt")
                    self.save(LATEST)
        finally:
            stream.close()

        result.steps = self.step
        result.checkpoint = self.save(LATEST)
        result.seconds = time.perf_counter() - started
        logger.info(f"Training finished: {self.step} steps in {result.seconds:.1f}s")
        return result


def train(model, dataset: SRDataset, cfg: TrainConfig, sink: MetricSink, out_dir,
          val_set: Optional[SRDataset] = None, config_echo: Optional[dict] = None) -> TrainResult:
    """Convenience wrapper: build a Trainer and run it."""
    return Trainer(model, dataset, cfg, sink, out_dir, val_set=val_set, config_echo=config_echo).run()
