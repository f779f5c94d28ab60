"""The training loop: sample, mine, route gradients, step.

Three modes share one code path and differ only in which levels carry
loss weight and how aggressively they mine:

  hdc                all levels active with the configured weights and
                     hard fractions;
  hard_single        only the deepest level carries loss, mining the top
                     50 percent of pairs (classic single-model mining on
                     the full-depth network);
  plain_contrastive  only the deepest level, no mining at all.
"""

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .data import Dataset, SamplerConfig, sample_batch
from .errors import ConfigError, TrainingAbort
from .mining import backward_cascade, cascade_mine, hdc_loss
from .model import CascadeModel

MODES = ("hdc", "hard_single", "plain_contrastive")
HARD_SINGLE_FRACTION = 50.0


@dataclass(frozen=True)
class TrainConfig:
    iterations: int
    lr_initial: float = 0.01
    lr_decay_every: int = 800
    lr_decay_factor: float = 0.1
    momentum: float = 0.9
    mode: str = "hdc"
    checkpoint_every: int = 0  # 0 disables periodic checkpoints
    seed: int = 0
    workers: int = 1
    rank_by: str = "current"

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.lr_initial < 0:
            raise ConfigError(f"lr_initial must be >= 0, got {self.lr_initial}")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            raise ConfigError("lr_decay_factor must lie in (0, 1]")
        if self.lr_decay_every < 1:
            raise ConfigError("lr_decay_every must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass
class TrainRecord:
    iteration: int
    lr: float
    total_loss: float
    level_mean_losses: tuple
    positive_counts: tuple
    negative_counts: tuple
    elapsed_s: float


@dataclass
class TrainLog:
    """Per-iteration records.  Wall time stays in memory only: the CSV on
    disk holds just the deterministic fields so identical runs produce
    byte-identical log files."""

    records: list = field(default_factory=list)

    def header(self, levels: int):
        cols = ["iteration", "lr", "total_loss"]
        for k in range(1, levels + 1):
            cols += [f"mean_loss_{k}", f"pos_{k}", f"neg_{k}"]
        return cols

    @staticmethod
    def row(rec: TrainRecord):
        cells = [str(rec.iteration), repr(rec.lr), repr(rec.total_loss)]
        for mean, np_, nn in zip(rec.level_mean_losses, rec.positive_counts, rec.negative_counts):
            cells += [repr(mean), str(np_), str(nn)]
        return cells

    def write_csv(self, path, levels: int):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header(levels))
            for rec in self.records:
                writer.writerow(self.row(rec))


def lr_at(iteration: int, config: TrainConfig) -> float:
    """Step schedule: lr_initial * factor^(iteration // decay_every)."""
    if iteration < 0:
        raise ConfigError("iteration must be >= 0")
    return config.lr_initial * config.lr_decay_factor ** (iteration // config.lr_decay_every)


def sgd_step(params, grads, momentum_buffers, lr: float, momentum: float) -> None:
    """In-place SGD with momentum: v <- m*v + g; p <- p - lr*v."""
    if not len(params) == len(grads) == len(momentum_buffers):
        raise ConfigError("params, grads and momentum buffers differ in length")
    for p, g, v in zip(params, grads, momentum_buffers):
        if p.shape != g.shape or p.shape != v.shape:
            raise ConfigError(f"shape mismatch in update: {p.shape} vs {g.shape}")
        v *= momentum
        v += g
        p -= lr * v


def effective_mining(config, mode: str):
    """(level_weights, hard_fractions) realizing the requested mode."""
    if mode == "hdc":
        return config.level_weights, config.hard_fractions
    deepest_only = tuple(0.0 for _ in range(config.levels - 1)) + (1.0,)
    keep_all = tuple(100.0 for _ in range(config.levels - 1))
    if mode == "hard_single":
        return deepest_only, keep_all + (HARD_SINGLE_FRACTION,)
    if mode == "plain_contrastive":
        return deepest_only, keep_all + (100.0,)
    raise ConfigError(f"unknown mode {mode!r}")


def train(
    model: CascadeModel,
    dataset: Dataset,
    train_config: TrainConfig,
    sampler_config: SamplerConfig,
    log_path=None,
    checkpoint_dir=None,
):
    """Run the configured number of iterations, mutating `model` in place.

    Returns (model, TrainLog).  A non-finite loss aborts immediately with
    the offending iteration and batch recorded on the exception.
    """
    weights, fractions = effective_mining(model.config, train_config.mode)
    rng = np.random.default_rng(train_config.seed)
    params = model.parameters()
    buffers = [np.zeros_like(p) for p in params]
    log = TrainLog()
    levels = model.config.levels

    log_fh = writer = None
    if log_path is not None:
        log_fh = open(log_path, "w", newline="")
        writer = csv.writer(log_fh)
        writer.writerow(log.header(levels))
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    try:
        for t in range(train_config.iterations):
            lr = lr_at(t, train_config)
            batch_idx = sample_batch(dataset, sampler_config, rng)
            batch_x = dataset.features[batch_idx]
            batch_labels = dataset.labels[batch_idx]

            cache, selection, losses = cascade_mine(
                model,
                batch_x,
                batch_labels,
                rank_by=train_config.rank_by,
                workers=train_config.workers,
                hard_fractions=fractions,
            )
            total = hdc_loss(losses, selection, weights)
            if not math.isfinite(total):
                raise TrainingAbort(
                    f"non-finite loss {total} at iteration {t}", t, batch_idx
                )
            grads = backward_cascade(
                model, cache, selection, level_weights=weights, workers=train_config.workers
            )
            sgd_step(params, grads.arrays(), buffers, lr, train_config.momentum)

            means, pos_counts, neg_counts = [], [], []
            for lv, sel in zip(losses, selection.levels):
                n_pos = sel.positive_kept.size
                n_neg = sel.negative_kept.size
                kept_sum = float(
                    lv.positive_losses[sel.positive_kept].sum()
                    + lv.negative_losses[sel.negative_kept].sum()
                )
                means.append(kept_sum / (n_pos + n_neg))
                pos_counts.append(n_pos)
                neg_counts.append(n_neg)
            rec = TrainRecord(
                iteration=t,
                lr=lr,
                total_loss=total,
                level_mean_losses=tuple(means),
                positive_counts=tuple(pos_counts),
                negative_counts=tuple(neg_counts),
                elapsed_s=time.perf_counter() - start,
            )
            log.records.append(rec)
            if writer is not None:
                writer.writerow(log.row(rec))
            if (
                ckpt_dir is not None
                and train_config.checkpoint_every
                and (t + 1) % train_config.checkpoint_every == 0
            ):
                save_checkpoint(model, ckpt_dir / f"iter_{t + 1:06d}.ckpt")
    finally:
        if log_fh is not None:
            log_fh.close()
    if ckpt_dir is not None:
        save_checkpoint(model, ckpt_dir / "final.ckpt")
    return model, log
