"""Mini-batch ADAM training with early stopping on the validation loss."""
import csv
import logging
import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from romforge.dataset import shuffle_batches
from romforge.errors import ConfigError, DivergenceError, FormatError
from romforge.nn import tensor as T
from romforge.nn.layers import BatchNorm
from romforge.nn.optim import Adam
from romforge.rng import Xoshiro256

log = logging.getLogger(__name__)

MODES = ("joint", "compression", "two-stage")


@dataclass
class TrainConfig:
    lr: float = 5e-4
    batch_size: int = 20
    early_stop: int = 200
    max_epochs: int = 5000
    seed: int = 0
    mode: str = "joint"

    def __post_init__(self):
        if self.early_stop < 1:
            raise ConfigError("early_stop must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"unknown training mode {self.mode!r}; choose from {MODES}")


@dataclass
class TrainReport:
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    best_val: float = math.inf
    best_epoch: int = 0
    stop_reason: str = ""

    @property
    def epochs(self):
        return len(self.val_losses)

    @property
    def seconds_per_epoch(self):
        return statistics.median(self.epoch_seconds) if self.epoch_seconds else 0.0

    def write_csv(self, path, timing=True):
        try:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["epoch", "train_loss", "val_loss", "seconds"])
                for i, (tl, vl) in enumerate(zip(self.train_losses, self.val_losses)):
                    sec = f"{self.epoch_seconds[i]:.6f}" if timing else "N/A"
                    w.writerow([i + 1, repr(tl), repr(vl), sec])
        except OSError as exc:
            raise FormatError(f"cannot write {path}: {exc}") from exc


class EarlyStopping:
    """Stop once ``patience`` consecutive epochs fail to beat the best loss."""

    def __init__(self, patience):
        self.patience = patience
        self.best = math.inf
        self.count = 0

    def update(self, loss):
        """Record one epoch; returns True when the loss improved."""
        if loss < self.best:
            self.best = loss
            self.count = 0
            return True
        self.count += 1
        return False

    @property
    def should_stop(self):
        return self.count >= self.patience


def _sq_sum(t):
    return T.tsum(T.square(t))


def joint_loss(nets, params, snaps, mode="joint"):
    """Batch-mean of the reconstruction plus latent-consistency loss.

    ``joint``: ``|x - g(F(p))|^2 + |h(x) - F(p)|^2``; ``compression``:
    ``|x - g(h(x))|^2``; ``predictor``: ``|h(x) - F(p)|^2`` alone.
    """
    snaps = T.as_tensor(snaps)
    n_b = snaps.shape[0]
    if mode == "compression":
        loss = _sq_sum(snaps - nets.decode(nets.encode(snaps)))
    elif mode == "joint":
        z = nets.predict(params)
        loss = _sq_sum(snaps - nets.decode(z)) + _sq_sum(nets.encode(snaps) - z)
    elif mode == "predictor":
        loss = _sq_sum(nets.encode(snaps) - nets.predict(params))
    else:
        raise ConfigError(f"unknown loss mode {mode!r}")
    loss = loss * (1.0 / n_b)
    if not np.isfinite(loss.data):
        raise DivergenceError("loss became non-finite")
    return loss


def dataset_loss(nets, data, mode="joint", chunk=200):
    """Full-set loss with batch norm in evaluation mode."""
    nets.eval()
    total = 0.0
    for i in range(0, len(data), chunk):
        p, x = data.params[i:i + chunk], data.snaps[i:i + chunk]
        total += float(joint_loss(nets, p, x, mode).data) * x.shape[0]
    return total / len(data)


def _has_batchnorm(nets):
    return any(isinstance(l, BatchNorm) for net in nets.parts.values() for l in net.layers)


def _trainable(nets, mode):
    if mode == "compression":
        return nets.encoder.parameters() + nets.decoder.parameters()
    if mode == "predictor":
        return nets.predictor.parameters()
    return nets.parameters()


def _fit(nets, train_set, val_set, cfg, mode, rng, report, on_epoch=None):
    params = _trainable(nets, mode)
    opt = Adam(params, lr=cfg.lr)
    stopper = EarlyStopping(cfg.early_stop)
    merge_singletons = _has_batchnorm(nets)
    best_state = nets.state()
    report.best_val = math.inf
    for epoch in range(1, cfg.max_epochs + 1):
        start = time.perf_counter()
        nets.train()
        if mode == "predictor":
            nets.encoder.eval()
        batches = shuffle_batches(train_set, cfg.batch_size, rng)
        if merge_singletons and len(batches) > 1 and len(batches[-1].params) == 1:
            # a batch of one cannot be batch-normalised; fold it into its neighbour
            last = batches.pop()
            prev = batches.pop()
            batches.append(type(last)(np.concatenate([prev.params, last.params]),
                                      np.concatenate([prev.snaps, last.snaps])))
        total = 0.0
        try:
            for b in batches:
                loss = joint_loss(nets, b.params, b.snaps, mode)
                T.backward(loss, params)
                opt.step()
                total += float(loss.data) * len(b.params)
            val = dataset_loss(nets, val_set, mode)
            if not math.isfinite(val):
                raise DivergenceError("validation loss became non-finite")
        except DivergenceError as exc:
            report.stop_reason = f"diverged at epoch {epoch}"
            nets.load_state(best_state)
            exc.report = report
            raise
        report.train_losses.append(total / len(train_set))
        report.val_losses.append(val)
        report.epoch_seconds.append(time.perf_counter() - start)
        if stopper.update(val):
            best_state = nets.state()
            report.best_val, report.best_epoch = val, epoch
        if on_epoch is not None:
            on_epoch(epoch, report)
        if stopper.should_stop:
            report.stop_reason = f"no improvement for {cfg.early_stop} epochs"
            break
    else:
        report.stop_reason = f"reached max_epochs={cfg.max_epochs}"
    nets.load_state(best_state)
    nets.eval()
    log.info("%s training stopped after %d epochs (%s); best val %.6g at epoch %d",
             mode, report.epochs, report.stop_reason, report.best_val, report.best_epoch)
    return report


def train(nets, train_set, val_set, cfg, on_epoch=None):
    """Train on normalised data; the best-validation weights are kept."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ConfigError("training and validation sets must be non-empty")
    rng = Xoshiro256(cfg.seed ^ 0x5DEECE66D)
    if cfg.mode != "two-stage":
        return _fit(nets, train_set, val_set, cfg, cfg.mode, rng, TrainReport(), on_epoch)
    first = _fit(nets, train_set, val_set, cfg, "compression", rng, TrainReport(), on_epoch)
    second = _fit(nets, train_set, val_set, cfg, "predictor", rng, TrainReport(), on_epoch)
    report = TrainReport(first.train_losses + second.train_losses,
                         first.val_losses + second.val_losses,
                         first.epoch_seconds + second.epoch_seconds,
                         second.best_val, first.epochs + second.best_epoch,
                         f"autoencoder: {first.stop_reason}; predictor: {second.stop_reason}")
    return report
