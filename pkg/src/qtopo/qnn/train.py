"""Mini-batch training loop and evaluation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .. import rng as seeds
from ..errors import ConfigurationError, NumericalFailureError
from .model import N_CLASSES, Network, build, class_index, cross_entropy, make_optimizer

log = logging.getLogger(__name__)

CURVE_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class Evaluation:
    accuracy: float
    loss: float
    confusion: np.ndarray  # rows: true class index, columns: predicted
    predictions: np.ndarray  # predicted class index per sample

    @property
    def count(self) -> int:
        return int(self.confusion.sum())


def _as_indices(labels) -> np.ndarray:
    return np.array([class_index(int(c)) for c in labels], dtype=np.int64)


def evaluate(net: Network, spins, labels, batch_size: int = 256) -> Evaluation:
    """Accuracy, mean loss and confusion matrix; ``labels`` are Chern numbers."""
    if len(spins) == 0:
        raise ConfigurationError("cannot evaluate on an empty dataset")
    y = _as_indices(labels)
    probs = net.predict(spins, batch_size)
    pred = probs.argmax(axis=1)
    conf = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(conf, (y, pred), 1)
    return Evaluation(float(np.mean(pred == y)), cross_entropy(probs, y), conf, pred)


def train(cfg, train_spins, train_labels, val_spins=None, val_labels=None,
          net: Network | None = None, callback=None) -> tuple[Network, list[EpochRecord]]:
    """Train a fresh network (or continue ``net``) and return it with its learning curve.

    Shuffling and dropout draw from streams of ``cfg.seed`` so runs are
    bit-reproducible.  Training metrics are running averages over the epoch
    with dropout active; validation metrics use the network after the epoch.
    """
    if len(train_spins) == 0:
        raise ConfigurationError("training set is empty")
    net = net or build(cfg)
    opt = make_optimizer(cfg)
    y = _as_indices(train_labels)
    n = len(y)
    records = []
    for epoch in range(1, cfg.epochs + 1):
        opt.lr = cfg.learning_rate_at(epoch)
        order = seeds.generator(cfg.seed, seeds.SHUFFLE, epoch).permutation(n)
        net.set_dropout_rng(seeds.generator(cfg.seed, seeds.DROPOUT, epoch))
        loss_sum, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x = net.encode(train_spins[idx])
            loss, probs = net.loss_and_grads(x, y[idx], train=True)
            if not np.isfinite(loss):
                raise NumericalFailureError(f"loss diverged at epoch {epoch}, batch offset {start}")
            opt.step(net)
            loss_sum += loss * len(idx)
            correct += int(np.sum(probs.argmax(axis=1) == y[idx]))
        val_loss = val_acc = float("nan")
        if val_spins is not None and len(val_spins):
            ev = evaluate(net, val_spins, val_labels)
            val_loss, val_acc = ev.loss, ev.accuracy
        rec = EpochRecord(epoch, loss_sum / n, correct / n, val_loss, val_acc)
        records.append(rec)
        log.info("epoch %d  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f",
                 epoch, rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc)
        if callback is not None:
            callback(rec)
    return net, records


def write_curve(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_FIELDS)
        for r in records:
            w.writerow([r.epoch] + [repr(float(getattr(r, f))) for f in CURVE_FIELDS[1:]])
