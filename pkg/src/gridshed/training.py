"""Supervised training of GAT-S, error metrics and a mean-value baseline."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .dataset import fit_standardizer, shuffle_split
from .model import GatS, GraphBatch

log = logging.getLogger(__name__)

MAPE_GUARD = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-4
    batch_size: int = 32
    seed: int = 123
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass
class TrainHistory:
    steps: list = field(default_factory=list)  # (epoch, step, loss)
    epoch_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def step_losses(self) -> np.ndarray:
        return np.array([s[2] for s in self.steps])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "step", "loss"])
            for epoch, step, loss in self.steps:
                w.writerow([epoch, step, repr(float(loss))])


def smooth(values, window: int = 200) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` points average what is available."""
    values = np.asarray(values, dtype=float)
    c = np.cumsum(np.insert(values, 0, 0.0))
    idx = np.arange(1, values.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def batch_loss(model: GatS, batch: GraphBatch) -> ad.Tensor:
    y = model.forward(batch)
    return ad.mean_all(ad.square(y - batch.labels.reshape(-1, 1)))


def train(model: GatS, dataset, cfg: TrainConfig = TrainConfig(), fit_std: bool = True,
          progress=None):
    """Minimise the mean squared error with Adam over shuffled mini-batches.

    A seeded shuffle holds out ``val_fraction`` of the records for
    monitoring; no early stopping. When ``fit_std`` is set (or the model has
    no standardizer yet) the standardizer is fit on the training split and
    stored in the model.
    """
    records = list(dataset)
    if not records:
        raise ValueError("cannot train on an empty dataset")
    if any(r.label is None for r in records):
        raise ValueError("every training record needs a label")
    if cfg.val_fraction > 0 and len(records) > 1:
        train_recs, val_recs = shuffle_split(records, cfg.val_fraction, cfg.seed)
    else:
        train_recs, val_recs = records, []
    if fit_std or model.standardizer is None:
        model.standardizer = fit_standardizer(train_recs)

    std = model.standardizer
    train_std = [std.apply(r) for r in train_recs]
    val_batch = model.prepare(val_recs) if val_recs else None

    opt = ad.Adam(model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    hist = TrainHistory()
    t0 = time.perf_counter()
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_std))
        losses, sizes = [], []
        for i in range(0, len(order), cfg.batch_size):
            batch = GraphBatch.from_records([train_std[j] for j in order[i:i + cfg.batch_size]])
            sizes.append(batch.n_graphs)
            opt.zero_grad()
            loss = batch_loss(model, batch)
            loss.backward()
            opt.step()
            losses.append(loss.item())
            hist.steps.append((epoch, step, loss.item()))
            step += 1
        # per-sample mean, independent of how the epoch was cut into batches
        hist.epoch_loss.append(float(np.average(losses, weights=sizes)))
        if val_batch is not None:
            hist.val_loss.append(float(np.mean((model.forward(val_batch).data[:, 0] - val_batch.labels) ** 2)))
        log.debug("epoch %d loss %.6g", epoch, hist.epoch_loss[-1])
        if progress is not None:
            progress(epoch, hist)
    opt.zero_grad()
    hist.wall_time = time.perf_counter() - t0
    return model, hist


@dataclass
class MetricsReport:
    mse: float
    mae: float
    mape: float | None
    n_samples: int
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def metrics(predictions, labels, wall_time: float = 0.0) -> MetricsReport:
    pred = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if pred.size != y.size:
        raise ValueError(f"{pred.size} predictions for {y.size} labels")
    if pred.size == 0:
        raise ValueError("metrics need at least one sample")
    err = pred - y
    keep = np.abs(y) > MAPE_GUARD
    mape = float(np.mean(np.abs(err[keep]) / np.abs(y[keep]))) if keep.any() else None
    return MetricsReport(float(np.mean(err ** 2)), float(np.mean(np.abs(err))), mape,
                         int(pred.size), float(wall_time))


class MeanPredictor:
    def __init__(self, value: float):
        self.value = float(value)

    def predict(self, records) -> np.ndarray:
        return np.full(len(list(records)), self.value)

    def __call__(self, record=None) -> float:
        return self.value


def mean_baseline(train_labels) -> MeanPredictor:
    labels = np.asarray(list(train_labels), dtype=float)
    if labels.size == 0:
        raise ValueError("mean baseline needs at least one label")
    return MeanPredictor(labels.mean())
