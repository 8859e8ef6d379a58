"""Epoch loop, validation-F1 threshold calibration, best-checkpoint retention and test evaluation."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .container import atomic_write_text
from .dataflow import (
    PreprocStats,
    WindowSet,
    benign_fraction,
    build_windows,
    fit_preprocessor,
    split_chronological,
    stratified_subsample,
    transform,
)
from .errors import ConfigError
from .metrics import ConfusionMatrix, MetricsReport, class_scores, evaluate_scores
from .model import Checkpoint, ModelConfig, init_params, loss_and_grads, predict_scores
from .optim import AdamConfig, AdamState, adam_step, clip_global_norm
from .tensor import Rng

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 5.0
    seed: int = 0
    patience: int | None = None  # early stopping off by default
    eval_batch_size: int = 512

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 when set")

    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2, self.eps)


@dataclass
class EpochReport:
    epoch: int
    loss: float
    threshold: float
    f1: float
    precision: float
    recall: float
    accuracy: float
    seconds: float = 0.0


# --------------------------------------------------------------------------
# threshold calibration


def _require_both_classes(labels: np.ndarray, what: str):
    if labels.size == 0 or labels.min() == labels.max():
        raise ConfigError(f"{what} must contain both classes for F1 calibration")


def f1_at(scores: np.ndarray, labels: np.ndarray, tau: float) -> float:
    return evaluate_scores(scores, labels, tau).f1


def calibrate_threshold(scores, labels) -> tuple[float, float]:
    """Threshold maximizing attack-class F1 with verdict ``score > tau``.

    F1 only changes where ``tau`` crosses an observed score, so it suffices to
    try 0 (everything positive), every midpoint between consecutive distinct
    scores, and 0.5. Ties go to the smallest threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    _require_both_classes(labels, "calibration labels")

    uniq = np.unique(scores)
    candidates = np.unique(np.concatenate([[0.0, 0.5], (uniq[:-1] + uniq[1:]) / 2]))
    # counts of scores strictly above each candidate, via sorted search
    order = np.sort(scores)
    pos_sorted = np.sort(scores[labels == 1])
    above = len(order) - np.searchsorted(order, candidates, side="right")
    tp = len(pos_sorted) - np.searchsorted(pos_sorted, candidates, side="right")
    fp = above - tp
    fn = len(pos_sorted) - tp
    best_tau, best_f1 = None, -1.0
    for tau, a, b, c in zip(candidates, tp, fp, fn):
        f1 = class_scores(ConfusionMatrix(int(a), 0, int(b), int(c))).f1
        if f1 > best_f1:
            best_tau, best_f1 = float(tau), f1
    return best_tau, best_f1


# --------------------------------------------------------------------------
# training


def _metadata(windows: WindowSet, train_config: TrainConfig, **extra) -> dict:
    return {"T": windows.T, "stride": windows.stride, "train_config": asdict(train_config), **extra}


def train(
    windows_train: WindowSet,
    windows_val: WindowSet,
    model_config: ModelConfig,
    train_config: TrainConfig,
    stats: PreprocStats,
) -> tuple[Checkpoint, list[EpochReport]]:
    """Train with seeded mini-batch Adam; keep the epoch with the best validation F1."""
    if len(windows_train) == 0 or len(windows_val) == 0:
        raise ConfigError("training and validation windows must be non-empty")
    _require_both_classes(windows_val.labels, "validation split")
    if windows_train.n_features != model_config.n or windows_train.T != model_config.T:
        raise ConfigError(
            f"windows are (T={windows_train.T}, n={windows_train.n_features}), "
            f"model expects (T={model_config.T}, n={model_config.n})"
        )

    seed = train_config.seed
    params = init_params(model_config, Rng(seed, stream=0))
    shuffle_rng = Rng(seed, stream=1)
    dropout_rng = Rng(seed, stream=2)
    state = AdamState.zeros_like(params, train_config.adam())

    X, y = windows_train.sequences, windows_train.labels
    N = len(windows_train)
    history: list[EpochReport] = []
    best: Checkpoint | None = None
    best_f1 = -1.0
    stale = 0
    for epoch in range(1, train_config.epochs + 1):
        t0 = time.perf_counter()
        perm = shuffle_rng.permutation(N)
        total = 0.0
        for lo in range(0, N, train_config.batch_size):
            idx = perm[lo:lo + train_config.batch_size]
            loss, grads = loss_and_grads(X[idx], y[idx], params, model_config, dropout_rng, training=True)
            if train_config.clip_norm:
                grads = clip_global_norm(grads, train_config.clip_norm)
            params, state = adam_step(params, grads, state)
            total += loss * len(idx)
        epoch_loss = total / N

        val_scores = predict_scores(windows_val.sequences, params, model_config, train_config.eval_batch_size)
        tau, _ = calibrate_threshold(val_scores, windows_val.labels)
        rep = evaluate_scores(val_scores, windows_val.labels, tau)
        report = EpochReport(
            epoch, epoch_loss, tau, rep.f1, rep.precision, rep.recall, rep.accuracy, time.perf_counter() - t0
        )
        history.append(report)
        log.info(
            "epoch %d loss %.6f val f1 %.4f (P %.4f R %.4f) tau %.6f [%.1fs]",
            epoch, epoch_loss, rep.f1, rep.precision, rep.recall, tau, report.seconds,
        )
        if rep.f1 > best_f1:
            best_f1, stale = rep.f1, 0
            best = Checkpoint(
                model_config,
                {k: v.copy() for k, v in params.items()},
                stats,
                tau,
                _metadata(windows_train, train_config, best_epoch=epoch, best_val_f1=rep.f1),
            )
        else:
            stale += 1
            if train_config.patience is not None and stale >= train_config.patience:
                log.info("early stop after %d epochs without improvement", stale)
                break
    best.metadata["epochs_run"] = len(history)
    return best, history


def untrained_checkpoint(
    windows_val: WindowSet, model_config: ModelConfig, stats: PreprocStats, seed: int = 0
) -> Checkpoint:
    """Random-init model with its threshold calibrated on validation, for baseline comparisons."""
    _require_both_classes(windows_val.labels, "validation split")
    params = init_params(model_config, Rng(seed, stream=0))
    scores = predict_scores(windows_val.sequences, params, model_config)
    tau, f1 = calibrate_threshold(scores, windows_val.labels)
    meta = {"T": windows_val.T, "stride": windows_val.stride, "epochs_run": 0, "best_epoch": 0, "best_val_f1": f1}
    return Checkpoint(model_config, params, stats, tau, meta)


def evaluate(ckpt: Checkpoint, windows_test: WindowSet) -> MetricsReport:
    if len(windows_test) == 0:
        raise ConfigError("test set is empty")
    scores = predict_scores(windows_test.sequences, ckpt.params, ckpt.config)
    return evaluate_scores(scores, windows_test.labels, ckpt.threshold)


def majority_baseline(labels) -> MetricsReport:
    """Metrics of the constant attack verdict."""
    labels = np.asarray(labels)
    return evaluate_scores(np.ones(len(labels)), labels, 0.5)


# --------------------------------------------------------------------------
# history export


def _csv(rows: list[list], header: list[str]) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def loss_curve_csv(history: list[EpochReport]) -> str:
    return _csv([[r.epoch, repr(r.loss)] for r in history], ["epoch", "loss"])


def epoch_metrics_csv(history: list[EpochReport]) -> str:
    cols = ["epoch", "loss", "threshold", "f1", "precision", "recall", "accuracy"]
    return _csv([[repr(getattr(r, c)) if c != "epoch" else r.epoch for c in cols] for r in history], cols)


def write_history(history: list[EpochReport], ckpt: Checkpoint, out_dir) -> dict[str, Path]:
    """Write ``loss_curve.csv``, ``epoch_metrics.csv`` and ``train_summary.json``.

    Wall-clock times are left out so reruns produce identical bytes.
    """
    out_dir = Path(out_dir)
    paths = {
        "loss_curve": out_dir / "loss_curve.csv",
        "epoch_metrics": out_dir / "epoch_metrics.csv",
        "summary": out_dir / "train_summary.json",
    }
    summary = {
        "epochs_run": len(history),
        "best_epoch": ckpt.metadata.get("best_epoch"),
        "best_val_f1": ckpt.metadata.get("best_val_f1"),
        "threshold": ckpt.threshold,
        "first_loss": history[0].loss,
        "final_loss": history[-1].loss,
        "checkpoint_sha256": ckpt.digest(),
    }
    atomic_write_text(paths["loss_curve"], loss_curve_csv(history))
    atomic_write_text(paths["epoch_metrics"], epoch_metrics_csv(history))
    atomic_write_text(paths["summary"], json.dumps(summary, indent=2) + "\n")
    return paths


# --------------------------------------------------------------------------
# dataset preparation


@dataclass
class Prepared:
    stats: PreprocStats
    train: WindowSet
    val: WindowSet
    test: WindowSet
    records: tuple[list, list, list]
    summary: dict = field(default_factory=dict)


def prepare(
    records,
    ratios=(0.6, 0.2, 0.2),
    T: int = 10,
    stride: int = 1,
    subsample: int | None = None,
    seed: int = 0,
) -> Prepared:
    """Optional stratified subsample, chronological split, train-only fit, then windowing per split."""
    total = len(records)
    if subsample is not None:
        records = stratified_subsample(records, subsample, seed)
    splits = split_chronological(records, ratios)
    stats = fit_preprocessor(splits[0])
    windows = [build_windows(transform(part, stats), T, stride) for part in splits]
    summary = {
        "records_loaded": total,
        "records_used": len(records),
        "benign_share": benign_fraction(records),
        "ratios": list(ratios),
        "T": T,
        "stride": stride,
        "seed": seed,
        "subsample": subsample,
        "features": stats.feature_names,
        "dropped_features": stats.dropped,
        "splits": {
            name: {
                "rows": len(part),
                "benign_share": benign_fraction(part),
                "windows": len(ws),
                "window_attack_share": float(ws.labels.mean()),
            }
            for name, part, ws in zip(("train", "val", "test"), splits, windows)
        },
    }
    return Prepared(stats, *windows, tuple(splits), summary)
