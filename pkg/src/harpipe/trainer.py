"""Deterministic training loop and a scikit-learn style classifier.

One training job is sequential over mini-batches; mini-batch order is
reshuffled every epoch from a per-epoch seed (config seed + epoch
index), so runs are reproducible regardless of scheduling. Model
selection keeps the parameter snapshot with the best validation AUROC,
with early stopping after a configurable number of stale epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .domain import LabeledWindow
from .metrics import auroc
from .network import (
    DEFAULT_LAYERS,
    AdamHyper,
    NetworkSpec,
    NetworkState,
    adam_step,
    forward,
    init_network,
    loss_and_grads,
    parse_layer_string,
)

PREDICT_CHUNK = 512


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    adam: AdamHyper = field(default_factory=AdamHyper)
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")


@dataclass
class TrainHistory:
    """Per-epoch training loss and validation AUROC, plus the epoch kept."""

    train_loss: list[float]
    val_auroc: list[float]
    selected_epoch: int


def check_windows_array(X) -> np.ndarray:
    """Coerce windows to a finite float64 (N, C, L) array.

    Accepts an ndarray or a sequence of LabeledWindow.
    """
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], LabeledWindow):
        X = np.stack([w.data for w in X])
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"windows must be a (N, channels, length) array, got {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("windows contain non-finite values")
    return X


def check_binary_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != n:
        raise ValueError(f"{y.shape[0]} labels for {n} windows")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary 0/1")
    return y


def predict(state: NetworkState, windows) -> np.ndarray:
    """Score windows with a trained network; pure, order-aligned."""
    X = check_windows_array(windows)
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], PREDICT_CHUNK):
        part = X[start : start + PREDICT_CHUNK]
        out[start : start + part.shape[0]] = forward(state, part)
    return out


def _fit_loop(
    spec: NetworkSpec,
    cfg: TrainConfig,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
) -> tuple[NetworkState, TrainHistory]:
    if x_train.shape[0] == 0:
        raise ValueError("empty training partition")
    if x_val.shape[0] == 0:
        raise ValueError("empty validation partition")

    state = init_network(spec, cfg.seed)
    n = x_train.shape[0]
    losses: list[float] = []
    val_scores: list[float] = []
    best_state = state
    best_auroc = -np.inf
    best_epoch = 0
    stale = 0

    for epoch in range(cfg.epochs):
        perm = np.random.default_rng(cfg.seed + epoch).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            take = perm[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(state, x_train[take], y_train[take])
            state = adam_step(state, grads, cfg.adam)
            epoch_loss += loss * take.shape[0]
        losses.append(epoch_loss / n)

        epoch_auroc = auroc(predict(state, x_val), y_val)
        val_scores.append(epoch_auroc)
        if epoch_auroc > best_auroc:
            best_auroc = epoch_auroc
            best_state = state  # states are immutable, no copy needed
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    return best_state, TrainHistory(losses, val_scores, best_epoch)


def train_binary(task, spec: NetworkSpec, cfg: TrainConfig):
    """Train one classifier on a BinaryTask (see evaluation.make_task).

    Returns (best NetworkState, TrainHistory); deterministic in
    (task, spec, cfg). The validation partition drives model selection;
    the test partition is never touched here.
    """
    if not task.train.windows:
        raise ValueError("empty train partition")
    if not task.validation.windows:
        raise ValueError("empty validation partition")
    x_train = check_windows_array(list(task.train.windows))
    y_train = check_binary_labels(task.train.labels, x_train.shape[0])
    x_val = check_windows_array(list(task.validation.windows))
    y_val = check_binary_labels(task.validation.labels, x_val.shape[0])
    return _fit_loop(spec, cfg, x_train, y_train, x_val, y_val)


class ConvNetBinaryClassifier(BaseEstimator, ClassifierMixin):
    """Binary 1D-conv window classifier with the estimator interface.

    fit/predict/predict_proba plus get_params/set_params, so the model
    slots into scikit-learn tooling. Training is the deterministic loop
    above; when no validation set is passed, a stratified fraction of
    the training data is held out for model selection.
    """

    def __init__(
        self,
        layers: str = DEFAULT_LAYERS,
        epochs: int = 30,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
        patience: int = 5,
        validation_fraction: float = 0.2,
        seed: int = 0,
    ):
        self.layers = layers
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            adam=AdamHyper(self.learning_rate, self.beta1, self.beta2, self.epsilon),
            patience=self.patience,
            seed=self.seed,
        )

    def fit(self, X, y, validation_data: Optional[tuple] = None):
        X = check_windows_array(X)
        y = check_binary_labels(y, X.shape[0])
        spec = self.layers
        if isinstance(spec, str):
            spec = parse_layer_string(spec, X.shape[1:])

        if validation_data is not None:
            x_val = check_windows_array(validation_data[0])
            y_val = check_binary_labels(validation_data[1], x_val.shape[0])
            x_train, y_train = X, y
        else:
            if not 0.0 < self.validation_fraction < 1.0:
                raise ValueError("validation_fraction must be in (0, 1)")
            rng = np.random.default_rng(self.seed)
            val_idx: list[np.ndarray] = []
            train_idx: list[np.ndarray] = []
            for cls in (0.0, 1.0):  # stratified so AUROC is defined
                members = np.flatnonzero(y == cls)
                members = members[rng.permutation(members.shape[0])]
                n_val = max(1, int(round(members.shape[0] * self.validation_fraction)))
                val_idx.append(members[:n_val])
                train_idx.append(members[n_val:])
            vi = np.sort(np.concatenate(val_idx))
            ti = np.sort(np.concatenate(train_idx))
            x_train, y_train = X[ti], y[ti]
            x_val, y_val = X[vi], y[vi]

        self.state_, self.history_ = _fit_loop(
            spec, self._config(), x_train, y_train, x_val, y_val
        )
        self.classes_ = np.array([0, 1])
        return self

    def _scores(self, X) -> np.ndarray:
        if not hasattr(self, "state_"):
            raise NotFittedError("fit must be called before predict")
        return predict(self.state_, X)

    def predict_proba(self, X) -> np.ndarray:
        p = self._scores(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self._scores(X) >= 0.5).astype(np.int64)


def history_csv(history: TrainHistory) -> str:
    lines = ["epoch,train_loss,val_auroc"]
    for i, (loss, score) in enumerate(zip(history.train_loss, history.val_auroc)):
        lines.append(f"{i},{loss!r},{score!r}")
    return "\n".join(lines) + "\n"


def write_history(history: TrainHistory, path: Path) -> None:
    Path(path).write_text(history_csv(history), encoding="utf-8", newline="\n")
