"""Training and evaluation loops."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import nn_core
from .checkpoint import Checkpoint
from .dataset import Split, load_split
from .errors import ContractError, NumericError
from .loss import build_bipartite_graph, bpd_loss, mse_loss, total_loss
from .metrics import EvalReport, evaluation_report
from .nn_core import ModelConfig
from .optim import adam_init, adam_step
from .synthgen import VERTEBRA_NAMES

LOSS_KINDS = ("mse", "mse-bpd")
ORACLE = "oracle"


@dataclass
class TrainConfig:
    data_dir: str
    epochs: int
    alpha: float = 0.01
    lr: float = 1e-4
    batch_size: int = 4
    seed: int = 0
    loss_kind: str = "mse-bpd"
    model: ModelConfig | None = None  # None: default architecture at the dataset resolution

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.alpha < 0:
            raise ContractError(f"alpha must be >= 0, got {self.alpha}")
        if self.loss_kind not in LOSS_KINDS:
            raise ContractError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.epochs < 0:
            raise ContractError(f"epochs must be >= 0, got {self.epochs}")

    @property
    def effective_alpha(self) -> float:
        return 0.0 if self.loss_kind == "mse" else self.alpha

    def digest(self, model: ModelConfig) -> str:
        """Hash of everything that shapes the optimization trajectory.

        The data path is excluded, and ``loss_kind`` enters only through the effective
        alpha, so the MSE baseline and MSE-BPD with alpha 0 share a digest.
        """
        payload = {
            "alpha": self.effective_alpha,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "model": model.to_dict(),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list[dict] = field(default_factory=list)


def _batch_loss(pred, target, graph, alpha, loss_kind):
    if loss_kind == "mse":
        mse, grad = mse_loss(pred, target)
        bpd, _ = bpd_loss(pred, target, graph)
        return mse, grad, mse, bpd
    return total_loss(pred, target, graph, alpha)


def predict(config: ModelConfig, params, images: np.ndarray, chunk: int = 8) -> np.ndarray:
    """Infer-mode predictions for a stack of (N, 1, H, W) images."""
    out = []
    for i in range(0, len(images), chunk):
        pred, _ = nn_core.model_forward(config, params, images[i:i + chunk], mode="infer")
        out.append(pred)
    return np.concatenate(out)


def validation_loss(config: ModelConfig, params, split: Split, graph, alpha: float) -> float:
    pred = predict(config, params, split.images)
    return float(total_loss(pred, split.landmarks, graph, alpha).value)


def train(config: TrainConfig, log_path: str | os.PathLike | None = None,
          progress: Callable[[dict], None] | None = None) -> TrainResult:
    """Minibatch Adam on the train split; one log record per epoch.

    Random streams are derived from ``config.seed``: parameter init, per-epoch shuffles
    and dropout masks each get their own generator, so runs are reproducible bit for bit.
    """
    train_split = load_split(config.data_dir, "train")
    val_split = load_split(config.data_dir, "val")
    model = config.model or ModelConfig(input_height=train_split.height, input_width=train_split.width,
                                        n_landmarks=train_split.landmarks.shape[1] // 2,
                                        fc_sizes=(512, 512, train_split.landmarks.shape[1]))
    if (model.input_height, model.input_width) != (train_split.height, train_split.width):
        raise ContractError(
            f"model expects {model.input_height}x{model.input_width} images, "
            f"dataset has {train_split.height}x{train_split.width}"
        )
    graph = build_bipartite_graph(model.n_landmarks // 4)
    alpha = config.effective_alpha
    params = nn_core.init_params(model, config.seed)
    state = adam_init(params, lr=config.lr, names=nn_core.trainable_names(model))
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    n = len(train_split.ids)
    log: list[dict] = []
    log_file = open(log_path, "w") if log_path is not None else None
    try:
        for epoch in range(1, config.epochs + 1):
            order = shuffle_rng.permutation(n)
            totals = np.zeros(3)
            for b, start in enumerate(range(0, n, config.batch_size)):
                idx = order[start:start + config.batch_size]
                x, y = train_split.images[idx], train_split.landmarks[idx]
                try:
                    pred, cache = nn_core.model_forward(model, params, x, mode="train", rng=dropout_rng)
                except NumericError as exc:
                    raise NumericError(f"epoch {epoch}, batch {b}: {exc}") from exc
                value, grad, mse, bpd = _batch_loss(pred, y, graph, alpha, config.loss_kind)
                if not np.isfinite(value):
                    raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
                grads = nn_core.model_backward(cache, params, grad)
                params, state = adam_step(nn_core.merge_running_stats(params, cache), grads, state)
                totals += len(idx) * np.array([value, mse, bpd])
            totals /= n
            record = {
                "epoch": epoch,
                "train_loss": float(totals[0]),
                "val_loss": validation_loss(model, params, val_split, graph, alpha),
                "mse_component": float(totals[1]),
                "bpd_component": float(totals[2]),
            }
            log.append(record)
            if log_file is not None:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
            if progress is not None:
                progress(record)
    finally:
        if log_file is not None:
            log_file.close()
    ckpt = Checkpoint(model_config=model, params=params, adam=state,
                      train_config_digest=config.digest(model))
    return TrainResult(ckpt, log)


def evaluate(checkpoint: Checkpoint | str, data_dir: str | os.PathLike, split: str = "test") -> EvalReport:
    """Statistics of infer-mode predictions on a split.

    ``checkpoint`` may be the string ``"oracle"``, which predicts the ground truth.
    """
    data = load_split(data_dir, split)
    if isinstance(checkpoint, str):
        if checkpoint != ORACLE:
            raise ContractError(f"unknown pseudo-checkpoint {checkpoint!r}")
        pred = data.landmarks.copy()
    else:
        cfg = checkpoint.model_config
        if (cfg.input_height, cfg.input_width) != (data.height, data.width):
            raise ContractError(
                f"checkpoint expects {cfg.input_height}x{cfg.input_width} images, "
                f"dataset has {data.height}x{data.width}"
            )
        pred = predict(cfg, checkpoint.params, data.images)
    names = VERTEBRA_NAMES if data.landmarks.shape[1] == 8 * len(VERTEBRA_NAMES) else None
    return evaluation_report(pred, data.landmarks, data.height, data.width, names)
