"""Joint end-to-end training and evaluation of the feedback codec."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..checkpoint import load_checkpoint, save_checkpoint
from ..tensor import Adam, Tensor, grad
from .loss import average_gcs, codec_loss
from .model import CodecConfig, CodecModel, to_real

__all__ = [
    "TrainConfig",
    "TrainResult",
    "EvalResult",
    "DivergenceError",
    "train_codec",
    "evaluate_codec",
    "save_codec",
    "load_codec",
    "LOG_COLUMNS",
]

log = logging.getLogger(__name__)
LOG_COLUMNS = ("epoch", "train_loss", "val_gcs", "lr", "wall_seconds")


class DivergenceError(FloatingPointError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 1e-3
    lr_decay: float = 0.5
    patience: int = 20
    epochs: int = 500
    max_steps: int | None = None
    seed: int = 0
    quantize: bool = True
    # stop once validation GCS reaches this value (None: run to the caps)
    target_gcs: float | None = None
    log_path: str | None = None
    checkpoint_path: str | None = None


@dataclass
class EvalResult:
    mean: float
    per_sample: np.ndarray


@dataclass
class TrainResult:
    model: CodecModel
    log: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)
    best_val: float = -math.inf
    best_epoch: int = -1
    steps: int = 0


def _as_pairs(data):
    Wbar, W = data
    Wbar, W = np.asarray(Wbar), np.asarray(W)
    if len(Wbar) == 0 or len(Wbar) != len(W):
        raise ValueError("datasets must be nonempty (W-bar, W) pairs of equal length")
    return Wbar, W


def evaluate_codec(model: CodecModel, data, quantize: bool = True, batch_size: int = 64) -> EvalResult:
    """Average GCS between targets and reconstructions.

    The target is the full-band W when the model extrapolates, otherwise the
    incorporated W-bar itself.
    """
    Wbar, W = _as_pairs(data)
    target = W if model.fen is not None else Wbar
    scores = []
    for s in range(0, len(Wbar), batch_size):
        W_hat = model.reconstruct(Wbar[s : s + batch_size], quantize)
        scores.append(average_gcs(target[s : s + batch_size], W_hat))
    per = np.concatenate(scores)
    return EvalResult(float(per.mean()), per)


def _state_blobs(model: CodecModel) -> dict:
    return model.state_dict()


def save_codec(path, model: CodecModel) -> Path:
    return save_checkpoint(path, {"kind": "codec", "config": model.cfg.to_dict()}, _state_blobs(model))


def load_codec(path) -> CodecModel:
    config, blobs = load_checkpoint(path)
    if config.get("kind") != "codec":
        raise ValueError(f"{path} is not a codec checkpoint")
    model = CodecModel(CodecConfig.from_dict(config["config"]))
    model.load_state_dict(blobs)
    return model


def train_codec(train, val, cfg: CodecConfig, tcfg: TrainConfig | None = None,
                model: CodecModel | None = None) -> TrainResult:
    """Minimize ``1 - mean rho^2`` through encoder, quantizer, decoder and extrapolation.

    ``train`` and ``val`` are ``(W_bar, W)`` pairs of complex arrays with
    shapes (n, N_T, N_grp) and (n, N_T, N_c). The returned model holds the
    weights of the best validation epoch.
    """
    tcfg = tcfg or TrainConfig()
    Wbar, W = _as_pairs(train)
    val = _as_pairs(val)
    model = model or CodecModel(cfg)
    params = model.parameters()
    opt = Adam(params, lr=tcfg.lr)
    rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, 1]))
    X = to_real(Wbar).astype(np.float32)
    Y = to_real(W if model.fen is not None else Wbar).astype(np.float32)

    result = TrainResult(model)
    best_state = model.state_dict()
    stale, lr, step = 0, tcfg.lr, 0
    last_finite = None
    start = time.perf_counter()
    writer = None
    fh = open(tcfg.log_path, "w", newline="") if tcfg.log_path else None
    try:
        if fh:
            writer = csv.writer(fh)
            writer.writerow(LOG_COLUMNS)
        for epoch in range(tcfg.epochs):
            model.train()
            order = rng.permutation(len(X))
            losses = []
            for s in range(0, len(order), tcfg.batch_size):
                idx = order[s : s + tcfg.batch_size]
                loss = codec_loss(Y[idx], model(Tensor(X[idx]), quantize=tcfg.quantize))
                value = float(loss.data)
                if not math.isfinite(value):
                    raise DivergenceError(
                        f"non-finite training loss at epoch {epoch}, step {step}; "
                        f"last finite loss {last_finite}, lr {lr}")
                last_finite = value
                grads = grad(loss, params)
                for p, g in zip(params, grads):
                    p.grad = g.data
                opt.step()
                losses.append(value)
                result.step_losses.append(value)
                step += 1
                if tcfg.max_steps is not None and step >= tcfg.max_steps:
                    break
            val_gcs = evaluate_codec(model, val, tcfg.quantize).mean
            row = (epoch, float(np.mean(losses)), val_gcs, lr, time.perf_counter() - start)
            result.log.append(dict(zip(LOG_COLUMNS, row)))
            if writer:
                writer.writerow(row)
                fh.flush()
            if val_gcs > result.best_val:
                result.best_val, result.best_epoch, stale = val_gcs, epoch, 0
                best_state = model.state_dict()
                if tcfg.checkpoint_path:
                    save_codec(tcfg.checkpoint_path, model)
            else:
                stale += 1
                if stale >= tcfg.patience:
                    lr *= tcfg.lr_decay
                    opt.set_lr(lr)
                    stale = 0
            done_steps = tcfg.max_steps is not None and step >= tcfg.max_steps
            if done_steps or (tcfg.target_gcs is not None and val_gcs >= tcfg.target_gcs):
                break
    finally:
        if fh:
            fh.close()
    model.load_state_dict(best_state)
    model.eval()
    result.steps = step
    return result
