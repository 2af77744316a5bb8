"""Training and evaluation: MSE loss on scaled targets, Adam updates,
chronological batching, and the baseline-variant comparison.

Variants reuse one architecture: the univariate baselines see only the
demand column, and the plain-LSTM baselines feed the last hidden state to
the head instead of the attention context.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .features import SplitDataset, WindowedDataset
from .lstm_att import (
    ModelConfig,
    ModelParams,
    backward,
    forward_batch,
    save_checkpoint,
)
from .nn_core import ParamTensor

VARIANTS = (
    "multivariate_lstm_att",
    "multivariate_lstm",
    "univariate_lstm",
    "univariate_lstm_att",
)


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 15
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    variant: str = "multivariate_lstm_att"
    hidden: int = 96
    head_input: str = "weighted_flatten"
    clip_norm: float | None = 5.0
    shuffle: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")

    @property
    def univariate(self) -> bool:
        return self.variant.startswith("univariate")

    @property
    def attention(self) -> bool:
        return self.variant.endswith("_att")


@dataclass
class MetricsReport:
    variant: str
    train_mse: float
    test_mse: float
    wall_time_s: float
    epoch_losses: list[float]
    seed: int

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "train_mse": self.train_mse,
            "test_mse": self.test_mse,
            "wall_time_s": self.wall_time_s,
            "epoch_losses": self.epoch_losses,
            "seed": self.seed,
        }


def mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class AdamState:
    """First/second moment buffers per parameter plus the step counter."""

    def __init__(self, tensors: list[ParamTensor]):
        self.m = [np.zeros_like(t.value) for t in tensors]
        self.v = [np.zeros_like(t.value) for t in tensors]
        self.t = 0


def adam_step(tensors: list[ParamTensor], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, reading each tensor's .grad in place."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for k, tensor in enumerate(tensors):
        g = tensor.grad
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * (g * g)
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        tensor.value -= lr * m_hat / (np.sqrt(v_hat) + eps)


def clip_gradients(tensors: list[ParamTensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = 0.0
    for t in tensors:
        total += float(np.sum(t.grad * t.grad))
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for t in tensors:
            t.grad *= scale
    return float(norm)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def _variant_inputs(inputs: np.ndarray, univariate: bool) -> np.ndarray:
    return inputs[..., :1] if univariate else inputs


def build_model(dataset_width: int, lookback: int, horizon: int,
                config: TrainConfig, seed: int | None = None) -> ModelParams:
    n = 1 if config.univariate else dataset_width
    model_cfg = ModelConfig(
        n_features=n,
        hidden=config.hidden,
        horizon=horizon,
        lookback=lookback,
        attention=config.attention,
        head_input=config.head_input,
    )
    return ModelParams.init(model_cfg, config.seed if seed is None else seed)


def train(dataset: SplitDataset, config: TrainConfig,
          checkpoint_dir=None,
          checkpoint_extra: dict | None = None) -> tuple[ModelParams, MetricsReport]:
    """Fit the configured variant on the training split.

    Batches run in chronological order unless ``shuffle`` draws a seeded
    permutation per epoch. Targets are clipped to [0,1] for the loss (test
    targets scaled with train statistics can stray slightly outside).
    Writes one checkpoint per epoch when ``checkpoint_dir`` is given.
    """
    t0 = time.perf_counter()
    tr = dataset.train
    if len(tr) == 0:
        raise ConfigError("training split is empty")
    params = build_model(tr.inputs.shape[2], tr.lookback, tr.horizon, config)
    tensors = params.tensors()
    state = AdamState(tensors)
    shuffle_rng = np.random.default_rng(config.seed) if config.shuffle else None

    N = len(tr)
    targets = np.clip(tr.targets, 0.0, 1.0)
    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        order = (shuffle_rng.permutation(N) if shuffle_rng is not None
                 else np.arange(N))
        total = 0.0
        for b, start in enumerate(range(0, N, config.batch_size)):
            idx = order[start:start + config.batch_size]
            X = _variant_inputs(tr.inputs[idx], config.univariate)
            Y = targets[idx]
            out, trace = forward_batch(X, params)
            loss = mse(out, Y)
            if not np.isfinite(loss):
                raise NumericError(
                    f"loss diverged at epoch {epoch + 1}, batch {b + 1}"
                )
            params.zero_grad()
            backward(trace, 2.0 * (out - Y) / out.size, params)
            if config.clip_norm is not None:
                clip_gradients(tensors, config.clip_norm)
            adam_step(tensors, state, config.learning_rate,
                      config.beta1, config.beta2, config.eps)
            total += loss * len(idx)
        epoch_losses.append(total / N)
        if checkpoint_dir is not None:
            extra = dict(checkpoint_extra or {})
            extra.update({"epoch": epoch + 1, "variant": config.variant,
                          "seed": config.seed})
            save_checkpoint(
                Path(checkpoint_dir) / f"epoch_{epoch + 1:03d}.json",
                params, extra,
            )

    test_mse = evaluate(params, dataset.test, config).mse
    report = MetricsReport(
        variant=config.variant,
        train_mse=epoch_losses[-1],
        test_mse=test_mse,
        wall_time_s=time.perf_counter() - t0,
        epoch_losses=epoch_losses,
        seed=config.seed,
    )
    return params, report


@dataclass
class EvalResult:
    mse: float
    predictions: np.ndarray            # scaled, (N, m)
    predictions_demand: np.ndarray | None = None  # inverse-transformed


def evaluate(params: ModelParams, windows: WindowedDataset,
             config: TrainConfig | None = None, scaler=None,
             batch_size: int = 256) -> EvalResult:
    """MSE over all windows plus per-window predictions; read-only.

    ``scaler`` adds inverse-transformed predictions in demand units for the
    actual-vs-predicted export.
    """
    if len(windows) == 0:
        raise ConfigError("cannot evaluate an empty window set")
    univariate = params.config.n_features == 1 and windows.inputs.shape[2] > 1
    preds = np.empty((len(windows), windows.horizon))
    for start in range(0, len(windows), batch_size):
        X = windows.inputs[start:start + batch_size]
        X = _variant_inputs(np.asarray(X), univariate)
        out, _ = forward_batch(X, params)
        preds[start:start + len(out)] = out
    targets = np.clip(windows.targets, 0.0, 1.0)
    score = mse(preds, targets)
    demand = None
    if scaler is not None:
        from .features import inverse_transform
        demand = inverse_transform(scaler, preds, column=0)
    return EvalResult(mse=score, predictions=preds, predictions_demand=demand)
