"""The forecasting model: a single LSTM layer over the input window,
additive attention over its hidden states, and a ReLU dense head that
emits the full multi-step forecast in one shot.

Per step t (input x_t, previous hidden h, previous cell C):

    f_t = sigmoid(W_f x_t + U_f h + b_f)
    i_t = sigmoid(W_i x_t + U_i h + b_i)
    Chat_t = tanh(W_C x_t + U_C h + b_C)
    C_t = f_t * C + i_t * Chat_t
    o_t = sigmoid(W_o x_t + U_o h + b_o)
    h_t = o_t * tanh(C_t)

Attention scores e_t = tanh(W_a h_t + b_a) (one scalar per step) are
softmax-normalized into weights a_t; the context vector sum(a_t h_t)
feeds the output head relu(W_out c + b_out).

Both a reference single-window path and a batched path are provided; the
batched path carries the complete backward pass (BPTT) used in training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError, ShapeError, TapeError
from .nn_core import (
    ParamTensor,
    as_f64,
    glorot_uniform,
    matmul,
    recurrent_uniform,
    relu,
    sigmoid,
    softmax,
    tanh,
)

CHECKPOINT_FORMAT = "demandcast/checkpoint-v1"
GATES = ("f", "i", "C", "o")
HEAD_INPUTS = ("context", "weighted_flatten")


@dataclass(frozen=True)
class ModelConfig:
    n_features: int
    hidden: int = 96
    horizon: int = 96
    lookback: int = 96
    attention: bool = True
    head_input: str = "weighted_flatten"

    def __post_init__(self):
        if self.n_features < 1 or self.hidden < 1:
            raise ConfigError("n_features and hidden must be positive")
        if self.horizon < 1 or self.lookback < 1:
            raise ConfigError("horizon and lookback must be positive")
        if self.head_input not in HEAD_INPUTS:
            raise ConfigError(f"head_input must be one of {HEAD_INPUTS}")

    @property
    def head_dim(self) -> int:
        if self.attention and self.head_input == "weighted_flatten":
            return self.lookback * self.hidden
        return self.hidden

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "hidden": self.hidden,
            "horizon": self.horizon,
            "lookback": self.lookback,
            "attention": self.attention,
            "head_input": self.head_input,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        return cls(**doc)


class ModelParams:
    """All trainable weights, each a ParamTensor with an in-place gradient."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None):
        self.config = config
        H, n, m = config.hidden, config.n_features, config.horizon

        def draw(kind, rows, cols):
            if rng is None:
                return np.zeros((rows, cols))
            if kind == "glorot":
                return glorot_uniform(rng, rows, cols)
            return recurrent_uniform(rng, rows, cols)

        self.W = {g: ParamTensor(f"W_{g}", draw("glorot", H, n)) for g in GATES}
        self.U = {g: ParamTensor(f"U_{g}", draw("recurrent", H, H)) for g in GATES}
        self.b = {g: ParamTensor(f"b_{g}", np.zeros(H)) for g in GATES}
        self.b["f"].value[:] = 1.0  # forget bias aids early-epoch memory
        if config.attention:
            self.W_a = ParamTensor("W_a", draw("glorot", 1, H))
            self.b_a = ParamTensor("b_a", np.zeros(1))
        else:
            self.W_a = None
            self.b_a = None
        self.W_out = ParamTensor("W_out", draw("glorot", m, config.head_dim))
        self.b_out = ParamTensor("b_out", np.zeros(m))

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "ModelParams":
        return cls(config, np.random.default_rng(seed))

    def tensors(self) -> list[ParamTensor]:
        out = [self.W[g] for g in GATES]
        out += [self.U[g] for g in GATES]
        out += [self.b[g] for g in GATES]
        if self.W_a is not None:
            out += [self.W_a, self.b_a]
        out += [self.W_out, self.b_out]
        return out

    def zero_grad(self) -> None:
        for t in self.tensors():
            t.zero_grad()


# ---------------------------------------------------------------------------
# reference single-window operations
# ---------------------------------------------------------------------------

def lstm_step(x_t, h_prev, c_prev, params: ModelParams):
    """One LSTM cell update on vectors; returns (h_t, C_t, gate cache)."""
    x_t = as_f64(x_t)
    h_prev = as_f64(h_prev)
    c_prev = as_f64(c_prev)
    H = params.config.hidden
    if h_prev.shape != (H,) or c_prev.shape != (H,):
        raise ShapeError(f"state shapes {h_prev.shape}/{c_prev.shape} != ({H},)")
    f = sigmoid(matmul(params.W["f"].value, x_t) + matmul(params.U["f"].value, h_prev)
                + params.b["f"].value)
    i = sigmoid(matmul(params.W["i"].value, x_t) + matmul(params.U["i"].value, h_prev)
                + params.b["i"].value)
    chat = tanh(matmul(params.W["C"].value, x_t) + matmul(params.U["C"].value, h_prev)
                + params.b["C"].value)
    c = f * c_prev + i * chat
    o = sigmoid(matmul(params.W["o"].value, x_t) + matmul(params.U["o"].value, h_prev)
                + params.b["o"].value)
    h = o * np.tanh(c)
    cache = {"x": x_t, "h_prev": h_prev, "c_prev": c_prev,
             "f": f, "i": i, "chat": chat, "c": c, "o": o, "h": h}
    return h, c, cache


def attention(hidden_states, params: ModelParams):
    """Additive attention over a (p, hidden) state sequence.

    Returns the softmax weights (p,) and the context vector (hidden,).
    """
    hs = as_f64(hidden_states)
    if params.W_a is None:
        raise ConfigError("model was built without an attention layer")
    scores = hs @ params.W_a.value[0] + params.b_a.value[0]
    e = np.tanh(scores)
    weights = softmax(e)
    context = weights @ hs
    return weights, context


# ---------------------------------------------------------------------------
# batched forward / backward
# ---------------------------------------------------------------------------

class ForwardTrace:
    """Everything the backward pass and the attention export need from one
    forward call. Arrays are batched: gates/states are (p, B, hidden),
    scores/weights (p, B). Single use."""

    __slots__ = ("windows", "f", "i", "chat", "o", "cell", "hidden",
                 "scores", "weights", "context", "head_in", "pre_head",
                 "output", "consumed")

    def __init__(self, **kw):
        for name in self.__slots__:
            setattr(self, name, kw.get(name))
        self.consumed = False


def forward_batch(windows, params: ModelParams, check_finite: bool = True):
    """Run the model over a (B, p, n) batch; returns ((B, m) forecasts, trace)."""
    cfg = params.config
    windows = as_f64(windows)
    if windows.ndim != 3:
        raise ShapeError(f"expected (B, p, n) windows, got shape {windows.shape}")
    B, p, n = windows.shape
    if n != cfg.n_features:
        raise ShapeError(f"window feature width {n} != model n_features {cfg.n_features}")
    if cfg.attention and cfg.head_input == "weighted_flatten" and p != cfg.lookback:
        raise ShapeError(f"weighted_flatten head requires p == {cfg.lookback}")
    if check_finite and not np.all(np.isfinite(windows)):
        raise NumericError("non-finite values detected at stage 'input'")

    H = cfg.hidden
    xs = np.ascontiguousarray(windows.transpose(1, 0, 2))  # (p, B, n)
    flat = xs.reshape(p * B, n)
    xw = {g: (flat @ params.W[g].value.T).reshape(p, B, H) for g in GATES}

    f = np.empty((p, B, H))
    i = np.empty((p, B, H))
    chat = np.empty((p, B, H))
    o = np.empty((p, B, H))
    cell = np.empty((p, B, H))
    hidden = np.empty((p, B, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(p):
        f[t] = sigmoid(xw["f"][t] + h @ params.U["f"].value.T + params.b["f"].value)
        i[t] = sigmoid(xw["i"][t] + h @ params.U["i"].value.T + params.b["i"].value)
        chat[t] = np.tanh(xw["C"][t] + h @ params.U["C"].value.T + params.b["C"].value)
        c = f[t] * c + i[t] * chat[t]
        o[t] = sigmoid(xw["o"][t] + h @ params.U["o"].value.T + params.b["o"].value)
        h = o[t] * np.tanh(c)
        cell[t] = c
        hidden[t] = h
    if check_finite and not np.all(np.isfinite(hidden[-1])):
        raise NumericError("non-finite values detected at stage 'lstm'")

    scores = weights = context = None
    if cfg.attention:
        raw = np.einsum("tbh,h->tb", hidden, params.W_a.value[0]) + params.b_a.value[0]
        scores = np.tanh(raw)
        weights = softmax(scores, axis=0)
        if cfg.head_input == "context":
            context = np.einsum("tb,tbh->bh", weights, hidden)
            head_in = context
        else:
            weighted = weights[:, :, None] * hidden  # (p, B, H)
            head_in = np.ascontiguousarray(weighted.transpose(1, 0, 2)).reshape(B, p * H)
        if check_finite and not np.all(np.isfinite(weights)):
            raise NumericError("non-finite values detected at stage 'attention'")
    else:
        head_in = hidden[-1]

    pre_head = head_in @ params.W_out.value.T + params.b_out.value
    output = relu(pre_head)
    if check_finite and not np.all(np.isfinite(output)):
        raise NumericError("non-finite values detected at stage 'head'")

    trace = ForwardTrace(windows=windows, f=f, i=i, chat=chat, o=o,
                         cell=cell, hidden=hidden, scores=scores,
                         weights=weights, context=context, head_in=head_in,
                         pre_head=pre_head, output=output)
    return output, trace


def forward(window, params: ModelParams, check_finite: bool = True):
    """Single-window forward; returns ((m,) forecast, trace with B = 1)."""
    window = as_f64(window)
    if window.ndim != 2:
        raise ShapeError(f"expected a (p, n) window, got shape {window.shape}")
    out, trace = forward_batch(window[None, :, :], params, check_finite)
    return out[0], trace


def predict(window, params: ModelParams) -> np.ndarray:
    return forward(window, params)[0]


def backward(trace: ForwardTrace, d_output, params: ModelParams) -> np.ndarray:
    """Reverse-mode pass: accumulate all parameter gradients in place and
    return the gradient w.r.t. the input windows, shape (B, p, n)."""
    if trace.consumed:
        raise TapeError("forward trace already consumed by a backward call")
    trace.consumed = True
    cfg = params.config
    p, B, H = trace.hidden.shape
    d_out = as_f64(d_output)
    if d_out.ndim == 1:
        d_out = d_out[None, :]
    if d_out.shape != trace.output.shape:
        raise ShapeError(
            f"upstream gradient {d_out.shape} != output {trace.output.shape}"
        )

    # head: y = relu(W_out head_in + b_out)
    dz = d_out * (trace.pre_head > 0)
    params.W_out.grad += dz.T @ trace.head_in
    params.b_out.grad += dz.sum(axis=0)
    d_head_in = dz @ params.W_out.value

    dH = np.zeros((p, B, H))
    if cfg.attention:
        if cfg.head_input == "context":
            d_ctx = d_head_in  # (B, H)
            d_w = np.einsum("bh,tbh->tb", d_ctx, trace.hidden)
            dH += trace.weights[:, :, None] * d_ctx[None, :, :]
        else:
            d_weighted = d_head_in.reshape(B, p, H).transpose(1, 0, 2)
            d_w = np.einsum("tbh,tbh->tb", d_weighted, trace.hidden)
            dH += trace.weights[:, :, None] * d_weighted
        # softmax over the time axis, then the tanh score squash
        inner = np.sum(trace.weights * d_w, axis=0, keepdims=True)
        d_e = trace.weights * (d_w - inner)
        d_raw = d_e * (1.0 - trace.scores ** 2)
        params.W_a.grad[0] += np.einsum("tb,tbh->h", d_raw, trace.hidden)
        params.b_a.grad[0] += d_raw.sum()
        dH += d_raw[:, :, None] * params.W_a.value[0][None, None, :]
    else:
        dH[-1] += d_head_in

    # backpropagation through time
    d_gate = {g: np.empty((p, B, H)) for g in GATES}
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(p - 1, -1, -1):
        dh = dH[t] + dh_next
        tanh_c = np.tanh(trace.cell[t])
        do = dh * tanh_c
        dc = dc_next + dh * trace.o[t] * (1.0 - tanh_c ** 2)
        c_prev = trace.cell[t - 1] if t > 0 else np.zeros((B, H))
        d_gate["f"][t] = dc * c_prev * trace.f[t] * (1.0 - trace.f[t])
        d_gate["i"][t] = dc * trace.chat[t] * trace.i[t] * (1.0 - trace.i[t])
        d_gate["C"][t] = dc * trace.i[t] * (1.0 - trace.chat[t] ** 2)
        d_gate["o"][t] = do * trace.o[t] * (1.0 - trace.o[t])
        dc_next = dc * trace.f[t]
        dh_next = sum(d_gate[g][t] @ params.U[g].value for g in GATES)

    xs = np.ascontiguousarray(trace.windows.transpose(1, 0, 2))  # (p, B, n)
    h_prev = np.concatenate([np.zeros((1, B, H)), trace.hidden[:-1]], axis=0)
    flat_x = xs.reshape(p * B, -1)
    flat_h = h_prev.reshape(p * B, H)
    d_inputs = np.zeros((p * B, cfg.n_features))
    for g in GATES:
        flat_g = d_gate[g].reshape(p * B, H)
        params.W[g].grad += flat_g.T @ flat_x
        params.U[g].grad += flat_g.T @ flat_h
        params.b[g].grad += flat_g.sum(axis=0)
        d_inputs += flat_g @ params.W[g].value
    return d_inputs.reshape(p, B, -1).transpose(1, 0, 2)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: ModelParams, extra: dict | None = None) -> None:
    """Write a versioned JSON checkpoint: model config, metadata, and all
    parameter arrays as named row-major float lists."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "model": params.config.to_dict(),
        "params": {
            t.name: {"shape": list(t.value.shape), "data": t.value.ravel().tolist()}
            for t in params.tensors()
        },
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"unrecognized checkpoint format: {doc.get('format')!r}")
    config = ModelConfig.from_dict(doc["model"])
    params = ModelParams(config)
    for t in params.tensors():
        entry = doc["params"].get(t.name)
        if entry is None:
            raise ConfigError(f"checkpoint is missing parameter '{t.name}'")
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if arr.shape != t.value.shape:
            raise ShapeError(
                f"checkpoint parameter '{t.name}' has shape {arr.shape}, "
                f"expected {t.value.shape}"
            )
        t.value[...] = arr
    meta = {k: v for k, v in doc.items() if k not in ("format", "model", "params")}
    return params, meta
