"""Bias-free analog network with LA activations and error-tolerant training.

Hidden layers compute ``LA(ReLU(W x))``; the output layer applies LA only to
nonnegative pre-activations and leaves negative ones untouched. Training
uses softmax cross-entropy plus ``lambda * L_excess`` and passes gradients
through LA with a 0/1 straight-through factor.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .coding import ExponentRange, LaVariant, la_array, la_derivative_array
from .errors import ConfigError, ShapeMismatchError, TrainingDivergedError
from .layers import build_ops, parse_architecture

log = logging.getLogger(__name__)

RELU = "relu"
RELU_LA = "relu_la"


@dataclass
class AnalogNetwork:
    input_shape: tuple
    ops: list
    ranges: list  # output ExponentRange per layer
    variants: list  # LaVariant per layer
    input_range: Optional[ExponentRange] = None  # None: inputs are not approximated
    input_variant: LaVariant = LaVariant.MULTI
    mode: str = RELU_LA
    biases: Optional[list] = None  # only ever set by loading foreign weights
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        self.variants = [LaVariant.parse(v) for v in self.variants]
        if not (len(self.ops) == len(self.ranges) == len(self.variants)):
            raise ConfigError("need one exponent range and LA variant per layer")
        if any(r is None for r in self.ranges):
            raise ConfigError("every layer needs an output exponent range")
        if self.variants and self.variants[-1] is LaVariant.SINGLE:
            raise ConfigError("single-power LA is only allowed on hidden layers")
        if self.mode not in (RELU, RELU_LA):
            raise ConfigError(f"unknown activation mode {self.mode!r}")
        shape = self.input_shape
        for op in self.ops:
            if tuple(op.in_shape) != tuple(shape):
                raise ShapeMismatchError(f"layer expects {op.in_shape}, previous layer gives {shape}")
            shape = op.out_shape

    @property
    def n_layers(self):
        return len(self.ops)

    @property
    def output_shape(self):
        return self.ops[-1].out_shape

    def trainable(self):
        return [i for i, op in enumerate(self.ops) if op.kind != "avgpool"]

    def copy(self, **changes):
        ops = [op.with_weight(op.weight.copy()) for op in self.ops]
        kw = dict(input_shape=self.input_shape, ops=ops, ranges=list(self.ranges),
                  variants=list(self.variants), input_range=self.input_range,
                  input_variant=self.input_variant, mode=self.mode,
                  biases=None if self.biases is None else [np.copy(b) for b in self.biases],
                  meta=dict(self.meta))
        kw.update(changes)
        return AnalogNetwork(**kw)


def build_network(architecture: str, input_shape, *, hidden_range, output_range, input_range=None,
                  hidden_variant=LaVariant.MULTI, mode=RELU_LA, seed=0) -> AnalogNetwork:
    """Network from an architecture string; all hidden layers share one range."""
    specs = parse_architecture(architecture)
    rng = np.random.default_rng(seed)
    ops = build_ops(specs, input_shape, rng)
    n = len(ops)
    ranges = [hidden_range] * (n - 1) + [output_range]
    variants = [LaVariant.parse(hidden_variant)] * (n - 1) + [LaVariant.MULTI]
    return AnalogNetwork(tuple(input_shape), ops, ranges, variants, input_range,
                         LaVariant.MULTI, mode, meta={"architecture": architecture, "seed": seed})


@dataclass
class ForwardResult:
    inputs: list  # input to each layer
    pre: list  # pre-activations
    act: list  # real activations ReLU(z) (output layer: max(z, 0))
    out: list  # values passed downstream (LA applied in relu_la mode)
    la_factors: list = field(default_factory=list)  # surrogate factor per layer (relu_la mode)

    @property
    def logits(self):
        return self.out[-1]


def forward(net: AnalogNetwork, x, mode: Optional[str] = None) -> ForwardResult:
    mode = mode or net.mode
    x = np.asarray(x, dtype=np.float64)
    if tuple(x.shape[1:]) != net.input_shape:
        raise ShapeMismatchError(f"expected (B, {net.input_shape}), got {x.shape}")
    h = x
    if mode == RELU_LA and net.input_range is not None:
        h = la_array(np.maximum(x, 0.0), net.input_range, net.input_variant)
    res = ForwardResult([], [], [], [])
    last = net.n_layers - 1
    for l, op in enumerate(net.ops):
        res.inputs.append(h)
        z = op.forward(h)
        if net.biases is not None and net.biases[l] is not None:
            z = z + net.biases[l]
        a = np.maximum(z, 0.0)
        r, v = net.ranges[l], net.variants[l]
        if l < last:
            out = la_array(a, r, v) if mode == RELU_LA else a
        elif mode == RELU_LA:
            out = np.where(z >= 0, la_array(a, r, v), z)
        else:
            out = z
        if mode == RELU_LA:
            res.la_factors.append(la_derivative_array(a, r))
        res.pre.append(z)
        res.act.append(a)
        res.out.append(out)
        h = out
    return res


def predict(net: AnalogNetwork, x, mode=None, chunk=2048) -> np.ndarray:
    preds = []
    for i in range(0, len(x), chunk):
        logits = forward(net, x[i:i + chunk], mode).logits
        preds.append(np.argmax(logits.reshape(len(logits), -1), axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def accuracy(net, x, y, mode=None) -> float:
    return float(np.mean(predict(net, x, mode) == np.asarray(y))) if len(x) else float("nan")


# -- losses ----------------------------------------------------------------

def excess_loss(activations: Sequence, ranges: Sequence[ExponentRange]) -> float:
    """Half squared excess of every activation over its layer's LA cap,
    summed over examples, layers and neurons."""
    total = 0.0
    for a, r in zip(activations, ranges):
        over = np.maximum(np.asarray(a, dtype=np.float64) - r.cap, 0.0)
        total += 0.5 * float(np.sum(over * over))
    return total


def excess_loss_grad(a, r: ExponentRange) -> np.ndarray:
    """d L_excess / d a; the subgradient at the cap is 0."""
    return np.maximum(np.asarray(a, dtype=np.float64) - r.cap, 0.0)


def _log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels) -> float:
    logits = np.asarray(logits, dtype=np.float64).reshape(len(logits), -1)
    lsm = _log_softmax(logits)
    return float(-lsm[np.arange(len(labels)), np.asarray(labels)].mean())


def total_loss(net: AnalogNetwork, x, labels, lambda_excess: float, mode=None,
               result: Optional[ForwardResult] = None) -> float:
    """Batch-mean cross-entropy plus ``lambda`` times the excess loss summed
    over the batch."""
    res = result or forward(net, x, mode)
    ce = cross_entropy(res.logits, labels)
    if lambda_excess == 0:
        return ce
    return ce + lambda_excess * excess_loss(res.act, net.ranges)


def backward(net: AnalogNetwork, res: ForwardResult, labels, lambda_excess: float = 0.0,
             mode: Optional[str] = None) -> list:
    """Gradients of :func:`total_loss` w.r.t. every layer weight (``None`` for pooling)."""
    mode = mode or net.mode
    labels = np.asarray(labels)
    n = len(labels)
    logits = res.logits.reshape(n, -1)
    probs = np.exp(_log_softmax(logits))
    probs[np.arange(n), labels] -= 1.0
    grad_out = (probs / n).reshape(res.logits.shape)

    grads = [None] * net.n_layers
    for l in range(net.n_layers - 1, -1, -1):
        z, a = res.pre[l], res.act[l]
        factor = res.la_factors[l] if mode == RELU_LA else 1.0
        excess = lambda_excess * excess_loss_grad(a, net.ranges[l]) if lambda_excess else 0.0
        if l == net.n_layers - 1:
            # negative output pre-activations bypass LA and stay linear
            grad_z = grad_out * np.where(z >= 0, factor, 1.0) + excess
        else:
            grad_z = (grad_out * factor + excess) * (z > 0)
        grad_in, grad_w = net.ops[l].backward(res.inputs[l], grad_z)
        grads[l] = grad_w
        grad_out = grad_in
    return grads


# -- training --------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 10
    batch_size: int = 64
    lambda_excess: float = 0.1
    seed: int = 0
    momentum: float = 0.0
    lr_decay: float = 1.0  # multiplicative, applied after every epoch

    def __post_init__(self):
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must lie in (0, 1]")
        if self.lambda_excess < 0:
            raise ConfigError("lambda_excess must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")


def train(net: AnalogNetwork, x, y, cfg: TrainConfig, x_val=None, y_val=None,
          callback=None):
    """Minibatch SGD in place; returns ``(net, history)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if len(x) == 0:
        raise ConfigError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    velocity = {l: np.zeros_like(net.ops[l].weight) for l in net.trainable()}
    history = []
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        loss_sum = 0.0
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            res = forward(net, x[idx])
            loss = total_loss(net, x[idx], y[idx], cfg.lambda_excess, result=res)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {loss} at epoch {epoch}, batch {start // cfg.batch_size}")
            loss_sum += loss * len(idx)
            grads = backward(net, res, y[idx], cfg.lambda_excess)
            for l in net.trainable():
                velocity[l] = cfg.momentum * velocity[l] + grads[l]
                net.ops[l].weight -= lr * velocity[l]
        row = {"epoch": epoch + 1, "lr": lr, "loss": loss_sum / len(x), "train_acc": accuracy(net, x, y)}
        lr *= cfg.lr_decay
        if x_val is not None and len(x_val):
            row["val_acc"] = accuracy(net, x_val, y_val)
        history.append(row)
        log.info("epoch %d loss %.4f train %.4f val %s", row["epoch"], row["loss"],
                 row["train_acc"], row.get("val_acc"))
        if callback:
            callback(row)
    return net, history
