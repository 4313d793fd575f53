"""Linear synapse operators shared by the analog network and the spiking runtimes.

Each operator maps a batch ``(B, *in_shape)`` to ``(B, *out_shape)`` and has no
bias. Operators work for float and int64 weights alike, so the fixed-point
runtime can reuse them on spike rasters.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, ShapeMismatchError


def _batch(x, in_shape):
    x = np.asarray(x)
    if tuple(x.shape[1:]) != tuple(in_shape):
        raise ShapeMismatchError(f"expected input shape (B, {in_shape}), got {x.shape}")
    return x


def _as_operand(x, w):
    # bool spike rasters are promoted to the weight dtype before arithmetic
    return x.astype(w.dtype) if x.dtype == bool else x


class Dense:
    kind = "dense"

    def __init__(self, weight, in_shape=None):
        self.weight = np.asarray(weight)
        if self.weight.ndim != 2:
            raise ShapeMismatchError("dense weight must be (fan_in, fan_out)")
        self.in_shape = tuple(in_shape) if in_shape is not None else (self.weight.shape[0],)
        if math.prod(self.in_shape) != self.weight.shape[0]:
            raise ShapeMismatchError(f"input shape {self.in_shape} does not flatten to {self.weight.shape[0]}")

    @property
    def out_shape(self):
        return (self.weight.shape[1],)

    @property
    def fan_in(self):
        return self.weight.shape[0]

    def forward(self, x):
        x = _batch(x, self.in_shape)
        return _as_operand(x, self.weight).reshape(len(x), -1) @ self.weight

    def backward(self, x, grad_out):
        """Return ``(grad_x, grad_weight)``."""
        flat = np.asarray(x).reshape(len(x), -1)
        grad_w = flat.T @ grad_out
        grad_x = (grad_out @ self.weight.T).reshape(np.shape(x))
        return grad_x, grad_w

    def fanout(self):
        return np.full(self.in_shape, self.weight.shape[1], dtype=np.int64)

    def with_weight(self, weight):
        return Dense(weight, self.in_shape)


class Conv2d:
    """2-D cross-correlation, weight shape ``(out_ch, in_ch, k, k)``."""

    kind = "conv2d"

    def __init__(self, weight, in_shape, stride=1, padding=0):
        self.weight = np.asarray(weight)
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ShapeMismatchError("conv weight must be (out_ch, in_ch, k, k)")
        self.in_shape = tuple(in_shape)
        if len(self.in_shape) != 3 or self.in_shape[0] != self.weight.shape[1]:
            raise ShapeMismatchError(f"conv input shape {self.in_shape} incompatible with weight {self.weight.shape}")
        self.stride = int(stride)
        self.padding = int(padding)
        c, h, w = self.in_shape
        k = self.weight.shape[2]
        self._ho = (h + 2 * self.padding - k) // self.stride + 1
        self._wo = (w + 2 * self.padding - k) // self.stride + 1
        if self._ho < 1 or self._wo < 1:
            raise ShapeMismatchError("kernel larger than padded input")

    @property
    def out_shape(self):
        return (self.weight.shape[0], self._ho, self._wo)

    @property
    def fan_in(self):
        return int(np.prod(self.weight.shape[1:]))

    @property
    def k(self):
        return self.weight.shape[2]

    def _pad(self, x):
        p = self.padding
        return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x

    def _window(self, xp, i, j):
        s = self.stride
        return xp[:, :, i:i + s * (self._ho - 1) + 1:s, j:j + s * (self._wo - 1) + 1:s]

    def forward(self, x):
        x = _batch(x, self.in_shape)
        xp = self._pad(_as_operand(x, self.weight))
        out = np.zeros((len(x),) + self.out_shape, dtype=np.result_type(xp, self.weight))
        for i in range(self.k):
            for j in range(self.k):
                # (B, C, Ho, Wo) x (O, C) -> (B, O, Ho, Wo)
                out += np.einsum("bchw,oc->bohw", self._window(xp, i, j), self.weight[:, :, i, j])
        return out

    def _input_grad(self, grad_out, weight):
        b = len(grad_out)
        c, h, w = self.in_shape
        p = self.padding
        gp = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=np.result_type(grad_out, weight))
        s = self.stride
        for i in range(self.k):
            for j in range(self.k):
                gp[:, :, i:i + s * (self._ho - 1) + 1:s, j:j + s * (self._wo - 1) + 1:s] += \
                    np.einsum("bohw,oc->bchw", grad_out, weight[:, :, i, j])
        return gp[:, :, p:p + h, p:p + w]

    def backward(self, x, grad_out):
        xp = self._pad(np.asarray(x, dtype=np.float64))
        grad_w = np.empty_like(self.weight, dtype=np.float64)
        for i in range(self.k):
            for j in range(self.k):
                grad_w[:, :, i, j] = np.einsum("bchw,bohw->oc", self._window(xp, i, j), grad_out)
        return self._input_grad(grad_out, self.weight), grad_w

    def fanout(self):
        o = self.weight.shape[0]
        ones_w = np.ones((1, self.in_shape[0]) + self.weight.shape[2:], dtype=np.int64)
        ones_g = np.ones((1, 1, self._ho, self._wo), dtype=np.int64)
        return o * self._input_grad(ones_g, ones_w)[0]

    def with_weight(self, weight):
        return Conv2d(weight, self.in_shape, self.stride, self.padding)


class Pool2d:
    """Non-overlapping per-channel pooling with a fixed ``(size, size)`` kernel.

    With every kernel entry equal to ``1/size**2`` this is average pooling.
    Trailing rows/columns that do not fill a window are dropped.
    """

    kind = "avgpool"

    def __init__(self, size, in_shape, kernel=None):
        self.size = int(size)
        self.in_shape = tuple(in_shape)
        if len(self.in_shape) != 3:
            raise ShapeMismatchError("pooling needs (C, H, W) input")
        if kernel is None:
            kernel = np.full((self.size, self.size), 1.0 / self.size**2)
        self.weight = np.asarray(kernel)
        if self.weight.shape != (self.size, self.size):
            raise ShapeMismatchError("pool kernel must be (size, size)")
        c, h, w = self.in_shape
        if h < self.size or w < self.size:
            raise ShapeMismatchError("pool window larger than input")

    @property
    def out_shape(self):
        c, h, w = self.in_shape
        return (c, h // self.size, w // self.size)

    @property
    def fan_in(self):
        return self.size * self.size

    def _blocks(self, x):
        c, ho, wo = self.out_shape
        s = self.size
        return x[:, :, :ho * s, :wo * s].reshape(len(x), c, ho, s, wo, s)

    def forward(self, x):
        x = _batch(x, self.in_shape)
        return np.einsum("bcysxt,st->bcyx", self._blocks(_as_operand(x, self.weight)), self.weight)

    def backward(self, x, grad_out):
        c, h, w = self.in_shape
        _, ho, wo = self.out_shape
        s = self.size
        g = np.zeros((len(grad_out), c, h, w), dtype=np.float64)
        g[:, :, :ho * s, :wo * s] = np.einsum("bcyx,st->bcysxt", grad_out, self.weight).reshape(
            len(grad_out), c, ho * s, wo * s)
        return g, None

    def fanout(self):
        c, h, w = self.in_shape
        _, ho, wo = self.out_shape
        f = np.zeros(self.in_shape, dtype=np.int64)
        f[:, :ho * self.size, :wo * self.size] = 1
        return f

    def with_weight(self, kernel):
        return Pool2d(self.size, self.in_shape, kernel)


# -- architecture strings --------------------------------------------------

@dataclass(frozen=True)
class LayerSpec:
    kind: str  # dense | conv2d | avgpool
    units: int = 0  # dense width or conv output channels
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    size: int = 0  # pooling window


_TOKEN = re.compile(r"^(?:(\d+)C(\d+)(?:s(\d+))?(?:p(\d+))?|P(\d+)|F(\d+))(?:@\d+x\d+)?$")


def parse_architecture(text: str) -> list[LayerSpec]:
    """Parse ``"12C5-P2-64C5-P2-F10"`` style strings.

    ``nCk`` is a conv with n channels and kernel k (optional ``sS`` stride,
    ``pP`` zero padding), ``Pk`` average pooling, ``Fn`` a dense layer.
    ``@HxW`` annotations are accepted and ignored. A leading bare input size
    such as ``784-100-10`` is also understood as dense widths.
    """
    text = text.strip()
    if re.fullmatch(r"\d+(-\d+)+", text):
        return [LayerSpec("dense", int(n)) for n in text.split("-")[1:]]
    specs = []
    for tok in text.split("-"):
        m = _TOKEN.match(tok.strip())
        if not m:
            raise ConfigError(f"bad architecture token {tok!r} in {text!r}")
        ch, k, s, p, pool, dense = m.groups()
        if ch:
            specs.append(LayerSpec("conv2d", int(ch), int(k), int(s or 1), int(p or 0)))
        elif pool:
            specs.append(LayerSpec("avgpool", size=int(pool)))
        else:
            specs.append(LayerSpec("dense", int(dense)))
    if not specs:
        raise ConfigError("empty architecture")
    return specs


def build_ops(specs, input_shape, rng: Optional[np.random.Generator] = None):
    """Instantiate operators with uniform(+-sqrt(6/fan_in)) weights."""
    rng = rng or np.random.default_rng(0)
    shape = tuple(input_shape)
    ops = []
    for spec in specs:
        if spec.kind == "dense":
            fan_in = math.prod(shape)
            bound = math.sqrt(6.0 / fan_in)
            op = Dense(rng.uniform(-bound, bound, (fan_in, spec.units)), shape)
        elif spec.kind == "conv2d":
            if len(shape) != 3:
                raise ConfigError(f"conv layer needs (C, H, W) input, got {shape}")
            fan_in = shape[0] * spec.kernel**2
            bound = math.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, (spec.units, shape[0], spec.kernel, spec.kernel))
            op = Conv2d(w, shape, spec.stride, spec.padding)
        elif spec.kind == "avgpool":
            if len(shape) != 3:
                raise ConfigError(f"pooling needs (C, H, W) input, got {shape}")
            op = Pool2d(spec.size, shape)
        else:
            raise ConfigError(f"unknown layer kind {spec.kind!r}")
        ops.append(op)
        shape = op.out_shape
    return ops


def op_from_record(kind, weight, in_shape, stride=1, padding=0, size=0):
    if kind == "dense":
        return Dense(weight, in_shape)
    if kind == "conv2d":
        return Conv2d(weight, in_shape, stride, padding)
    if kind == "avgpool":
        return Pool2d(size, in_shape, weight)
    raise ConfigError(f"unknown layer kind {kind!r}")
