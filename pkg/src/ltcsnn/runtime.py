"""Layered EF-neuron network on a global clock.

Layer ``l`` starts its local clock at global step ``sum_{k<l} (T_in_k - 1)``,
so its input window coincides with the output window of layer ``l-1``. Only
spikes inside a layer's output window are propagated; early and late fires
still reset the neuron but are counted as undesired and dropped.

The batch runner advances all examples together with numpy; a single-example
:func:`run` is a thin wrapper.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .coding import ExponentRange, LaVariant, SpikeTrain, decode_ltc, encode_array
from .ef_neuron import DEFAULT_FRAC_BITS, EfConfig
from .errors import (DomainError, FixedPointOverflowError, NonRepresentableError,
                     ShapeMismatchError)


@dataclass
class SnnLayer:
    op: object  # layers.Dense | Conv2d | Pool2d holding pre-scaled weights
    cfg: EfConfig

    def __post_init__(self):
        self.fanout = self.op.fanout()
        self._int_ops = {}

    @property
    def kind(self):
        return self.op.kind

    @property
    def scaled_weights(self):
        return self.op.weight

    def int_op(self, frac_bits):
        """Operator with weights as raw fixed-point integers (rejects non-representable)."""
        if frac_bits not in self._int_ops:
            w = np.asarray(self.op.weight, dtype=np.float64)
            raw = np.ldexp(w, frac_bits)
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                bad = np.flatnonzero(raw.ravel() != np.round(raw.ravel()))[:3]
                raise NonRepresentableError(
                    f"{self.kind} weights {w.ravel()[bad]} are not multiples of 2**-{frac_bits}")
            if np.any(np.abs(raw) >= 2.0**62):
                raise FixedPointOverflowError(f"{self.kind} weight exceeds fixed-point range")
            _check_current_bound(self.kind, raw)
            self._int_ops[frac_bits] = self.op.with_weight(raw.astype(np.int64))
        return self._int_ops[frac_bits]


def _check_current_bound(kind, raw):
    # worst case: every synapse of one neuron delivers a spike in the same step
    if kind == "dense":
        worst = np.abs(raw).sum(axis=0).max()
    elif kind == "conv2d":
        worst = np.abs(raw).sum(axis=(1, 2, 3)).max()
    else:
        worst = np.abs(raw).sum()
    if worst >= 2.0**62:
        raise FixedPointOverflowError(f"{kind} layer input current can exceed 2**62 raw units")


@dataclass
class SnnNetwork:
    input_shape: tuple
    input_range: ExponentRange
    layers: list
    input_variant: LaVariant = LaVariant.MULTI
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        prev = self.input_range
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            if layer.cfg.input_range != prev:
                raise ShapeMismatchError(
                    f"layer {i} input range {layer.cfg.input_range} != upstream output range {prev}")
            if tuple(layer.op.in_shape) != shape:
                raise ShapeMismatchError(f"layer {i} expects {layer.op.in_shape}, upstream gives {shape}")
            prev = layer.cfg.output_range
            shape = tuple(layer.op.out_shape)

    @property
    def starts(self) -> list[int]:
        """Global step at which each layer's local clock reads 0."""
        out, s = [], 0
        for layer in self.layers:
            out.append(s)
            s += layer.cfg.t_in - 1
        return out

    @property
    def output_window(self) -> tuple[int, int]:
        """Global first and last step of the last layer's output window."""
        last = self.layers[-1].cfg
        s = self.starts[-1]
        return s + last.window_start, s + last.window_end

    @property
    def horizon(self) -> int:
        """Number of steps through the end of the last output window."""
        return self.output_window[1] + 1

    @property
    def output_range(self) -> ExponentRange:
        return self.layers[-1].cfg.output_range

    @property
    def input_fanout(self):
        return self.layers[0].fanout


_COUNTER_FIELDS = ("synaptic_events", "propagated_spikes", "input_spikes",
                   "undesired_early", "undesired_late", "aux_adds")


@dataclass
class CostCounters:
    synaptic_events: int = 0
    propagated_spikes: int = 0  # includes input_spikes
    input_spikes: int = 0
    undesired_early: int = 0
    undesired_late: int = 0
    aux_adds: int = 0

    def __add__(self, other):
        return CostCounters(*(getattr(self, f) + getattr(other, f) for f in _COUNTER_FIELDS))

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def neuron_spikes(self):
        return self.propagated_spikes - self.input_spikes


@dataclass
class SnnOutput:
    decoded: np.ndarray
    argmax_class: int
    spike_trains: list
    counters: CostCounters


@dataclass
class BatchResult:
    decoded: np.ndarray  # (B, n_out)
    output_raster: np.ndarray  # (B, T_out, n_out) in-window fires of the last layer
    counters: dict  # name -> (B,) int64
    layer_decoded: list  # per layer (B, *shape)
    early_mask: list  # per layer (B, *shape) bool
    layer_spikes: np.ndarray  # (B, L) in-window spikes per layer
    horizon: int
    max_neuron_spikes: np.ndarray = None  # (B, L) most in-window spikes of any one neuron

    @property
    def predictions(self):
        return np.argmax(self.decoded, axis=1)

    @property
    def any_early(self):
        return self.counters["undesired_early"] > 0

    def counters_for(self, i) -> CostCounters:
        return CostCounters(*(int(self.counters[f][i]) for f in _COUNTER_FIELDS))

    def total_counters(self) -> CostCounters:
        return CostCounters(*(int(self.counters[f].sum()) for f in _COUNTER_FIELDS))


def _per_example(x):
    return x.reshape(len(x), -1).sum(axis=1)


def run_batch(net: SnnNetwork, inputs, *, backend: str = "float",
              frac_bits: int = DEFAULT_FRAC_BITS) -> BatchResult:
    inputs = np.asarray(inputs, dtype=np.float64)
    if tuple(inputs.shape[1:]) != net.input_shape:
        raise ShapeMismatchError(f"expected (B, {net.input_shape}), got {inputs.shape}")
    if np.any(inputs < 0) or not np.all(np.isfinite(inputs)):
        raise DomainError("SNN inputs must be finite and nonnegative")
    if backend not in ("float", "fixed"):
        raise ValueError(f"unknown backend {backend!r}")
    fixed = backend == "fixed"
    b = len(inputs)
    L = len(net.layers)
    raster = encode_array(inputs, net.input_range, net.input_variant)  # (T_in, B, *shape)
    starts = net.starts
    cfgs = [layer.cfg for layer in net.layers]
    ops = [layer.int_op(frac_bits) if fixed else layer.op for layer in net.layers]
    dtype = np.int64 if fixed else np.float64
    if fixed:
        # potentials stay below 2**62, so a larger threshold is simply unreachable
        thresholds = [np.int64(min(1 << (c.output_range.e_max + frac_bits), 2**63 - 1)) for c in cfgs]
    else:
        thresholds = [c.threshold for c in cfgs]

    v = [np.zeros((b,) + tuple(layer.op.out_shape), dtype=dtype) for layer in net.layers]
    silenced = [np.zeros(x.shape, dtype=bool) if c.variant is LaVariant.SINGLE else None
                for x, c in zip(v, cfgs)]
    decoded = [np.zeros(x.shape) for x in v]
    early_mask = [np.zeros(x.shape, dtype=bool) for x in v]
    t_out_last = cfgs[-1].t_out
    out_raster = np.zeros((b, t_out_last) + tuple(net.layers[-1].op.out_shape), dtype=bool)
    counters = {f: np.zeros(b, dtype=np.int64) for f in _COUNTER_FIELDS}
    layer_spikes = np.zeros((b, L), dtype=np.int64)
    neuron_spikes = [np.zeros(x.shape, dtype=np.int16) for x in v]

    # one extra step lets the last layer report an immediately late spike
    for t in range(net.horizon + 1):
        spikes = raster[t] if t < len(raster) else None
        if spikes is not None:
            n_in = _per_example(spikes)
            counters["input_spikes"] += n_in
            counters["synaptic_events"] += _per_example(spikes * net.layers[0].fanout)
        for l, (layer, cfg) in enumerate(zip(net.layers, cfgs)):
            tau = t - starts[l]
            if tau < 0 or tau > cfg.window_end + 1:
                spikes = None
                continue
            vl = v[l]
            if fixed:
                if np.any(np.abs(vl) >= 2**62):
                    _raise_overflow(vl, np.abs(vl) >= 2**62, l, t, "doubling")
                vl = vl << 1
            else:
                vl = vl * 2.0
            if spikes is not None and spikes.any():
                current = ops[l].forward(spikes)
                if fixed:
                    summed = vl + current
                    wrapped = ((current > 0) & (summed < vl)) | ((current < 0) & (summed > vl))
                    if wrapped.any():
                        _raise_overflow(vl, wrapped, l, t, "addition")
                    vl = summed
                else:
                    vl = vl + current
            fired = vl >= thresholds[l]
            if silenced[l] is not None:
                fired &= ~silenced[l]
                vl = np.where(fired | silenced[l], 0, vl).astype(dtype)
                silenced[l] |= fired
            else:
                vl = np.where(fired, vl - thresholds[l], vl)
            v[l] = vl

            kind = cfg.classify(tau)
            n_fired = _per_example(fired)
            if kind == "early":
                counters["undesired_early"] += n_fired
                early_mask[l] |= fired
                spikes = None
            elif kind == "window":
                k = tau - cfg.window_start
                decoded[l] += fired * math.ldexp(1.0, cfg.output_range.e_max - k)
                counters["propagated_spikes"] += n_fired
                layer_spikes[:, l] += n_fired
                neuron_spikes[l] += fired
                if l + 1 < L:
                    counters["synaptic_events"] += _per_example(fired * net.layers[l + 1].fanout)
                else:
                    out_raster[:, k] = fired
                spikes = fired
            else:
                counters["undesired_late"] += n_fired
                spikes = None
    counters["propagated_spikes"] += counters["input_spikes"]
    final = decoded[-1].reshape(b, -1)
    max_neuron = np.stack([n.reshape(b, -1).max(axis=1) for n in neuron_spikes], axis=1)
    return BatchResult(final, out_raster.reshape(b, t_out_last, -1), counters, decoded,
                       early_mask, layer_spikes, net.horizon, max_neuron.astype(np.int64))


def _raise_overflow(v, mask, layer, t, what):
    idx = np.argwhere(mask)[0]
    raise FixedPointOverflowError(
        f"fixed-point overflow on {what} in layer {layer}, neuron {tuple(idx[1:])}, "
        f"example {idx[0]}, global step {t}", neuron=(layer,) + tuple(int(i) for i in idx[1:]),
        time_step=t)


def decode_output(trains: Sequence[SpikeTrain], r: ExponentRange) -> np.ndarray:
    return np.array([decode_ltc(s, r) for s in trains], dtype=np.float64)


def run(net: SnnNetwork, x, *, backend: str = "float", frac_bits: int = DEFAULT_FRAC_BITS) -> SnnOutput:
    res = run_batch(net, np.asarray(x, dtype=np.float64)[None], backend=backend, frac_bits=frac_bits)
    t_out = net.output_range.window_len
    raster = res.output_raster[0]
    trains = [SpikeTrain(t_out, tuple(np.flatnonzero(raster[:, j]))) for j in range(raster.shape[1])]
    decoded = decode_output(trains, net.output_range)
    return SnnOutput(decoded, int(np.argmax(decoded)), trains, res.counters_for(0))


def count_events(net: SnnNetwork, x, **kw) -> CostCounters:
    return run(net, x, **kw).counters


def run_chunked(net: SnnNetwork, inputs, chunk: int = 500, **kw) -> BatchResult:
    """Run a large input set in chunks and concatenate the results."""
    parts = [run_batch(net, inputs[i:i + chunk], **kw) for i in range(0, len(inputs), chunk)]
    if len(parts) == 1:
        return parts[0]
    cat = np.concatenate
    return BatchResult(
        cat([p.decoded for p in parts]), cat([p.output_raster for p in parts]),
        {f: cat([p.counters[f] for p in parts]) for f in _COUNTER_FIELDS},
        [cat([p.layer_decoded[l] for p in parts]) for l in range(len(net.layers))],
        [cat([p.early_mask[l] for p in parts]) for l in range(len(net.layers))],
        cat([p.layer_spikes for p in parts]), parts[0].horizon,
        cat([p.max_neuron_spikes for p in parts]))


COST_CSV_HEADER = ("example_id", "synaptic_events", "propagated_spikes", "undesired_early",
                   "undesired_late", "predicted_class", "correct")


def cost_records(res: BatchResult, labels=None, ids=None):
    """Rows for the per-example cost CSV."""
    preds = res.predictions
    n = len(preds)
    ids = range(n) if ids is None else ids
    for i, ex in zip(range(n), ids):
        correct = "" if labels is None else int(preds[i] == labels[i])
        yield (ex, int(res.counters["synaptic_events"][i]), int(res.counters["propagated_spikes"][i]),
               int(res.counters["undesired_early"][i]), int(res.counters["undesired_late"][i]),
               int(preds[i]), correct)
