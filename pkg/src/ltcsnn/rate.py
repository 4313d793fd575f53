"""Rate-coded integrate-and-fire baseline.

Inputs in [0, 1] become Bernoulli spike trains (at most one spike per step),
weights are rescaled with data-based normalization so every threshold is
1.0, and the network is stepped for a fixed number of steps. Accuracy and
cost are sampled at every step.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ann import RELU, AnalogNetwork, forward
from .coding import SpikeTrain
from .errors import DomainError, NormalizationError, ShapeMismatchError

DEFAULT_PERCENTILE = 99.9


class ResetRule(enum.Enum):
    TO_ZERO = "zero"
    SUBTRACT = "subtract"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_")
        for rule in cls:
            if key in (rule.value, rule.name.lower(), "rst_" + rule.value):
                return rule
        raise ValueError(f"unknown reset rule {value!r}")


@dataclass
class IfNeuronState:
    """Scalar IF neuron, mainly for tests; the network runner is vectorized."""

    v_m: float = 0.0
    threshold: float = 1.0
    reset_rule: ResetRule = ResetRule.SUBTRACT

    def step(self, current: float) -> bool:
        self.v_m += current
        if self.v_m >= self.threshold:
            self.v_m = 0.0 if self.reset_rule is ResetRule.TO_ZERO else self.v_m - self.threshold
            return True
        return False


def encode_rate(x: float, steps: int, rng_seed=0) -> SpikeTrain:
    """Bernoulli(x) spike at each of ``steps`` steps."""
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"rate input must lie in [0, 1], got {x}")
    rng = np.random.default_rng(rng_seed)
    return SpikeTrain(steps, tuple(np.flatnonzero(rng.random(steps) < x)))


@dataclass
class NormalizedNetwork:
    net: AnalogNetwork  # ReLU mode, weights rescaled
    scales: list  # per-layer activation statistic used
    percentile: float


def normalize_weights(ann: AnalogNetwork, calibration, percentile: float = DEFAULT_PERCENTILE,
                      chunk: int = 2048) -> NormalizedNetwork:
    """Data-based normalization: layer ``l`` weights are multiplied by
    ``s_{l-1} / s_l``, where ``s_l`` is the given percentile of the positive
    ReLU activations of layer ``l`` on the calibration set and ``s_0 = 1``."""
    calibration = np.asarray(calibration, dtype=np.float64)
    if len(calibration) == 0:
        raise NormalizationError("calibration set is empty")
    base = ann.copy(mode=RELU)
    per_layer = [[] for _ in base.ops]
    for i in range(0, len(calibration), chunk):
        res = forward(base, calibration[i:i + chunk], RELU)
        for l, a in enumerate(res.act):
            per_layer[l].append(a[a > 0])
    scales = []
    for l, parts in enumerate(per_layer):
        pos = np.concatenate(parts)
        if pos.size == 0:
            raise NormalizationError(f"layer {l} has no positive activation on the calibration set")
        scales.append(float(np.percentile(pos, percentile)))
    prev = 1.0
    for op, s in zip(base.ops, scales):
        op.weight = op.weight * (prev / s)
        prev = s
    base.meta = dict(base.meta, normalization_percentile=percentile)
    return NormalizedNetwork(base, scales, percentile)


@dataclass
class RateResult:
    cum_output: np.ndarray  # (steps, B, n_out) cumulative output spike counts
    cum_synaptic_events: np.ndarray  # (steps, B)
    cum_spikes: np.ndarray  # (steps, B), input spikes included
    cum_input_spikes: np.ndarray  # (steps, B)

    def predictions(self, step: Optional[int] = None):
        if step is None:
            return np.argmax(self.cum_output, axis=2)
        return np.argmax(self.cum_output[step], axis=1)

    def accuracy_curve(self, labels):
        return np.mean(self.predictions() == np.asarray(labels)[None, :], axis=1)


def run_rate(net: AnalogNetwork, inputs, steps: int = 500, reset=ResetRule.SUBTRACT, seed: int = 0,
             deterministic_input: bool = False) -> RateResult:
    """Simulate the IF network; ``net`` should already be normalized.

    With ``deterministic_input`` the input is injected as a constant current
    instead of Bernoulli spikes (used for analytic tests).
    """
    reset = ResetRule.parse(reset)
    x = np.asarray(inputs, dtype=np.float64)
    if tuple(x.shape[1:]) != net.input_shape:
        raise ShapeMismatchError(f"expected (B, {net.input_shape}), got {x.shape}")
    if not deterministic_input and (np.any(x < 0) or np.any(x > 1)):
        raise DomainError("rate-coded inputs must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    b = len(x)
    ops = net.ops
    fanouts = [op.fanout() for op in ops]
    v = [np.zeros((b,) + tuple(op.out_shape)) for op in ops]
    n_out = int(np.prod(ops[-1].out_shape))
    cum_out = np.zeros((steps, b, n_out), dtype=np.int64)
    cum_syn = np.zeros((steps, b), dtype=np.int64)
    cum_spk = np.zeros((steps, b), dtype=np.int64)
    cum_in = np.zeros((steps, b), dtype=np.int64)
    out_counts = np.zeros((b, n_out), dtype=np.int64)
    syn = np.zeros(b, dtype=np.int64)
    spk = np.zeros(b, dtype=np.int64)
    n_in = np.zeros(b, dtype=np.int64)
    per_ex = lambda a: a.reshape(b, -1).sum(axis=1)
    for t in range(steps):
        if deterministic_input:
            s = x
            current_spikes = None
        else:
            s = rng.random(x.shape) < x
            current_spikes = per_ex(s)
            n_in += current_spikes
            spk += current_spikes
            syn += per_ex(s * fanouts[0])
        for l, op in enumerate(ops):
            v[l] += op.forward(s)
            fired = v[l] >= 1.0
            if reset is ResetRule.TO_ZERO:
                v[l][fired] = 0.0
            else:
                v[l][fired] -= 1.0
            spk += per_ex(fired)
            if l + 1 < len(ops):
                syn += per_ex(fired * fanouts[l + 1])
            else:
                out_counts += fired.reshape(b, -1)
            s = fired
        cum_out[t] = out_counts
        cum_syn[t] = syn
        cum_spk[t] = spk
        cum_in[t] = n_in
    return RateResult(cum_out, cum_syn, cum_spk, cum_in)


@dataclass
class ReferenceCosts:
    final_accuracy: float
    stable_step: int
    stable_synaptic_events: float
    stable_spikes: float
    matching_step: Optional[int] = None
    matching_synaptic_events: Optional[float] = None
    matching_spikes: Optional[float] = None


def reference_costs(accuracy_curve, syn_curve, spike_curve, target_accuracy=None,
                    tolerance: float = 0.001) -> ReferenceCosts:
    """Stable cost: first step after which accuracy stays within ``tolerance``
    of the final accuracy. Matching cost: first step whose accuracy exceeds
    ``target_accuracy``. Cost curves are per-image averages; reported steps
    are 1-based."""
    acc = np.asarray(accuracy_curve, dtype=np.float64)
    final = acc[-1]
    outside = np.flatnonzero(np.abs(acc - final) > tolerance + 1e-12)
    stable = int(outside[-1] + 1) if outside.size else 0
    ref = ReferenceCosts(float(final), stable + 1, float(syn_curve[stable]), float(spike_curve[stable]))
    if target_accuracy is not None:
        above = np.flatnonzero(acc > target_accuracy)
        if above.size:
            m = int(above[0])
            ref.matching_step = m + 1
            ref.matching_synaptic_events = float(syn_curve[m])
            ref.matching_spikes = float(spike_curve[m])
    return ref


CURVE_CSV_HEADER = ("step", "cumulative_synaptic_events", "cumulative_spikes", "accuracy")


def curve_rows(result: RateResult, labels):
    acc = result.accuracy_curve(labels)
    syn = result.cum_synaptic_events.mean(axis=1)
    spk = result.cum_spikes.mean(axis=1)
    for t in range(len(acc)):
        yield (t + 1, float(syn[t]), float(spk[t]), float(acc[t]))
