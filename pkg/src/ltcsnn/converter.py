"""Structural conversion of a trained analog network into an EF-neuron network."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ann import RELU_LA, AnalogNetwork, forward
from .ef_neuron import EfConfig
from .errors import ConfigError, ConversionError
from .runtime import SnnLayer, SnnNetwork, run_chunked


def convert(ann: AnalogNetwork) -> SnnNetwork:
    """Copy topology, chain exponent windows and pre-scale every weight by
    ``2**e_in_min`` of its layer. No weight normalization is applied."""
    if ann.input_range is None:
        raise ConfigError("conversion needs an input exponent range")
    if ann.biases is not None and any(b is not None and np.any(np.asarray(b) != 0) for b in ann.biases):
        raise ConversionError("networks with nonzero biases cannot be converted")
    layers = []
    in_range = ann.input_range
    for op, out_range, variant in zip(ann.ops, ann.ranges, ann.variants):
        if out_range is None:
            raise ConfigError("missing output exponent range")
        scaled = np.ldexp(np.asarray(op.weight, dtype=np.float64), in_range.e_min)
        layers.append(SnnLayer(op.with_weight(scaled), EfConfig(in_range, out_range, variant)))
        in_range = out_range
    meta = dict(ann.meta)
    meta["converted_from"] = "ann"
    return SnnNetwork(ann.input_shape, ann.input_range, layers, ann.input_variant, meta)


def unscale_weights(snn: SnnNetwork) -> list:
    """Recover the analog weights from the stored pre-scaled ones."""
    return [np.ldexp(layer.op.weight, -layer.cfg.input_range.e_min) for layer in snn.layers]


@dataclass
class ConversionReport:
    n_probes: int
    max_abs_deviation: float  # over probes without early spikes
    layer_max_deviation: list
    probes_with_early: int
    undesired_early: int
    undesired_late: int
    deviating_probes: int  # clean probes with any nonzero deviation
    affected_neurons: list = field(default_factory=list)  # (probe, layer, flat index) of early fires
    all_probe_max_deviation: float = 0.0
    ann_accuracy: float = float("nan")
    snn_accuracy: float = float("nan")
    all_negative_outputs: int = 0  # probes whose analog outputs are all negative

    @property
    def exact(self) -> bool:
        return self.deviating_probes == 0

    def as_dict(self):
        return asdict(self)


def verify_conversion(ann: AnalogNetwork, snn: SnnNetwork, probes, labels=None, *,
                      backend="float", chunk=500, max_affected=50) -> ConversionReport:
    """Compare per-layer decoded SNN activations with the analog LA forward pass.

    Deviations on probes with undesired early spikes are reported but do not
    count against exactness.
    """
    probes = np.asarray(probes, dtype=np.float64)
    if len(probes) == 0:
        raise ValueError("need at least one probe input")
    res = run_chunked(snn, probes, chunk=chunk, backend=backend)
    fwd = forward(ann, probes, mode=RELU_LA)
    early = res.any_early
    clean = ~early
    layer_dev = []
    per_probe = np.zeros(len(probes))
    for l in range(len(snn.layers)):
        expected = np.maximum(fwd.out[l], 0.0)  # output layer negatives decode to 0
        dev = np.abs(res.layer_decoded[l] - expected).reshape(len(probes), -1).max(axis=1)
        per_probe = np.maximum(per_probe, dev)
        layer_dev.append(float(dev[clean].max()) if clean.any() else 0.0)
    affected = []
    for l, mask in enumerate(res.early_mask):
        for idx in np.argwhere(mask.reshape(len(probes), -1))[:max_affected]:
            affected.append((int(idx[0]), l, int(idx[1])))
        if len(affected) >= max_affected:
            break
    logits = fwd.logits.reshape(len(probes), -1)
    report = ConversionReport(
        n_probes=len(probes),
        max_abs_deviation=float(per_probe[clean].max()) if clean.any() else 0.0,
        layer_max_deviation=layer_dev,
        probes_with_early=int(early.sum()),
        undesired_early=int(res.counters["undesired_early"].sum()),
        undesired_late=int(res.counters["undesired_late"].sum()),
        deviating_probes=int(np.sum(clean & (per_probe > 0))),
        affected_neurons=affected[:max_affected],
        all_probe_max_deviation=float(per_probe.max()),
        all_negative_outputs=int(np.sum(np.all(logits < 0, axis=1))),
    )
    if labels is not None:
        labels = np.asarray(labels)
        report.ann_accuracy = float(np.mean(np.argmax(logits, axis=1) == labels))
        report.snn_accuracy = float(np.mean(res.predictions == labels))
    return report


def accuracy_deviation(report: ConversionReport) -> float:
    return abs(report.snn_accuracy - report.ann_accuracy) if not math.isnan(report.ann_accuracy) else float("nan")
