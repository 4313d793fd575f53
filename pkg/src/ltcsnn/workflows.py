"""End-to-end experiment steps shared by the CLI, scripts and acceptance tests."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from . import ann as ann_mod
from .ann import AnalogNetwork, TrainConfig, build_network
from .config import RunConfig
from .converter import ConversionReport, convert, verify_conversion
from .data import Dataset, downsample, load_dataset, split
from .rate import ResetRule, normalize_weights, reference_costs, run_rate
from .runtime import SnnNetwork, run_chunked

log = logging.getLogger(__name__)


@dataclass
class Splits:
    train: Dataset
    val: Dataset
    test: Dataset

    @property
    def input_shape(self):
        return tuple(self.train.x.shape[1:])


def prepare_data(cfg: RunConfig) -> Splits:
    """Seeded train/validation split of the training pool and a seeded test subset."""
    pool, test_pool = load_dataset(cfg.dataset, data_dir=cfg.data_dir, seed=cfg.seed)
    n_train = cfg.train_size or len(pool) - cfg.val_size
    train, val = split(pool, cfg.seed, (n_train, cfg.val_size))
    n_test = cfg.test_size or len(test_pool)
    (test,) = split(test_pool, cfg.seed + 1, (n_test,))
    if cfg.downsample > 1:
        train, val, test = (Dataset(downsample(d.x, cfg.downsample), d.y) for d in (train, val, test))
    return Splits(train, val, test)


def train_from_config(cfg: RunConfig, splits: Splits, callback=None):
    net = build_network(cfg.architecture, splits.input_shape, hidden_range=cfg.range("hidden"),
                        output_range=cfg.range("output"), input_range=cfg.range("input"),
                        hidden_variant=cfg.la_variant, mode=cfg.mode, seed=cfg.seed)
    tc = TrainConfig(cfg.learning_rate, cfg.epochs, cfg.batch_size, cfg.lambda_excess, cfg.seed,
                     cfg.momentum, cfg.lr_decay)
    t0 = time.perf_counter()
    net, history = ann_mod.train(net, splits.train.x, splits.train.y, tc,
                                 splits.val.x if len(splits.val) else None,
                                 splits.val.y if len(splits.val) else None, callback)
    net.meta.update(lambda_excess=cfg.lambda_excess, seed=cfg.seed, config_hash=cfg.digest(),
                    train_seconds=time.perf_counter() - t0)
    for row in history:
        row["test_acc"] = float("nan")
    if history:
        history[-1]["test_acc"] = ann_mod.accuracy(net, splits.test.x, splits.test.y, "relu_la")
    return net, history


def convert_and_verify(net: AnalogNetwork, test: Dataset, backend="float"):
    snn = convert(net)
    report = verify_conversion(net, snn, test.x, test.y, backend=backend)
    return snn, report


@dataclass
class LtcRun:
    accuracy: float
    synaptic_events: float  # per image
    spikes: float  # per image, input spikes included
    input_spikes: float
    undesired_early: int
    undesired_late: int
    result: object


def run_ltc(snn: SnnNetwork, test: Dataset, backend="float") -> LtcRun:
    res = run_chunked(snn, test.x, backend=backend)
    c = res.counters
    return LtcRun(float(np.mean(res.predictions == test.y)), float(c["synaptic_events"].mean()),
                  float(c["propagated_spikes"].mean()), float(c["input_spikes"].mean()),
                  int(c["undesired_early"].sum()), int(c["undesired_late"].sum()), res)


def compare_costs(net: AnalogNetwork, snn: SnnNetwork, calibration: Dataset, test: Dataset, *,
                  steps=500, percentile=99.9, seed=0, resets=(ResetRule.TO_ZERO, ResetRule.SUBTRACT),
                  chunk=1000):
    """LTC cost against rate-coded IF baselines built from the same weights."""
    ltc = run_ltc(snn, test)
    norm = normalize_weights(net, calibration.x, percentile)
    out = {"ltc": ltc, "normalization_scales": norm.scales, "baselines": {}}
    for reset in resets:
        parts = [run_rate(norm.net, test.x[i:i + chunk], steps, reset, seed + i)
                 for i in range(0, len(test), chunk)]
        acc = np.mean(np.concatenate([p.predictions() == test.y[i * chunk:(i + 1) * chunk][None, :]
                                      for i, p in enumerate(parts)], axis=1), axis=1)
        syn = np.concatenate([p.cum_synaptic_events for p in parts], axis=1).mean(axis=1)
        spk = np.concatenate([p.cum_spikes for p in parts], axis=1).mean(axis=1)
        ref = reference_costs(acc, syn, spk, target_accuracy=ltc.accuracy)
        rows = [(t + 1, float(syn[t]), float(spk[t]), float(acc[t])) for t in range(steps)]
        out["baselines"][reset.value] = {"reference": ref, "curve": rows}
    return out


def summary_row(name, ann_acc, report: ConversionReport, ltc: LtcRun):
    return {
        "model": name,
        "ann_accuracy": ann_acc,
        "snn_accuracy": ltc.accuracy,
        "dev": abs(ltc.accuracy - ann_acc),
        "synaptic_events": ltc.synaptic_events,
        "spikes": ltc.spikes,
        "input_spikes": ltc.input_spikes,
        "undesired_early": ltc.undesired_early,
        "undesired_late": ltc.undesired_late,
        "exact_on_clean_examples": report.exact,
    }


__all__ = ["Splits", "prepare_data", "train_from_config", "convert_and_verify", "run_ltc",
           "compare_costs", "summary_row"]
