"""Acceptance criteria 1-8, each checked at its stated tolerance and time budget.

Criteria 5, 6 and 8 need the MNIST IDX files (see ``scripts/fetch_mnist.py``);
they are skipped, not failed, when the files cannot be found.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from ltcsnn.ann import RELU, backward, build_network, excess_loss, forward, total_loss
from ltcsnn.coding import (ExponentRange, LaVariant, SpikeTrain, decode_ltc, encode_array, encode_ltc,
                           la_derivative_array, spike_count_bound)
from ltcsnn.config import RunConfig
from ltcsnn.data import MNIST_FILES, default_data_dir
from ltcsnn.ef_neuron import EfConfig, simulate_neuron
from ltcsnn.rate import ResetRule
from ltcsnn.workflows import compare_costs, convert_and_verify, prepare_data, run_ltc, train_from_config

TWO = Fraction(2)

# desk-scale training recipes (ranges and the excess-loss strength come from the small preset)
MULTI_RECIPE = dict(epochs=30, batch_size=16, learning_rate=0.05)
SINGLE_RECIPE = dict(epochs=100, batch_size=64, learning_rate=0.1, lr_decay=0.97)


def note(request, **kv):
    for k, v in kv.items():
        request.node.user_properties.append((k, v))


# -- exact rational oracles ---------------------------------------------------

def la_exact(s: Fraction, r: ExponentRange, variant: LaVariant) -> Fraction:
    if s < TWO ** r.e_min:
        return Fraction(0)
    if variant is LaVariant.SINGLE:
        if s >= TWO ** (r.e_max + 1):
            return TWO ** r.e_max
        e = r.e_max
        while TWO ** e > s:
            e -= 1
        return TWO ** e
    if s >= TWO ** (r.e_max + 1):
        return TWO ** (r.e_max + 1) - TWO ** r.e_min
    return math.floor(s / TWO ** r.e_min) * TWO ** r.e_min


def recurrence_times(v: Fraction, cfg: EfConfig):
    """Spike k fires at e_max - floor(log2 V_k) + (T_in - 1), V_{k+1} = V_k - 2**floor(log2 V_k)."""
    r = cfg.output_range
    if v >= TWO ** (r.e_max + 1):
        return list(range(cfg.window_start, cfg.window_end + 1))
    times = []
    while v >= TWO ** r.e_min:
        e = math.floor(math.log2(v))
        while TWO ** e > v:
            e -= 1
        while TWO ** (e + 1) <= v:
            e += 1
        times.append(r.e_max - e + cfg.t_in - 1)
        v -= TWO ** e
    return times


# -- criterion 1 ----------------------------------------------------------------

@pytest.mark.criterion(1, "codec exactness and spike-count bound")
def test_criterion_1_codec(request):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    checked = 0
    for r in (ExponentRange(-2, 2), ExponentRange(-3, 0), ExponentRange(-7, 0)):
        a = rng.uniform(0, 2.0 ** (r.e_max + 2), 10**5)
        lsb = 2.0 ** r.e_min
        # independent closed forms: truncate below 2**e_min, clamp at the cap
        multi = np.where(a >= 2.0 ** (r.e_max + 1), r.cap, np.floor(a / lsb) * lsb)
        _, exp = np.frexp(a)  # a = m * 2**exp with 0.5 <= m < 1
        single = np.where(a < lsb, 0.0, np.ldexp(1.0, np.minimum(exp - 1, r.e_max)))
        bound = np.where(a < lsb, 0, np.where(a >= 2.0 ** (r.e_max + 1), r.window_len, exp - r.e_min))
        weights = np.ldexp(1.0, r.e_max - np.arange(r.window_len))[:, None]
        for variant, expected in ((LaVariant.MULTI, multi), (LaVariant.SINGLE, single)):
            raster = encode_array(a, r, variant)
            decoded = (raster * weights).sum(axis=0)
            assert np.array_equal(decoded, expected), f"{variant.value} mismatch on {r}"
            counts = raster.sum(axis=0)
            assert np.all(counts <= (bound if variant is LaVariant.MULTI else 1))
        # the scalar encoder and decoder on a subsample
        for x, m, b in zip(a[:3000], multi[:3000], bound[:3000]):
            train = encode_ltc(float(x), r)
            assert decode_ltc(train, r) == m and len(train) <= b == spike_count_bound(float(x), r)
        checked += len(a)
    elapsed = time.perf_counter() - t0
    note(request, samples=checked, seconds=round(elapsed, 2))
    assert elapsed < 5.0


# -- criterion 2 ----------------------------------------------------------------

NEURON_RANGES = [(ExponentRange(-2, 2), ExponentRange(-2, 2)),
                 (ExponentRange(-7, 0), ExponentRange(-3, 0)),
                 (ExponentRange(-3, 0), ExponentRange(-3, 4))]


@pytest.mark.criterion(2, "EF neuron against the closed-form spike times")
def test_criterion_2_neuron_oracle(request):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    mismatches = trials = saturated = 0
    for r_in, r_out in NEURON_RANGES:
        cfg = EfConfig(r_in, r_out)
        lo, hi = 2.0 ** r_out.e_min, 2.0 ** (r_out.e_max + 1)
        values = list(rng.uniform(lo, hi, 3000)) + list(rng.uniform(hi, 8 * hi, 334))
        for v in values:
            # a single input spike at the last input step puts exactly v on the neuron
            w = math.ldexp(v, -r_in.e_min)
            run = simulate_neuron([SpikeTrain(cfg.t_in, (cfg.t_in - 1,))], [w], cfg)
            expected = recurrence_times(Fraction(v), cfg)
            fired = [t for t in run.fired_times if t <= cfg.window_end]
            if v < hi:
                first = r_out.e_max - math.floor(math.log2(v)) + cfg.t_in - 1
                mismatches += fired[0] != first
            else:
                saturated += 1
            mismatches += fired != expected or bool(run.early)
            trials += 1
    elapsed = time.perf_counter() - t0
    note(request, trials=trials, saturated=saturated, mismatches=mismatches, seconds=round(elapsed, 2))
    assert mismatches == 0 and trials >= 10**4
    assert elapsed < 30.0


# -- criteria 3, 4 and the first half of 8 --------------------------------------------

def neuron_trials(variant, n=10**4, seed=3, quantize=None):
    rng = np.random.default_rng(seed)
    for i in range(n):
        r_in, r_out = NEURON_RANGES[i % len(NEURON_RANGES)]
        cfg = EfConfig(r_in, r_out, variant)
        k = int(rng.integers(1, 33))
        w = rng.uniform(-1, 1, k)
        if quantize:
            w = np.round(np.ldexp(w, quantize)) / 2.0**quantize
        trains = [encode_ltc(a, r_in) for a in rng.uniform(0, 2, k)]
        yield cfg, trains, w


def theorem_check(variant):
    clean = early = mismatches = max_spikes = 0
    for cfg, trains, w in neuron_trials(variant):
        run = simulate_neuron(trains, w, cfg)
        max_spikes = max(max_spikes, len(run.output))
        if run.early:
            early += 1
            continue
        s = sum(Fraction(float(wi)) * Fraction(decode_ltc(t, cfg.input_range)) for wi, t in zip(w, trains))
        expected = la_exact(max(s, Fraction(0)), cfg.output_range, variant)
        mismatches += Fraction(decode_ltc(run.output, cfg.output_range)) != expected
        clean += 1
    return clean, early, mismatches, max_spikes


@pytest.mark.criterion(3, "neuron-scale equivalence with LA(ReLU(sum))")
def test_criterion_3_theorem(request):
    t0 = time.perf_counter()
    clean, early, mismatches, _ = theorem_check(LaVariant.MULTI)
    elapsed = time.perf_counter() - t0
    note(request, clean_trials=clean, early_trials=early, mismatches=mismatches, seconds=round(elapsed, 2))
    assert mismatches == 0 and clean > 0
    assert elapsed < 60.0


@pytest.mark.criterion(4, "fixed-point and float backends agree")
def test_criterion_4_backends(request):
    t0 = time.perf_counter()
    differ = n = 0
    for variant in LaVariant:
        for cfg, trains, w in neuron_trials(variant, quantize=20):
            a = simulate_neuron(trains, w, cfg, backend="float")
            b = simulate_neuron(trains, w, cfg, backend="fixed")  # overflow would raise here
            differ += (a.fired_times != b.fired_times or a.output != b.output
                       or a.early != b.early or a.late != b.late)
            n += 1
    note(request, trials=n, differing=differ, seconds=round(time.perf_counter() - t0, 2))
    assert differ == 0


@pytest.mark.criterion(8, "single-spike hidden layers")
def test_criterion_8_neuron_scale(request):
    clean, early, mismatches, max_spikes = theorem_check(LaVariant.SINGLE)
    note(request, neuron_clean=clean, neuron_early=early, neuron_mismatches=mismatches,
         neuron_max_spikes=max_spikes)
    assert mismatches == 0 and max_spikes <= 1


# -- criterion 7 ----------------------------------------------------------------

def numeric_grad(f, w, h=1e-6):
    g = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        old = w[idx]
        w[idx] = old + h
        up = f()
        w[idx] = old - h
        down = f()
        w[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-30)


@pytest.mark.criterion(7, "gradient suite")
def test_criterion_7_gradients(request):
    t0 = time.perf_counter()
    hidden, out = ExponentRange(-3, 0), ExponentRange(-3, 4)
    worst = 0.0
    for arch, shape in (("F7-F5-F3", (6,)), ("3C3-P2-F4", (2, 6, 6)), ("2C3s2p1-F3", (1, 5, 5))):
        for seed in (0, 1):
            rng = np.random.default_rng(seed)
            net = build_network(arch, shape, hidden_range=hidden, output_range=out, mode=RELU, seed=seed)
            x = rng.uniform(0, 1, (4,) + shape)
            y = rng.integers(0, net.output_shape[0], 4)
            grads = backward(net, forward(net, x, RELU), y, 0.0, RELU)
            for l in net.trainable():
                num = numeric_grad(lambda: total_loss(net, x, y, 0.0, RELU), net.ops[l].weight)
                worst = max(worst, rel_err(grads[l], num))
            # excess term alone: difference of the analytic gradients against its own finite difference
            for op in net.ops:
                op.weight *= 4.0
            lam = 0.3
            f = lambda: lam * excess_loss(forward(net, x, RELU).act, net.ranges)
            if f() > 0:
                g1 = backward(net, forward(net, x, RELU), y, lam, RELU)
                g0 = backward(net, forward(net, x, RELU), y, 0.0, RELU)
                for l in net.trainable():
                    worst = max(worst, rel_err(g1[l] - g0[l], numeric_grad(f, net.ops[l].weight)))
    sat, eps = hidden.saturation, 1e-9
    factor = la_derivative_array(np.array([0.0, hidden.cap - eps, sat, sat + eps]), hidden)
    elapsed = time.perf_counter() - t0
    note(request, worst_rel_err=f"{worst:.2e}", seconds=round(elapsed, 2))
    assert worst <= 1e-5
    assert factor.tolist() == [1.0, 1.0, 0.0, 0.0]
    assert elapsed < 10.0


# -- criteria 5, 6 and the second half of 8 (MNIST) --------------------------------

def mnist_config(variant, recipe):
    d = default_data_dir()
    if not (d / MNIST_FILES["train_images"]).exists():
        pytest.skip(f"MNIST IDX files not found in {d}")
    return RunConfig(dataset="mnist", data_dir=str(d), architecture="F100-F10", la_variant=variant,
                     train_size=10000, test_size=1000, seed=0, **recipe)


def train_and_convert(variant, recipe):
    cfg = mnist_config(variant, recipe)
    splits = prepare_data(cfg)
    c0 = time.process_time()
    net, history = train_from_config(cfg, splits)
    cpu = time.process_time() - c0
    snn, report = convert_and_verify(net, splits.test)
    return dict(cfg=cfg, splits=splits, net=net, snn=snn, report=report, cpu=cpu)


@pytest.fixture(scope="module")
def multi_model():
    return train_and_convert("multi", MULTI_RECIPE)


@pytest.fixture(scope="module")
def single_model():
    return train_and_convert("single", SINGLE_RECIPE)


def dev_gate(report):
    """Accuracy deviation compared in whole examples so 0.1% of 1000 is exactly one."""
    n = report.n_probes
    ann = round(report.ann_accuracy * n)
    snn = round(report.snn_accuracy * n)
    return abs(ann - snn), math.floor(0.001 * n + 1e-9)


@pytest.mark.criterion(5, "network-level Dev on a 784-100-10 multi-spike net")
def test_criterion_5_network_dev(request, multi_model):
    rep = multi_model["report"]
    diff, allowed = dev_gate(rep)
    note(request, ann_acc=rep.ann_accuracy, snn_acc=rep.snn_accuracy, dev_examples=diff,
         early_probes=rep.probes_with_early, max_dev_clean=rep.max_abs_deviation,
         train_cpu_s=round(multi_model["cpu"], 1))
    assert rep.exact and rep.max_abs_deviation == 0
    assert diff <= allowed
    assert rep.ann_accuracy >= 0.95
    assert multi_model["cpu"] < 30 * 60


@pytest.mark.criterion(6, "LTC synaptic events below the rate-IF stable cost")
def test_criterion_6_cost(request, multi_model):
    t0 = time.perf_counter()
    splits = multi_model["splits"]
    res = compare_costs(multi_model["net"], multi_model["snn"], splits.train, splits.test, steps=500,
                        resets=(ResetRule.TO_ZERO, ResetRule.SUBTRACT))
    ltc = res["ltc"].synaptic_events
    elapsed = time.perf_counter() - t0
    props = {"ltc_events": round(ltc, 1)}
    for name, b in res["baselines"].items():
        ref = b["reference"]
        props[f"{name}_stable_events"] = round(ref.stable_synaptic_events, 1)
        props[f"{name}_ratio"] = round(ltc / ref.stable_synaptic_events, 4)
    props["seconds"] = round(elapsed, 1)
    note(request, **props)
    for b in res["baselines"].values():
        assert ltc < b["reference"].stable_synaptic_events
    assert elapsed < 20 * 60


@pytest.mark.criterion(8, "single-spike hidden layers")
def test_criterion_8_network(request, single_model):
    rep = single_model["report"]
    diff, allowed = dev_gate(rep)
    ltc = run_ltc(single_model["snn"], single_model["splits"].test)
    hidden_max = int(ltc.result.max_neuron_spikes[:, :-1].max())
    note(request, ann_acc=rep.ann_accuracy, snn_acc=rep.snn_accuracy, dev_examples=diff,
         early_probes=rep.probes_with_early, hidden_max_spikes=hidden_max,
         train_cpu_s=round(single_model["cpu"], 1))
    assert hidden_max <= 1
    assert rep.exact and rep.max_abs_deviation == 0
    assert diff <= allowed
    assert rep.ann_accuracy >= 0.95
    assert single_model["cpu"] < 30 * 60
