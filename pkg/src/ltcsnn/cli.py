"""Command-line entry point: ``ltcsnn {encode,train,convert,run,compare,report}``.

Exit status is 0 on success, 1 for usage/configuration problems (including
missing artifacts) and 2 for runtime failures such as fixed-point overflow or
training divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import artifacts
from .coding import ExponentRange, LaVariant, encode_ltc, la, spike_count_bound
from .config import RunConfig, load_config
from .errors import (ConfigError, DomainError, FixedPointOverflowError, IdxFormatError,
                     NonRepresentableError, NormalizationError, TrainingDivergedError)
from .rate import CURVE_CSV_HEADER
from .runtime import COST_CSV_HEADER, cost_records
from .workflows import compare_costs, convert_and_verify, prepare_data, run_ltc, train_from_config

log = logging.getLogger("ltcsnn")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- commands ---------------------------------------------------------------

def cmd_encode(args):
    value = args.value if args.value is not None else _positional(args, 0, float)
    emin = args.emin if args.emin is not None else _positional(args, 1, int)
    emax = args.emax if args.emax is not None else _positional(args, 2, int)
    variant = args.variant or (args.rest[3] if len(args.rest) > 3 else "multi")
    try:
        r = ExponentRange(emin, emax)
        v = LaVariant.parse(variant)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    approx = la(value, r, v)
    times = ",".join(str(t) for t in encode_ltc(value, r, v).times)
    print(f"la={approx:g} times=[{times}] bound={spike_count_bound(value, r)}")


def _positional(args, i, cast):
    if len(args.rest) <= i:
        raise UsageError("encode needs VALUE EMIN EMAX [VARIANT] or the matching flags")
    try:
        return cast(args.rest[i])
    except ValueError:
        raise UsageError(f"cannot parse {args.rest[i]!r}") from None


def _config(args) -> RunConfig:
    overrides = {"data_dir": getattr(args, "data_dir", None), "seed": getattr(args, "seed", None)}
    return load_config(args.config, **overrides)


def _model_config(model_dir: Path, args) -> RunConfig:
    """Rebuild the run configuration stored next to trained weights."""
    manifest = model_dir / artifacts.MANIFEST
    if not manifest.exists():
        raise FileNotFoundError(f"no trained model in {model_dir}")
    stored = json.loads(manifest.read_text()).get("config")
    if stored is None:
        if not getattr(args, "config", None):
            raise UsageError(f"{model_dir} has no embedded config; pass --config")
        return _config(args)
    if getattr(args, "data_dir", None):
        stored["data_dir"] = args.data_dir
    return RunConfig(**stored)


def _stamp(cfg: RunConfig):
    return {"config_hash": cfg.digest(), "seed": cfg.seed}


def cmd_train(args):
    cfg = _config(args)
    out = Path(args.out)
    splits = prepare_data(cfg)
    net, history = train_from_config(cfg, splits)
    artifacts.save_ann(net, out, extra={"config": cfg.to_dict(), **_stamp(cfg)})
    header = ("epoch", "loss", "train_acc", "val_acc", "test_acc")
    rows = [tuple(row.get(k, "") for k in header) for row in history]
    artifacts.write_csv(out / "metrics.csv", header, rows, _stamp(cfg))
    final = history[-1] if history else {}
    print(f"trained {cfg.architecture}: train_acc={final.get('train_acc', float('nan')):.4f} "
          f"test_acc={final.get('test_acc', float('nan')):.4f} -> {out}")


def cmd_convert(args):
    model = Path(args.model)
    cfg = _model_config(model, args)
    net = artifacts.load_ann(model)
    splits = prepare_data(cfg)
    snn, report = convert_and_verify(net, splits.test, backend=args.backend or cfg.backend)
    out = Path(args.out)
    artifacts.save_snn(snn, out, extra={"config": cfg.to_dict(), **_stamp(cfg)})
    artifacts.write_json(out / "conversion_report.json", {**report.as_dict(), **_stamp(cfg)})
    print(f"converted {len(snn.layers)} layers; probes={report.n_probes} "
          f"with_early={report.probes_with_early} max_dev_clean={report.max_abs_deviation:g} "
          f"ann_acc={report.ann_accuracy:.4f} snn_acc={report.snn_accuracy:.4f} -> {out}")


def cmd_run(args):
    bundle = Path(args.snn)
    cfg = _model_config(bundle, args)
    snn = artifacts.load_snn(bundle)
    splits = prepare_data(cfg)
    ltc = run_ltc(snn, splits.test, backend=args.backend or cfg.backend)
    artifacts.write_csv(args.out, COST_CSV_HEADER, cost_records(ltc.result, splits.test.y), _stamp(cfg))
    print(f"accuracy={ltc.accuracy:.4f} synaptic_events/img={ltc.synaptic_events:.1f} "
          f"spikes/img={ltc.spikes:.1f} undesired_early={ltc.undesired_early} -> {args.out}")


def cmd_compare(args):
    model = Path(args.model)
    cfg = _model_config(model, args)
    net = artifacts.load_ann(model)
    splits = prepare_data(cfg)
    snn, _ = convert_and_verify(net, splits.test)
    calibration = splits.train
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = compare_costs(net, snn, calibration, splits.test, steps=args.steps or cfg.rate_steps,
                        percentile=cfg.normalization_percentile, seed=cfg.seed)
    ltc = res["ltc"]
    stamp = dict(_stamp(cfg), normalization_percentile=cfg.normalization_percentile)
    artifacts.write_csv(out / "ltc_costs.csv", COST_CSV_HEADER, cost_records(ltc.result, splits.test.y), stamp)
    summary = {"ltc": {"accuracy": ltc.accuracy, "synaptic_events": ltc.synaptic_events,
                       "spikes": ltc.spikes, "input_spikes": ltc.input_spikes},
               "normalization_scales": res["normalization_scales"], **stamp, "baselines": {}}
    for name, b in res["baselines"].items():
        artifacts.write_csv(out / f"rate_{name}_curve.csv", CURVE_CSV_HEADER, b["curve"], stamp)
        ref = b["reference"]
        summary["baselines"][name] = dict(vars(ref), ltc_to_stable_event_ratio=ltc.synaptic_events
                                          / ref.stable_synaptic_events if ref.stable_synaptic_events else None)
        print(f"rate-{name}: final_acc={ref.final_accuracy:.4f} stable_step={ref.stable_step} "
              f"stable_events={ref.stable_synaptic_events:.1f} matching_step={ref.matching_step}")
    artifacts.write_json(out / "summary.json", summary)
    print(f"ltc: acc={ltc.accuracy:.4f} events/img={ltc.synaptic_events:.1f} -> {out}")


def cmd_report(args):
    rows = []
    for d in args.dirs:
        d = Path(d)
        path = d / "conversion_report.json"
        if not path.exists():
            raise FileNotFoundError(f"{path} not found (run convert first)")
        rep = json.loads(path.read_text())
        dev = abs(rep["snn_accuracy"] - rep["ann_accuracy"])
        rows.append((d.name, rep["ann_accuracy"], rep["snn_accuracy"], dev, rep["probes_with_early"],
                     rep["max_abs_deviation"], rep.get("config_hash", "")))
    header = ("model", "ann_acc", "snn_acc", "Dev.", "early_probes", "max_dev_clean", "config_hash")
    print("  ".join(f"{h:>12}" for h in header))
    for r in rows:
        print(f"{r[0]:>12}  {r[1]:>12.4f}  {r[2]:>12.4f}  {100 * r[3]:>11.2f}%  {r[4]:>12d}  "
              f"{r[5]:>12.3g}  {r[6]:>12}")
    if args.out:
        artifacts.write_csv(args.out, header, rows)


# -- parser -----------------------------------------------------------------

def build_parser():
    p = _Parser(prog="ltcsnn", description="Logarithmic temporal coding SNN toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("encode", help="LA value, spike times and spike-count bound")
    e.add_argument("rest", nargs="*", metavar="VALUE EMIN EMAX [VARIANT]")
    e.add_argument("--value", type=float)
    e.add_argument("--emin", type=int)
    e.add_argument("--emax", type=int)
    e.add_argument("--variant", choices=["multi", "single"])
    e.set_defaults(func=cmd_encode)

    t = sub.add_parser("train", help="train an analog network from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True, help="model directory")
    t.add_argument("--data-dir")
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("convert", help="convert trained weights and verify on the test subset")
    c.add_argument("--model", required=True)
    c.add_argument("--out", required=True, help="SNN bundle directory")
    c.add_argument("--config")
    c.add_argument("--data-dir")
    c.add_argument("--backend", choices=["float", "fixed"])
    c.set_defaults(func=cmd_convert)

    r = sub.add_parser("run", help="run a converted SNN and write per-example costs")
    r.add_argument("--snn", required=True)
    r.add_argument("--out", required=True, help="cost CSV path")
    r.add_argument("--config")
    r.add_argument("--data-dir")
    r.add_argument("--backend", choices=["float", "fixed"])
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("compare", help="LTC against rate-coded IF baselines on the same weights")
    m.add_argument("--model", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--config")
    m.add_argument("--data-dir")
    m.add_argument("--steps", type=int)
    m.set_defaults(func=cmd_compare)

    s = sub.add_parser("report", help="summary table from conversion reports")
    s.add_argument("dirs", nargs="+")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


_USAGE_ERRORS = (UsageError, ConfigError, DomainError, FileNotFoundError, IdxFormatError)
_RUNTIME_ERRORS = (FixedPointOverflowError, TrainingDivergedError, NonRepresentableError,
                   NormalizationError, OverflowError, FloatingPointError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _RUNTIME_ERRORS as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
