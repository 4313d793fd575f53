"""LTC against rate-coded IF networks (reset-to-zero and reset-by-subtraction).

    python scripts/compare_costs.py runs/desk/mnist_small_multi/model --out runs/desk/compare

Uses the weights of a model trained by ``desk_scale_mnist.py`` or
``ltcsnn train``. Writes accuracy-vs-cost curves for each baseline, the LTC
per-example costs, and a summary with the stable and matching costs.
"""
import argparse
import json
from pathlib import Path

from ltcsnn import artifacts
from ltcsnn.config import RunConfig
from ltcsnn.rate import CURVE_CSV_HEADER
from ltcsnn.workflows import compare_costs, convert_and_verify, prepare_data


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("model", type=Path)
    ap.add_argument("--out", type=Path, default=Path("runs/compare"))
    ap.add_argument("--data-dir")
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--percentile", type=float)
    args = ap.parse_args()

    stored = json.loads((args.model / artifacts.MANIFEST).read_text())["config"]
    if args.data_dir:
        stored["data_dir"] = args.data_dir
    cfg = RunConfig(**stored)
    percentile = args.percentile or cfg.normalization_percentile
    net = artifacts.load_ann(args.model)
    splits = prepare_data(cfg)
    snn, _ = convert_and_verify(net, splits.test)
    res = compare_costs(net, snn, splits.train, splits.test, steps=args.steps, percentile=percentile,
                        seed=cfg.seed)
    stamp = {"config_hash": cfg.digest(), "seed": cfg.seed, "normalization_percentile": percentile}
    args.out.mkdir(parents=True, exist_ok=True)
    ltc = res["ltc"]
    summary = {"ltc": {"accuracy": ltc.accuracy, "synaptic_events": ltc.synaptic_events, "spikes": ltc.spikes},
               "normalization_scales": res["normalization_scales"], **stamp, "baselines": {}}
    print(f"LTC: acc={ltc.accuracy:.4f} events/img={ltc.synaptic_events:.0f} spikes/img={ltc.spikes:.0f}")
    for name, b in res["baselines"].items():
        artifacts.write_csv(args.out / f"rate_{name}_curve.csv", CURVE_CSV_HEADER, b["curve"], stamp)
        ref = b["reference"]
        ratio = ltc.synaptic_events / ref.stable_synaptic_events
        summary["baselines"][name] = dict(vars(ref), ltc_to_stable_event_ratio=ratio)
        matching = ("never" if ref.matching_step is None
                    else f"step {ref.matching_step}, {ref.matching_synaptic_events:.0f} events")
        print(f"rate-{name}: final acc={ref.final_accuracy:.4f} stable at step {ref.stable_step} "
              f"({ref.stable_synaptic_events:.0f} events, LTC/rate={ratio:.3f}); matching: {matching}")
    artifacts.write_json(args.out / "summary.json", summary)


if __name__ == "__main__":
    main()
