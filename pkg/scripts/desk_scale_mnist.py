"""Train, convert and evaluate the desk-scale MNIST nets for both LA variants.

    python scripts/desk_scale_mnist.py --data-dir data/mnist --out runs/desk

For every config the script writes the trained weights, the SNN bundle, the
conversion report and a per-example cost CSV, then prints one summary row
(ANN/SNN accuracy, Dev., cost per image, probes with early spikes).
"""
import argparse
import logging
from pathlib import Path

from ltcsnn import artifacts
from ltcsnn.config import load_config
from ltcsnn.runtime import COST_CSV_HEADER, cost_records
from ltcsnn.workflows import convert_and_verify, prepare_data, run_ltc, summary_row, train_from_config

ROOT = Path(__file__).resolve().parent.parent
DEFAULT_CONFIGS = [ROOT / "configs" / "mnist_small_multi.cfg", ROOT / "configs" / "mnist_small_single.cfg"]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("configs", nargs="*", type=Path, default=DEFAULT_CONFIGS)
    ap.add_argument("--data-dir")
    ap.add_argument("--out", type=Path, default=Path("runs/desk"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    rows = []
    for path in args.configs:
        cfg = load_config(path, data_dir=args.data_dir, seed=args.seed)
        out = args.out / path.stem
        splits = prepare_data(cfg)
        net, history = train_from_config(cfg, splits)
        stamp = {"config_hash": cfg.digest(), "seed": cfg.seed}
        artifacts.save_ann(net, out / "model", extra={"config": cfg.to_dict(), **stamp})
        snn, report = convert_and_verify(net, splits.test)
        artifacts.save_snn(snn, out / "snn", extra={"config": cfg.to_dict(), **stamp})
        artifacts.write_json(out / "snn" / "conversion_report.json", {**report.as_dict(), **stamp})
        ltc = run_ltc(snn, splits.test)
        artifacts.write_csv(out / "costs.csv", COST_CSV_HEADER, cost_records(ltc.result, splits.test.y), stamp)
        row = summary_row(path.stem, report.ann_accuracy, report, ltc)
        row["train_seconds"] = round(net.meta["train_seconds"], 1)
        rows.append(row)
        print(f"{path.stem}: ann={row['ann_accuracy']:.4f} snn={row['snn_accuracy']:.4f} "
              f"Dev={100 * row['dev']:.2f}% events/img={row['synaptic_events']:.0f} "
              f"spikes/img={row['spikes']:.0f} early_probes={report.probes_with_early} "
              f"exact={row['exact_on_clean_examples']} ({row['train_seconds']} s)", flush=True)
    artifacts.write_json(args.out / "summary.json", rows)


if __name__ == "__main__":
    main()
