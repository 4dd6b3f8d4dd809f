"""Run the desk-scale benchmark and print both evaluation reports.

Usage::

    python3 scripts/run_benchmark.py --out runs/bench
    python3 scripts/run_benchmark.py --config my.cfg --set pose.epochs=40 --out runs/short
"""
import argparse
import logging
import math

from pose_retrieval.harness.benchmark import run_benchmark
from pose_retrieval.harness.config import Config, apply_overrides, load_config


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="benchmark_out")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--log-every", type=int, default=10, help="epochs between training log lines, 0 for none")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = load_config(args.config) if args.config else Config()
    cfg = apply_overrides(cfg, [tuple(s.split("=", 1)) for s in args.set])
    res = run_benchmark(cfg, args.out, log_every=args.log_every)
    for name, rep in (("oracle", res.oracle), ("trained", res.trained)):
        print(f"\n== {name} ==")
        print(rep.to_table())
    t = res.trained
    print(f"\ntrained: Acc_pi/6 {t.mean_acc:.4f}  MedErr {math.degrees(t.mean_med_err):.2f} deg")
    print("top-1: " + "  ".join(f"{m} {t.mean_top1(m):.4f}" for m in t.modes))
    print("timings (s): " + "  ".join(f"{k} {v:.0f}" for k, v in res.timings.items()))


if __name__ == "__main__":
    main()
