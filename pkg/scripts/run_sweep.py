#!/usr/bin/env python3
"""Run the imbalance ratio sweep and print the per-ratio medians.

This is the script form of `imbalidx experiment`, convenient when you
want to poke at the result object afterwards or run a scaled-down sweep
while iterating on simulator settings.
"""

import argparse
import time

from imbalidx.experiment import (
    ExperimentConfig,
    experiment_config_from_json,
    run_experiment,
    threads_from_env,
    write_report,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="ExperimentConfig JSON (default: built-ins)")
    ap.add_argument("--out", default="report.csv", help="detail CSV path")
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument(
        "--quick",
        action="store_true",
        help="shrink to 2 ratios x 1 seed with a small simulator, for smoke runs",
    )
    args = ap.parse_args()

    if args.config:
        with open(args.config) as f:
            cfg = experiment_config_from_json(f.read())
    else:
        cfg = ExperimentConfig()
    if args.quick:
        cfg = ExperimentConfig(
            ratios=(0.10, 0.01),
            smote_ratios=(0.01,),
            seeds=(0,),
            n_attack=200,
            sim=cfg.sim,
        )
    threads = args.threads if args.threads is not None else threads_from_env(1)

    t0 = time.perf_counter()
    result = run_experiment(cfg, threads=threads)
    elapsed = time.perf_counter() - t0
    hashes = write_report(result, args.out)

    print(f"swept {len(result.cells)} cells in {elapsed:.1f}s")
    print("ratio    smote  accuracy      far       ur      mcc  sensitivity")
    for row in result.summary:
        r = row.report
        print(
            f"{row.ratio:<8g} {int(row.smote):<5d} {r.accuracy:9.4f} "
            f"{r.far:8.4f} {r.ur:8.4f} {r.mcc:8.4f} {r.sensitivity:12.4f}"
        )
    for name, digest in hashes.items():
        print(f"wrote {name}  sha256={digest[:12]}")


if __name__ == "__main__":
    main()
