#!/usr/bin/env python3
"""Orthogonality ablation on the synthetic benchmark.

Runs the default configuration twice per seed, with the Stiefel constraint
on and off, and emits the two validation trajectories side by side as JSON
lines.  No ordering between the two is asserted; the output is for
inspection.
"""

import argparse
import json

import ssdml
from ssdml.trainer import TrainConfig, train


def run_once(seed, orth, noise_sigma, labeled_per_class):
    blobs = ssdml.make_blobs(10, 200, 5, 45, 6.0, noise_sigma, seed=seed)
    semi = ssdml.strip_labels(blobs, labeled_per_class, seed=seed)
    model = train(semi, TrainConfig(seed=seed, orth=orth))
    best = max(model.history, key=lambda h: h["val_r1"])
    return {
        "config": "w/ orth" if orth else "w/o orth",
        "seed": seed,
        "best_val_r1": best["val_r1"],
        "best_val_nmi": round(best["val_nmi"], 4),
        "best_epoch": best["epoch"],
        "final_val_r1": model.history[-1]["val_r1"],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--noise-sigma", type=float, default=4.0)
    ap.add_argument("--labeled-per-class", type=int, default=10)
    args = ap.parse_args()

    for seed in (int(s) for s in args.seeds.split(",")):
        for orth in (True, False):
            print(json.dumps(run_once(seed, orth, args.noise_sigma,
                                      args.labeled_per_class)))


if __name__ == "__main__":
    main()
