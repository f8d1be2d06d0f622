"""IVON with the Hessian estimate frozen at h0 (beta2 = 1) against learned h.

Also sweeps h0 with learning on, to show how much the initial value matters.

    python3 scripts/fixed_vs_learned.py [--seeds 5] [--h0 0.1,0.5,0.9,2]
"""

import argparse
from pathlib import Path

import numpy as np

from vlsmooth import config
from vlsmooth.experiments import run_cell

ROOT = Path(__file__).resolve().parents[1]


def accuracy(seeds, *overrides):
    cfg = config.resolve(config.load(ROOT / "configs" / "blobs_noisy_ivon.json"),
                         [f"seeds={list(range(seeds))}", *overrides])
    return np.array([run_cell(cfg, s).final_acc for s in cfg["seeds"]])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--h0", default="0.1,0.5,0.9,2")
    args = ap.parse_args()
    learned = accuracy(args.seeds)
    fixed = accuracy(args.seeds, "optimizer.beta2=1.0")
    print(f"learned h: {learned.mean():.4f} +- {learned.std():.4f}")
    print(f"frozen h:  {fixed.mean():.4f} +- {fixed.std():.4f}")
    for h0 in args.h0.split(","):
        acc = accuracy(args.seeds, f"optimizer.h0={float(h0)}")
        print(f"h0={h0}: {acc.mean():.4f} +- {acc.std():.4f}")


if __name__ == "__main__":
    main()
