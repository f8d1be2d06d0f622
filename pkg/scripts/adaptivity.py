"""Label noise against distance to the decision boundary on two overlapping blobs.

Trains IVON on the two-blob task and reports mean |eps| by |x1| band, the
first coordinate being the signed distance to the Bayes boundary.

    python3 scripts/adaptivity.py [--seeds 5] [--out results/adaptivity.json]
"""

import argparse
import json
from pathlib import Path

import numpy as np

from vlsmooth import config
from vlsmooth.experiments import build_data, run_cell

ROOT = Path(__file__).resolve().parents[1]
BANDS = [(0, 1), (1, 2), (2, 3), (3, np.inf)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = config.resolve(config.load(ROOT / "configs" / "two_blobs_adaptivity.json"),
                         [f"seeds={list(range(args.seeds))}"])
    out = []
    for seed in cfg["seeds"]:
        cell = run_cell(cfg, seed, keep_trajectory=True)
        recs = cell.trajectory.noise[cfg["epochs"]]
        train_ds, _ = build_data(cfg, seed)
        dist = np.abs(train_ds.features[[r.example_id for r in recs], 0])
        norms = np.array([r.eps_norm for r in recs])
        bands = {f"{lo}-{hi}": float(norms[(dist >= lo) & (dist < hi)].mean()) for lo, hi in BANDS}
        corr = float(np.corrcoef(dist, norms)[0, 1])
        out.append({"seed": seed, "test_acc": cell.final_acc, "mean_eps_by_band": bands, "corr": corr})
        print(f"seed {seed}: acc {cell.final_acc:.3f}  corr(|x1|, |eps|) {corr:+.3f}  "
              + "  ".join(f"{k}: {v:.2e}" for k, v in bands.items()))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
