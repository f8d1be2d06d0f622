"""IVON against GD and the best label-smoothing rate on noisy 10-class blobs.

Runs the symmetric-40% and data-dependent (kappa=0.4, beta=0.05) tasks and
prints per-seed clean-test accuracies plus best-of summaries.

    python3 scripts/noisy_label_benefit.py [--seeds 10] [--out results/benefit.json]
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from vlsmooth import config
from vlsmooth.experiments import best_of, run_cell

ROOT = Path(__file__).resolve().parents[1]
DATADEP = ["corruption.kind=datadep", "corruption.kappa=0.4", "corruption.beta=0.05"]


def load(name, seeds, extra=()):
    return config.resolve(config.load(ROOT / "configs" / name), [f"seeds={list(range(seeds))}", *extra])


def run_task(seeds, extra=()):
    ivon_cfg = load("blobs_noisy_ivon.json", seeds, extra)
    ls_cfg = load("blobs_noisy_ls_grid.json", seeds, extra)
    ivon = [run_cell(ivon_cfg, s).final_acc for s in ivon_cfg["seeds"]]
    n_grid = len(config.grid_values(ls_cfg))
    cells = [run_cell(ls_cfg, s, i) for s in ls_cfg["seeds"] for i in range(n_grid)]
    gd = [c.final_acc for c in cells if c.index == 0]
    best = best_of(cells)
    by_alpha = {}
    for c in cells:
        by_alpha.setdefault(c.value, []).append(c.final_acc)
    return {
        "ivon": ivon,
        "gd": gd,
        "ls_best_per_seed": [r["best_acc"] for r in best["per_seed"]],
        "ls_best_alpha_per_seed": [r["best_value"] for r in best["per_seed"]],
        "ls_mean_by_alpha": {str(a): float(np.mean(v)) for a, v in sorted(by_alpha.items())},
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    out = {}
    for name, extra in (("symmetric", ()), ("datadep", DATADEP)):
        t0 = time.perf_counter()
        res = run_task(args.seeds, extra)
        res["seconds"] = time.perf_counter() - t0
        out[name] = res
        print(f"{name}: IVON {np.mean(res['ivon']):.4f}  GD {np.mean(res['gd']):.4f}  "
              f"best LS {np.mean(res['ls_best_per_seed']):.4f}  ({res['seconds']:.0f}s)")
        print("  LS mean by alpha:", res["ls_mean_by_alpha"])
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
