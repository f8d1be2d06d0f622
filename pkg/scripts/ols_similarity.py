"""How close IVON's smoothed labels are to online and uniform label smoothing.

Dumps per-example noise for IVON, OLS and LS runs on clean blobs through the
CLI, then compares IVON against the other two with ``vlsmooth compare``.

    python3 scripts/ols_similarity.py [--seeds 5] [--out results/ols]
"""

import argparse
from pathlib import Path

from vlsmooth.cli import main as cli, read_csv

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default="results/ols")
    args = ap.parse_args()
    out = Path(args.out)
    for seed in range(args.seeds):
        dirs = []
        for kind in ("ivon", "ols", "ls"):
            d = out / f"{kind}-seed{seed}"
            cfg = ROOT / "configs" / f"blobs_clean_{kind}_dump.json"
            if cli(["noise-dump", "--config", str(cfg), "--seed", str(seed), "--out", str(d)]) != 0:
                raise SystemExit(f"noise-dump failed for {kind} seed {seed}")
            dirs.append(str(d))
        cmp_dir = out / f"compare-seed{seed}"
        if cli(["compare", *dirs, "--log-scale", "--out", str(cmp_dir)]) != 0:
            raise SystemExit(f"compare failed for seed {seed}")
        _, rows = read_csv(cmp_dir / "summary.csv")
        kl = {r["run"]: float(r["mean_sym_kl"]) for r in rows}
        print(f"seed {seed}: symKL(IVON, OLS) {kl['run1']:.6f}  symKL(IVON, LS) {kl['run2']:.6f}")


if __name__ == "__main__":
    main()
