"""Label noise curve for a binary model at several fixed predictive variances.

    python3 scripts/fig2.py [--variances 0.25,1,4] [--out results/fig2]
"""

import argparse
from pathlib import Path

import numpy as np

from vlsmooth.cli import fig2_curve, parse_grid
from vlsmooth.posterior import GaussHermite
from vlsmooth.svg import line_chart


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--variances", default="0.25,1,4")
    ap.add_argument("--out", default="results/fig2")
    args = ap.parse_args()
    grid = parse_grid("-8:8:0.05")
    series = {}
    for v in args.variances.split(","):
        eps = fig2_curve(grid, float(v), GaussHermite(64))
        series[f"v={v}"] = eps
        i = int(np.argmax(np.abs(eps) * (grid > 0)))
        print(f"v={v}: peak |eps| {abs(eps[i]):.4f} at f={grid[i]:.2f}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "fig2_variances.svg").write_text(line_chart(grid, series, "label noise", "mean logit", "eps"))


if __name__ == "__main__":
    main()
