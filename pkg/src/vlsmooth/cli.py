"""Command-line experiment runner.

Subcommands: ``train``, ``fig2``, ``noise-dump``, ``compare``, ``corrupt``.
Every CSV starts with a ``#`` line holding the resolved config and master
seed, and is byte-identical across reruns of the same config.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
The ``VLSMOOTH_WORKERS`` environment variable sets the number of worker
processes for sweep cells (default 1).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import config as config_mod
from . import experiments as ex
from .corrupt import empirical_transition
from .data import corrupt_dataset, export_csv, import_csv
from .errors import ConfigError, FormatError, InvalidInputError, NumericalError, UnsupportedMethodError
from .glm import Bernoulli
from .models import LinearModel
from .posterior import GaussHermite, GaussianPosterior, Isotropic, MonteCarlo
from .noise import label_noise_exact, sort_by_norm
from .rng import StreamId
from .svg import line_chart, scatter_chart

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
WORKERS_ENV = "VLSMOOTH_WORKERS"


class CheckFailed(Exception):
    """A post-condition on computed output did not hold."""


# --------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def write_csv(path, header, rows, stamp: str) -> None:
    buf = io.StringIO()
    buf.write(f"# {stamp}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> tuple[list[str], list[dict]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise FormatError(f"{path}: no header row")
    reader = csv.DictReader(lines)
    return reader.fieldnames or [], list(reader)


def _stamp(cfg, seed) -> str:
    return f"seed={seed} config={config_mod.dumps(cfg)}"


def _git_stamp() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError("", f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("", f"{WORKERS_ENV} must be >= 1")
    return n


def _resolve(args) -> dict:
    doc = config_mod.load(args.config) if args.config else {}
    cfg = config_mod.resolve(doc, args.override or ())
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
        config_mod.validate(cfg)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


METRIC_COLUMNS = ["epoch", "train_loss", "test_acc", "lr"]


def _metric_rows(metrics):
    return [[m[c] for c in METRIC_COLUMNS] for m in metrics]


# --------------------------------------------------------------------------
# train


def _cell_job(job):
    cfg, seed, index = job
    return ex.run_cell(cfg, seed, index)


def run_cells(cfg, jobs):
    """Run (seed, index) cells, in parallel when requested; results keep job order."""
    payload = [(cfg, s, i) for s, i in jobs]
    n = min(_workers(), len(payload)) if payload else 1
    if n <= 1:
        return [_cell_job(p) for p in payload]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_cell_job, payload))


def cmd_train(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args)
    values = config_mod.grid_values(cfg)
    n_cells = max(1, len(values))
    jobs = [(s, i) for s in cfg["seeds"] for i in range(n_cells)]
    t0 = time.perf_counter()
    cells = run_cells(cfg, jobs)
    wall = time.perf_counter() - t0

    for c in cells:
        stamp = _stamp(cfg, c.seed)
        cell_dir = out / "cells" / f"seed{c.seed}-cell{c.index}"
        cell_dir.mkdir(parents=True, exist_ok=True)
        write_csv(cell_dir / "metrics.csv", METRIC_COLUMNS, _metric_rows(c.metrics), stamp)
    if len(cells) == 1:
        write_csv(out / "metrics.csv", METRIC_COLUMNS, _metric_rows(cells[0].metrics), _stamp(cfg, cells[0].seed))
    stamp = _stamp(cfg, cfg["seeds"][0])
    write_csv(out / "cells.csv", ["seed", "cell", "value", "final_test_acc"],
              [[c.seed, c.index, c.value, c.final_acc] for c in cells], stamp)
    best = ex.best_of(cells)
    rows = [[r["seed"], r["best_value"], r["best_acc"]] for r in best["per_seed"]]
    write_csv(out / "best.csv", ["seed", "best_value", "best_test_acc"], rows, stamp)

    result = {
        "config": cfg,
        "seeds": cfg["seeds"],
        "grid": {"kind": cfg["grid"]["kind"], "values": list(values)},
        "cells": [{"seed": c.seed, "cell": c.index, "value": c.value, "final_test_acc": c.final_acc,
                   "metrics": c.metrics} for c in cells],
        "best": best,
        "wall_clock_s": wall,
        "version": __version__,
        "git": _git_stamp(),
    }
    _write_json(out / "result.json", result)
    print(f"{len(cells)} cell(s); best-of mean test acc {best['mean']:.4f} +/- {best['std']:.4f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# fig2


def parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, step = (float(p) for p in text.split(":"))
    except ValueError as exc:
        raise ConfigError("/grid", f"expected lo:hi:step, got {text!r}") from exc
    if not (np.isfinite([lo, hi, step]).all() and step > 0 and hi >= lo):
        raise ConfigError("/grid", "grid needs finite lo <= hi and step > 0")
    n = int(round((hi - lo) / step)) + 1
    if n > 10**6:
        raise ConfigError("/grid", "grid has more than a million points")
    return np.round(lo + step * np.arange(n), 10)


def fig2_curve(grid, variance: float, method) -> np.ndarray:
    """Binary noise at mean f with fixed predictive variance, one posterior per grid point."""
    if variance == 0:
        return np.zeros_like(grid)
    model = LinearModel(1)
    x = np.ones((1, 1))
    eps = np.empty_like(grid)
    for i, f in enumerate(grid):
        q = GaussianPosterior(np.array([f]), Isotropic(variance))
        eps[i] = label_noise_exact(q, model, x, Bernoulli(), method)[0, 0]
    return eps


def fig2_checks(grid, eps, variance, exact_odd=True) -> dict:
    """Shape properties of the curve; each entry is (ok, detail)."""
    checks = {}
    a = np.abs(eps)
    if variance == 0:
        checks["flat_zero"] = (bool(np.all(eps == 0)), float(a.max(initial=0.0)))
        return checks
    zero = np.flatnonzero(grid == 0)
    if zero.size:
        checks["zero_at_origin"] = (bool(a[zero[0]] <= 1e-10), float(a[zero[0]]))
    mirror = {round(float(f), 10): i for i, f in enumerate(grid)}
    pairs = [(i, mirror[round(-float(f), 10)]) for i, f in enumerate(grid) if round(-float(f), 10) in mirror]
    if pairs and exact_odd:
        worst = max(abs(eps[i] + eps[j]) for i, j in pairs)
        checks["odd"] = (bool(worst <= 1e-10), float(worst))
    peaks = [i for i in range(1, len(grid) - 1) if a[i] > a[i - 1] and a[i] >= a[i + 1]]
    loc = [float(grid[i]) for i in peaks]
    ok = len(peaks) == 2 and loc[0] < 0 < loc[1] and all(0.5 < abs(v) < 3 for v in loc)
    checks["two_symmetric_peaks"] = (bool(ok), loc)
    for edge in (-8.0, 8.0):
        idx = np.flatnonzero(grid == edge)
        if idx.size:
            checks[f"small_at_{edge:+g}"] = (bool(a[idx[0]] < 1e-2), float(a[idx[0]]))
    return checks


def cmd_fig2(args) -> int:
    out = _out_dir(args)
    if args.variance < 0 or not np.isfinite(args.variance):
        raise ConfigError("/variance", "variance must be finite and non-negative")
    grid = parse_grid(args.grid)
    seed = args.seed or 0
    if args.method == "gh":
        method = GaussHermite(args.nodes)
    else:
        method = MonteCarlo(args.samples, StreamId(seed, "fig2"))
    eps = fig2_curve(grid, args.variance, method)
    cfg = {"variance": args.variance, "grid": args.grid, "method": args.method,
           "nodes": args.nodes, "samples": args.samples}
    stamp = _stamp(cfg, seed)
    write_csv(out / "fig2.csv", ["f", "eps", "abs_eps"], [[f, e, abs(e)] for f, e in zip(grid, eps)], stamp)
    (out / "fig2.svg").write_text(line_chart(grid, {"eps": eps, "|eps|": np.abs(eps)},
                                             title=f"label noise, variance {args.variance:g}",
                                             xlabel="mean logit f", ylabel="eps"))
    checks = fig2_checks(grid, eps, args.variance, exact_odd=args.method == "gh")
    _write_json(out / "fig2.json", {"config": cfg, "seed": seed,
                                    "checks": {k: {"ok": ok, "value": v} for k, (ok, v) in checks.items()}})
    failed = [k for k, (ok, _) in checks.items() if not ok]
    for k, (ok, v) in checks.items():
        print(f"{k}: {'ok' if ok else 'FAILED'} ({v})")
    if failed:
        raise CheckFailed(f"curve shape checks failed: {', '.join(failed)}")
    return EXIT_OK


# --------------------------------------------------------------------------
# noise-dump


def noise_header(K_out: int) -> list[str]:
    return (["id", "epoch", "true_class", "noisy_class"] + [f"eps_{k}" for k in range(K_out)] + ["eps_norm"]
            + [f"pred_var_{k}" for k in range(K_out)] + ["feature_norm"] + [f"link_{k}" for k in range(K_out)])


def noise_rows(records):
    for r in records:
        yield ([r.example_id, r.epoch, r.true_class, r.noisy_class, *r.eps, r.eps_norm, *r.pred_variance,
                r.feature_norm, *r.link])


def cmd_noise_dump(args) -> int:
    cfg = _resolve(args)
    if args.epochs:
        try:
            cfg["probe_epochs"] = [int(e) for e in args.epochs.split(",")]
        except ValueError as exc:
            raise ConfigError("/probe_epochs", f"expected comma-separated epochs, got {args.epochs!r}") from exc
        config_mod.validate(cfg)
    out = _out_dir(args)
    seed = cfg["seeds"][0]
    cell = ex.run_cell(cfg, seed, 0, keep_trajectory=True, with_probes=True)
    traj = cell.trajectory
    stamp = _stamp(cfg, seed)
    K_out = ex.build_family(cfg).K
    rows, summary = [], {}
    k = cfg["noise"]["top_k"]
    for epoch in sorted(traj.noise):
        recs = traj.noise[epoch]
        rows.extend(noise_rows(recs))
        ranked = sort_by_norm(recs)
        summary[str(epoch)] = {
            "top": [r.example_id for r in ranked[:k]],
            "bottom": [r.example_id for r in ranked[::-1][:k]],
            "mean_eps_norm": float(np.mean([r.eps_norm for r in recs])) if recs else float("nan"),
        }
    write_csv(out / "noise.csv", noise_header(K_out), rows, stamp)
    write_csv(out / "metrics.csv", METRIC_COLUMNS, _metric_rows(cell.metrics), stamp)
    _write_json(out / "noise.json", {"config": cfg, "seed": seed, "K": cfg["dataset"]["K"],
                                     "epochs": sorted(traj.noise), "ranking": summary})
    print(f"dumped {len(rows)} rows over epochs {sorted(traj.noise)}")
    return EXIT_OK


# --------------------------------------------------------------------------
# compare


def load_dump(run_dir, epoch=None):
    """Smoothed labels by example id from a noise-dump directory at one epoch."""
    path = Path(run_dir) / "noise.csv"
    meta_path = Path(run_dir) / "noise.json"
    if not path.is_file():
        raise FormatError(f"{run_dir}: no noise.csv")
    header, rows = read_csv(path)
    eps_cols = [c for c in header if c.startswith("eps_") and c != "eps_norm"]
    if not rows:
        raise FormatError(f"{path}: no rows")
    epochs = sorted({int(r["epoch"]) for r in rows})
    chosen = epochs[-1] if epoch is None else epoch
    if chosen not in epochs:
        raise FormatError(f"{path}: epoch {chosen} not dumped (have {epochs})")
    K = json.loads(meta_path.read_text())["K"] if meta_path.is_file() else max(2, len(eps_cols))
    sel = [r for r in rows if int(r["epoch"]) == chosen]
    ids = np.array([int(r["id"]) for r in sel])
    eps = np.array([[float(r[c]) for c in eps_cols] for r in sel])
    noisy = np.array([int(r["noisy_class"]) for r in sel])
    norms = np.array([float(r["eps_norm"]) for r in sel])
    y = noisy[:, None].astype(float) if len(eps_cols) == 1 else np.eye(K)[noisy]
    order = np.argsort(ids, kind="stable")
    return {"ids": ids[order], "smoothed": (y + eps)[order], "eps_norm": norms[order], "epoch": chosen}


def id_diff(a, b) -> dict:
    sa, sb = set(a.tolist()), set(b.tolist())
    return {"only_in_first": sorted(sa - sb), "only_in_second": sorted(sb - sa)}


class IdMismatch(FormatError):
    pass


def compare_dumps(ref, others: dict) -> tuple[list, dict]:
    """Per-example symmetric KL and cosine of each run against ``ref``."""
    p = ex.as_distribution(ref["smoothed"])
    per_example = {}
    summary = {}
    for name, d in others.items():
        if not np.array_equal(ref["ids"], d["ids"]):
            diff = id_diff(ref["ids"], d["ids"])
            raise IdMismatch(f"example ids differ for {name}: only in reference {diff['only_in_first'][:20]}, "
                             f"only in {name} {diff['only_in_second'][:20]}")
        q = ex.as_distribution(d["smoothed"])
        skl = ex.symmetric_kl(p, q)
        cos = ex.cosine(ref["smoothed"], d["smoothed"])
        per_example[name] = (skl, cos)
        summary[name] = {"mean_sym_kl": float(skl.mean()), "median_sym_kl": float(np.median(skl)),
                         "std_sym_kl": float(skl.std()), "mean_cosine": float(cos.mean())}
    rows = []
    for n, i in enumerate(ref["ids"]):
        row = [int(i), ref["eps_norm"][n]]
        for name in others:
            skl, cos = per_example[name]
            row += [skl[n], cos[n]]
        rows.append(row)
    return rows, summary


def cmd_compare(args) -> int:
    if len(args.runs) < 2:
        raise ConfigError("/runs", "compare needs at least two run directories")
    out = _out_dir(args)
    ref = load_dump(args.runs[0], args.epoch)
    names = [f"run{j}" for j in range(1, len(args.runs))]
    others = {n: load_dump(r, args.epoch) for n, r in zip(names, args.runs[1:])}
    try:
        rows, summary = compare_dumps(ref, others)
    except IdMismatch:
        for n, r in zip(names, args.runs[1:]):
            diff = id_diff(ref["ids"], others[n]["ids"])
            if diff["only_in_first"] or diff["only_in_second"]:
                _write_json(out / f"id_diff_{n}.json", {"reference": args.runs[0], "other": r, **diff})
                print(f"id mismatch against {r}:")
                print(f"  only in {args.runs[0]}: {diff['only_in_first']}")
                print(f"  only in {r}: {diff['only_in_second']}")
        raise
    cfg = {"runs": list(args.runs), "epoch": ref["epoch"], "log_scale": args.log_scale}
    stamp = _stamp(cfg, 0)
    header = ["id", "ref_eps_norm"] + [c for n in names for c in (f"sym_kl_{n}", f"cosine_{n}")]
    write_csv(out / "compare.csv", header, rows, stamp)
    write_csv(out / "summary.csv", ["run", "dir", "mean_sym_kl", "median_sym_kl", "std_sym_kl", "mean_cosine"],
              [[n, r, summary[n]["mean_sym_kl"], summary[n]["median_sym_kl"], summary[n]["std_sym_kl"],
                summary[n]["mean_cosine"]] for n, r in zip(names, args.runs[1:])], stamp)
    first = np.array([row[2] for row in rows])
    (out / "compare.svg").write_text(scatter_chart(
        ref["eps_norm"], first, title=f"{args.runs[1]} vs {args.runs[0]}", xlabel="|eps| (reference)",
        ylabel="symmetric KL", log_y=args.log_scale))
    _write_json(out / "compare.json", {"config": cfg, "summary": summary,
                                       "dirs": dict(zip(names, args.runs[1:]))})
    for n, r in zip(names, args.runs[1:]):
        s = summary[n]
        print(f"{r}: mean sym KL {s['mean_sym_kl']:.6g}, mean cosine {s['mean_cosine']:.6g}")
    return EXIT_OK


# --------------------------------------------------------------------------
# corrupt


def cmd_corrupt(args) -> int:
    cfg = _resolve(args)
    cor = dict(cfg["corruption"])
    for key in ("kind", "rate", "kappa", "beta"):
        value = getattr(args, key)
        if value is not None:
            cor[key] = value
    if args.order:
        cor["order"] = [int(v) for v in args.order.split(",")]
    if args.allow_degenerate:
        cor["allow_degenerate"] = True
    cfg["corruption"] = cor
    if cor["kind"] == "none":
        raise ConfigError("/corruption/kind", "choose symmetric, pairflip or datadep")
    config_mod.validate(cfg)
    seed = cfg["seeds"][0]
    out = _out_dir(args)
    if args.input:
        clean_ds = import_csv(args.input, cfg["dataset"]["K"], "train")
    else:
        clean_cfg = dict(cfg, corruption=dict(cor, kind="none"))
        clean_ds, _ = ex.build_data(clean_cfg, seed)
    T = ex.transition_from_config(cor, clean_ds.K)
    noisy_ds = corrupt_dataset(clean_ds, T, StreamId(seed, "corrupt"))
    emp, empty = empirical_transition(noisy_ds.true_labels, noisy_ds.labels, clean_ds.K)
    stamp = _stamp(cfg, seed)
    write_csv(out / "labels.csv", ["id", "clean_label", "noisy_label"],
              [[i, int(c), int(n)] for i, (c, n) in enumerate(zip(noisy_ds.true_labels, noisy_ds.labels))], stamp)
    _write_json(out / "labels.csv.json", {
        "config": cfg, "seed": seed, "P": T.P, "empirical": emp, "empty_rows": np.flatnonzero(empty),
        "flip_rate": float(np.mean(noisy_ds.labels != noisy_ds.true_labels)) if len(noisy_ds) else 0.0,
    })
    export_csv(noisy_ds, out / "dataset.csv")
    print(f"corrupted {len(noisy_ds)} labels; flip rate {np.mean(noisy_ds.labels != noisy_ds.true_labels):.4f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlsmooth", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON config file")
            p.add_argument("--override", action="append", metavar="KEY=VALUE",
                           help="dot-path override, e.g. optimizer.lr=0.05 (repeatable)")
        p.add_argument("--seed", type=int, help="master seed; replaces the config's seed list")
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("train", help="train one config, optionally sweeping an LS or SAM grid")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fig2", help="label noise against the mean logit at fixed variance")
    common(p, config=False)
    p.add_argument("--variance", type=float, default=1.0)
    p.add_argument("--grid", default="-8:8:0.05", help="lo:hi:step")
    p.add_argument("--method", choices=("gh", "mc"), default="gh")
    p.add_argument("--nodes", type=int, default=64)
    p.add_argument("--samples", type=int, default=10**6)
    p.set_defaults(func=cmd_fig2)

    p = sub.add_parser("noise-dump", help="per-example label noise at probe epochs")
    common(p)
    p.add_argument("--epochs", help="comma-separated probe epochs (default: config, else 25/50/100%%)")
    p.set_defaults(func=cmd_noise_dump)

    p = sub.add_parser("compare", help="divergence between smoothed labels of noise dumps")
    p.add_argument("runs", nargs="+", help="noise-dump directories; the first is the reference")
    p.add_argument("--epoch", type=int, help="dumped epoch to compare (default: last)")
    p.add_argument("--log-scale", action="store_true", help="log-scale y axis in the scatter plot")
    p.add_argument("--out", default="compare")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("corrupt", help="corrupt training labels through a transition matrix")
    common(p)
    p.add_argument("--kind", choices=("symmetric", "pairflip", "datadep"))
    p.add_argument("--rate", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--order", help="comma-separated cyclic class order for pairflip")
    p.add_argument("--input", help="dataset CSV to corrupt instead of the config dataset")
    p.add_argument("--allow-degenerate", action="store_true")
    p.set_defaults(func=cmd_corrupt)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidInputError, UnsupportedMethodError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, CheckFailed, FloatingPointError, AssertionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
