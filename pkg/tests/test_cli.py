import json

import numpy as np
import pytest

from vlsmooth.cli import main, parse_grid, read_csv
from vlsmooth.corrupt import pairflip_matrix
from vlsmooth.data import export_csv, gaussian_blobs
from vlsmooth.rng import StreamId

SMALL = ["dataset.K=3", "dataset.d=2", "dataset.n_train_per_class=15", "dataset.n_test_per_class=10",
         "model.hidden=[6]", "epochs=2", "batch_size=15", "seeds=[0, 1]"]


def run(*argv):
    return main([str(a) for a in argv])


def overrides(*extra):
    out = []
    for o in SMALL + list(extra):
        out += ["--override", o]
    return out


def test_train_writes_metrics_and_result(tmp_path):
    assert run("train", "--seed", 4, "--out", tmp_path, *overrides()) == 0
    header, rows = read_csv(tmp_path / "metrics.csv")
    assert header == ["epoch", "train_loss", "test_acc", "lr"]
    assert len(rows) == 2
    res = json.loads((tmp_path / "result.json").read_text())
    assert res["seeds"] == [4] and res["config"]["epochs"] == 2
    assert (tmp_path / "metrics.csv").read_text().startswith("# seed=4 config=")


def test_zero_epochs_gives_header_only(tmp_path):
    assert run("train", "--seed", 0, "--out", tmp_path, *overrides("epochs=0")) == 0
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[1:] == ["epoch,train_loss,test_acc,lr"]


def test_ls_grid_runs_six_cells_per_seed(tmp_path):
    assert run("train", "--out", tmp_path, *overrides("optimizer.kind=gd", "optimizer.lr=0.05", "grid.kind=ls")) == 0
    _, cells = read_csv(tmp_path / "cells.csv")
    assert len(cells) == 12
    assert sorted({float(c["value"]) for c in cells}) == [0.0, 0.1, 0.3, 0.5, 0.7, 0.9]
    _, best = read_csv(tmp_path / "best.csv")
    assert [int(b["seed"]) for b in best] == [0, 1]
    for b in best:
        accs = [float(c["final_test_acc"]) for c in cells if c["seed"] == b["seed"]]
        assert float(b["best_test_acc"]) == max(accs)
    assert len(list((tmp_path / "cells").iterdir())) == 12


def test_sam_grid_runs_six_cells_per_seed(tmp_path):
    assert run("train", "--seed", 2, "--out", tmp_path,
               *overrides("optimizer.kind=sam", "optimizer.lr=0.05", "grid.kind=sam")) == 0
    _, cells = read_csv(tmp_path / "cells.csv")
    assert [float(c["value"]) for c in cells] == [0.0, 0.05, 0.1, 0.15, 0.2, 0.5]


def test_train_is_byte_deterministic_and_worker_independent(tmp_path, monkeypatch):
    args = overrides("optimizer.kind=gd", "grid.kind=ls", "grid.values=[0.0, 0.3]")
    assert run("train", "--out", tmp_path / "a", *args) == 0
    monkeypatch.setenv("VLSMOOTH_WORKERS", "2")
    assert run("train", "--out", tmp_path / "b", *args) == 0
    for name in ("cells.csv", "best.csv", "cells/seed1-cell1/metrics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_exit_codes(tmp_path, monkeypatch):
    assert run("train", "--out", tmp_path, "--override", "optimizer.lr=-1") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run("train", "--out", tmp_path, "--config", bad) == 2
    csv_path = tmp_path / "broken.csv"
    csv_path.write_text("id,label,clean_label,x0\n0,7,7,1.0\n")
    assert run("train", "--out", tmp_path, *overrides("dataset.kind=csv", f"dataset.train_csv={csv_path}")) == 3
    assert run("fig2", "--out", tmp_path, "--grid", "1:0:0.1") == 2
    monkeypatch.setenv("VLSMOOTH_WORKERS", "zero")
    assert run("train", "--out", tmp_path, *overrides()) == 2


def test_fig2_default_curve(tmp_path):
    assert run("fig2", "--out", tmp_path) == 0
    header, rows = read_csv(tmp_path / "fig2.csv")
    assert header == ["f", "eps", "abs_eps"] and len(rows) == 321
    checks = json.loads((tmp_path / "fig2.json").read_text())["checks"]
    assert all(c["ok"] for c in checks.values())
    assert (tmp_path / "fig2.svg").read_text().startswith("<svg")


def test_fig2_zero_variance_is_flat(tmp_path):
    assert run("fig2", "--out", tmp_path, "--variance", 0) == 0
    _, rows = read_csv(tmp_path / "fig2.csv")
    assert all(float(r["eps"]) == 0.0 for r in rows)


def test_parse_grid_symmetric():
    g = parse_grid("-8:8:0.05")
    assert np.array_equal(g, -g[::-1]) and g[160] == 0.0


@pytest.fixture
def fixed_csv(tmp_path):
    ds = gaussian_blobs(3, 15, 2, stream=StreamId(0, "fixed"))
    export_csv(ds, tmp_path / "fixed.csv")
    return tmp_path / "fixed.csv"


def _dump(tmp_path, name, fixed_csv, seed, *extra):
    out = tmp_path / name
    code = run("noise-dump", "--seed", seed, "--out", out,
               *overrides("dataset.kind=csv", f"dataset.train_csv={fixed_csv}", *extra))
    assert code == 0
    return out


def test_noise_dump_schema_and_ls_rows(tmp_path, fixed_csv):
    d = _dump(tmp_path, "ls", fixed_csv, 0, "optimizer.kind=gd", "smoothing.kind=ls", "smoothing.alpha=0.3")
    header, rows = read_csv(d / "noise.csv")
    assert header[:4] == ["id", "epoch", "true_class", "noisy_class"]
    assert header[4:8] == ["eps_0", "eps_1", "eps_2", "eps_norm"]
    assert header[-3:] == ["link_0", "link_1", "link_2"]
    by_class = {}
    for r in rows:
        by_class.setdefault(r["noisy_class"], set()).add((r["eps_0"], r["eps_1"], r["eps_2"]))
    assert all(len(v) == 1 for v in by_class.values())
    meta = json.loads((d / "noise.json").read_text())
    assert set(meta["ranking"]) == {"1", "2"}


def test_compare_self_and_seed_independent_ls(tmp_path, fixed_csv):
    a = _dump(tmp_path, "a", fixed_csv, 0, "optimizer.kind=gd", "smoothing.kind=ls", "smoothing.alpha=0.1")
    b = _dump(tmp_path, "b", fixed_csv, 9, "optimizer.kind=gd", "smoothing.kind=ls", "smoothing.alpha=0.1")
    assert run("compare", a, a, b, "--out", tmp_path / "cmp", "--log-scale") == 0
    _, summary = read_csv(tmp_path / "cmp" / "summary.csv")
    assert [float(s["mean_sym_kl"]) for s in summary] == [0.0, 0.0]
    assert run("compare", a, b, "--epoch", 1, "--out", tmp_path / "cmp1") == 0
    assert run("compare", a, b, "--epoch", 7, "--out", tmp_path / "cmp2") == 3


def test_compare_id_mismatch_lists_diff(tmp_path, fixed_csv, capsys):
    a = _dump(tmp_path, "a", fixed_csv, 0, "optimizer.kind=gd")
    b = tmp_path / "b"
    b.mkdir()
    lines = (a / "noise.csv").read_text().splitlines()
    kept = [ln for ln in lines if not ln.startswith("3,")]
    (b / "noise.csv").write_text("\n".join(kept) + "\n")
    (b / "noise.json").write_text((a / "noise.json").read_text())
    assert run("compare", a, b, "--out", tmp_path / "cmp") == 3
    diff = json.loads((tmp_path / "cmp" / "id_diff_run1.json").read_text())
    assert diff["only_in_first"] == [3] and diff["only_in_second"] == []
    assert "only in" in capsys.readouterr().out


def test_corrupt_sidecar(tmp_path):
    assert run("corrupt", "--seed", 1, "--out", tmp_path / "pf", "--kind", "pairflip", "--rate", 0.2,
               "--override", "dataset.n_train_per_class=50") == 0
    side = json.loads((tmp_path / "pf" / "labels.csv.json").read_text())
    assert np.array_equal(np.array(side["P"]), pairflip_matrix(10, 0.2).P)
    assert side["seed"] == 1
    emp = np.array(side["empirical"])
    assert np.all(np.abs(emp - np.array(side["P"])) < 0.25)
    assert run("corrupt", "--out", tmp_path / "dd", "--kind", "datadep", "--kappa", 0.1, "--beta", 0.05) == 0
    P = np.array(json.loads((tmp_path / "dd" / "labels.csv.json").read_text())["P"])
    assert P[0, 0] == 0.85 and P[1, 1] == pytest.approx(0.80)
    assert run("corrupt", "--out", tmp_path / "x", "--kind", "datadep", "--kappa", 0.5, "--beta", 0.05) == 2
    assert run("corrupt", "--out", tmp_path / "y", "--kind", "datadep", "--kappa", 0.5, "--beta", 0.05,
               "--allow-degenerate") == 0
    header, rows = read_csv(tmp_path / "pf" / "labels.csv")
    assert header == ["id", "clean_label", "noisy_label"] and len(rows) == 500
