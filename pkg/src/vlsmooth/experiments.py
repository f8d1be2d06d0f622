"""Building blocks shared by the CLI, the experiment scripts and the acceptance tests.

Turns a resolved config (see :mod:`vlsmooth.config`) into datasets, models
and training specs, runs single (seed, grid value) cells, and measures how
far apart two sets of smoothed labels are.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import config as config_mod
from .corrupt import TransitionMatrix, datadep_matrix, pairflip_matrix, symmetric_matrix
from .data import LabeledDataset, corrupt_dataset, gaussian_blobs, import_csv, normalize, parse_idx, random_centers
from .errors import FormatError, InvalidInputError
from .glm import Bernoulli, Categorical, one_hot
from .models import LinearModel, MlpModel
from .rng import StreamId
from .training import TrainSpec, Trajectory, default_probe_epochs, train

SIMPLEX_FLOOR = 1e-6


def transition_from_config(cor: dict, K: int) -> TransitionMatrix:
    kind = cor["kind"]
    if kind == "symmetric":
        return symmetric_matrix(K, cor["rate"])
    if kind == "pairflip":
        return pairflip_matrix(K, cor["rate"], cor.get("order"))
    if kind == "datadep":
        return datadep_matrix(K, cor["kappa"], cor["beta"], allow_degenerate=bool(cor.get("allow_degenerate")))
    raise ValueError(f"no transition matrix for corruption kind {kind!r}")


def build_data(cfg: dict, seed: int) -> tuple[LabeledDataset, LabeledDataset | None]:
    """Train/test pair for one master seed, with training labels corrupted per config."""
    ds = cfg["dataset"]
    K = ds["K"]
    if ds["kind"] == "blobs":
        if ds["centers"] is not None:
            centers = np.asarray(ds["centers"], dtype=float)
        else:
            centers = random_centers(K, ds["d"], ds["spacing"], StreamId(seed, "data/centers"))
        train_ds = gaussian_blobs(K, ds["n_train_per_class"], ds["d"], centers, ds["scale"],
                                  StreamId(seed, "data/train"))
        test_ds = None
        if ds["n_test_per_class"] > 0:
            test_ds = gaussian_blobs(K, ds["n_test_per_class"], ds["d"], centers, ds["scale"],
                                     StreamId(seed, "data/test"), split="test")
    else:
        train_ds, test_ds = _load_files(ds)
    if ds["normalize"]:
        if test_ds is None:
            (train_ds,) = normalize(train_ds)
        else:
            train_ds, test_ds = normalize(train_ds, test_ds)
    if cfg["corruption"]["kind"] != "none":
        T = transition_from_config(cfg["corruption"], K)
        train_ds = corrupt_dataset(train_ds, T, StreamId(seed, "corrupt"))
    return train_ds, test_ds


def _load_files(ds):
    K = ds["K"]
    try:
        if ds["kind"] == "idx":
            train_ds = parse_idx(ds["train_images"], ds["train_labels"], K, ds["limit"])
            test_ds = None
            if ds["test_images"] is not None:
                test_ds = parse_idx(ds["test_images"], ds["test_labels"], K, ds["test_limit"], split="test")
            return train_ds, test_ds
        train_ds = import_csv(ds["train_csv"], K, "train")
        test_ds = import_csv(ds["test_csv"], K, "test") if ds["test_csv"] else None
        return train_ds, test_ds
    except (InvalidInputError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"bad dataset file: {exc}") from exc


def build_family(cfg):
    return Bernoulli() if cfg["family"] == "bernoulli" else Categorical(cfg["dataset"]["K"])


def build_model(cfg, input_dim: int):
    family = build_family(cfg)
    m = cfg["model"]
    if m["kind"] == "linear":
        return LinearModel(input_dim, family.K, bias=m["bias"])
    return MlpModel((input_dim, *m["hidden"], family.K), activation=m["activation"])


def train_spec(cfg, grid_value=None) -> TrainSpec:
    opt, sm = cfg["optimizer"], cfg["smoothing"]
    smoothing, alpha, rho = sm["kind"], sm["alpha"], opt["rho"]
    kind = cfg["grid"]["kind"]
    if kind == "ls" and grid_value is not None:
        smoothing, alpha = ("ls", grid_value) if grid_value > 0 else ("none", 0.0)
    elif kind == "sam" and grid_value is not None:
        rho = grid_value
    probes = cfg["probe_epochs"]
    return TrainSpec(
        optimizer=opt["kind"], lr=opt["lr"], schedule=opt["schedule"], warmup=opt["warmup"],
        milestones=tuple(opt["milestones"]), gamma=opt["gamma"], momentum=opt["momentum"],
        weight_decay=opt["weight_decay"], rho=rho, h0=opt["h0"], beta1=opt["beta1"], beta2=opt["beta2"],
        ess=opt["ess"], rescale_lr=opt["rescale_lr"], smoothing=smoothing, alpha=alpha,
        epochs=cfg["epochs"], batch_size=cfg["batch_size"],
        probe_epochs=tuple(probes) if probes is not None else (),
        noise_mode=cfg["noise"]["mode"], noise_samples=cfg["noise"]["samples"],
    )


def cell_stream(cfg, seed: int, index: int) -> StreamId:
    """Root stream of one sweep cell: (seed, grid kind, grid index)."""
    kind = cfg["grid"]["kind"]
    return StreamId(seed, "run" if kind == "none" else kind, index)


@dataclass
class CellResult:
    seed: int
    index: int
    value: float | None
    metrics: list[dict]
    final_acc: float
    trajectory: Trajectory | None = field(default=None, repr=False)


def run_cell(cfg, seed: int, index: int = 0, keep_trajectory=False, with_probes=False) -> CellResult:
    values = config_mod.grid_values(cfg)
    value = values[index] if values else None
    train_ds, test_ds = build_data(cfg, seed)
    spec = train_spec(cfg, value)
    if with_probes and not spec.probe_epochs:
        spec = replace(spec, probe_epochs=default_probe_epochs(spec.epochs))
    model = build_model(cfg, train_ds.d)
    traj = train(spec, model, build_family(cfg), train_ds, test_ds, stream=cell_stream(cfg, seed, index))
    final = traj.metrics[-1]["test_acc"] if traj.metrics else float("nan")
    return CellResult(seed, index, value, traj.metrics, final, traj if keep_trajectory else None)


def best_of(cells: list[CellResult]) -> dict:
    """Per-seed best final accuracy over grid cells, then mean and std over seeds."""
    per_seed: dict[int, CellResult] = {}
    for c in cells:
        cur = per_seed.get(c.seed)
        if cur is None or (np.nan_to_num(c.final_acc, nan=-1.0) > np.nan_to_num(cur.final_acc, nan=-1.0)):
            per_seed[c.seed] = c
    seeds = sorted(per_seed)
    accs = np.array([per_seed[s].final_acc for s in seeds])
    return {
        "per_seed": [{"seed": s, "best_value": per_seed[s].value, "best_acc": per_seed[s].final_acc} for s in seeds],
        "mean": float(accs.mean()) if accs.size else float("nan"),
        "std": float(accs.std()) if accs.size else float("nan"),
    }


# --------------------------------------------------------------------------
# comparing smoothed labels


def as_distribution(smoothed, floor: float = SIMPLEX_FLOOR) -> np.ndarray:
    """Map smoothed label vectors onto the simplex: clip at ``floor`` and renormalise.

    A single column is read as the Bernoulli probability of class 1.
    """
    s = np.atleast_2d(np.asarray(smoothed, dtype=float))
    if s.shape[-1] == 1:
        s = np.concatenate([1.0 - s, s], axis=-1)
    s = np.clip(s, floor, None)
    return s / s.sum(axis=-1, keepdims=True)


def symmetric_kl(p, q) -> np.ndarray:
    """KL(p||q) + KL(q||p) row-wise for strictly positive distributions."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return ((p - q) * (np.log(p) - np.log(q))).sum(axis=-1)


def cosine(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    denom = na * nb
    return np.where(denom > 0, (a * b).sum(axis=-1) / np.where(denom > 0, denom, 1.0), 1.0)


def smoothed_from_records(records, K: int) -> np.ndarray:
    """y + eps for each record, with y the observed (possibly noisy) label."""
    labels = np.array([r.noisy_class for r in records], dtype=int)
    eps = np.stack([r.eps for r in records])
    y = labels[:, None].astype(float) if eps.shape[1] == 1 else one_hot(labels, K)
    return y + eps
