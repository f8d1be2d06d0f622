"""Datasets: MNIST IDX files, Gaussian blobs, splitting, scaling and CSV export."""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corrupt import TransitionMatrix, apply_corruption, empirical_transition
from .errors import FormatError, InvalidInputError
from .rng import as_generator

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    K: int
    split: str = "train"
    clean_labels: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise InvalidInputError("features must be (N, d) with one label per row")
        if y.size and (y.min() < 0 or y.max() >= self.K):
            raise InvalidInputError(f"labels must lie in [0, {self.K})")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("features must be finite")
        if self.split not in ("train", "test"):
            raise InvalidInputError("split must be 'train' or 'test'")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if self.clean_labels is not None:
            object.__setattr__(self, "clean_labels", np.asarray(self.clean_labels, dtype=int))

    def __len__(self):
        return self.labels.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def true_labels(self) -> np.ndarray:
        return self.labels if self.clean_labels is None else self.clean_labels

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=int)
        clean = None if self.clean_labels is None else self.clean_labels[idx]
        return replace(self, features=self.features[idx], labels=self.labels[idx], clean_labels=clean)


# --------------------------------------------------------------------------
# IDX


def _read_exact(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def read_idx_images(path) -> np.ndarray:
    """Raw uint8 images (N, rows, cols) from an IDX3 file."""
    buf = _read_exact(path)
    if len(buf) < 16:
        raise FormatError(f"{path}: header needs 16 bytes, file has {len(buf)}", offset=len(buf))
    magic, n, rows, cols = struct.unpack(">IIII", buf[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"{path}: bad image magic {magic}, expected {IDX_IMAGES_MAGIC}", offset=0)
    expected = 16 + n * rows * cols
    if len(buf) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(buf)}", offset=min(len(buf), expected))
    return np.frombuffer(buf, dtype=np.uint8, offset=16).reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    buf = _read_exact(path)
    if len(buf) < 8:
        raise FormatError(f"{path}: header needs 8 bytes, file has {len(buf)}", offset=len(buf))
    magic, n = struct.unpack(">II", buf[:8])
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"{path}: bad label magic {magic}, expected {IDX_LABELS_MAGIC}", offset=0)
    if len(buf) != 8 + n:
        raise FormatError(f"{path}: expected {8 + n} bytes, got {len(buf)}", offset=min(len(buf), 8 + n))
    return np.frombuffer(buf, dtype=np.uint8, offset=8)


def write_idx_images(path, images) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes())


def parse_idx(images_path, labels_path, K=10, limit=None, split="train") -> LabeledDataset:
    """IDX image/label pair as a dataset with pixels scaled to [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"image count {images.shape[0]} != label count {labels.shape[0]}", offset=4)
    bad = np.flatnonzero(labels >= K)
    if bad.size:
        raise FormatError(f"{labels_path}: label {labels[bad[0]]} outside [0, {K})", offset=8 + int(bad[0]))
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    X = images.reshape(images.shape[0], -1).astype(float) / 255.0
    prov = {"source": "idx", "images": str(images_path), "labels": str(labels_path),
            "shape": list(images.shape[1:]), "limit": limit}
    return LabeledDataset(X, labels.astype(int), K, split=split, provenance=prov)


# --------------------------------------------------------------------------
# synthetic data


def random_centers(K: int, d: int, spacing: float, stream) -> np.ndarray:
    """K centers drawn from N(0, spacing^2 I / 2), so pairs sit ~spacing*sqrt(d) apart."""
    return as_generator(stream).standard_normal((K, d)) * spacing / np.sqrt(2.0)


def gaussian_blobs(K: int, n_per_class: int, d: int, centers=None, scale=1.0, stream=None,
                   spacing=3.0, split="train") -> LabeledDataset:
    """Class c draws x ~ N(center_c, scale^2 I); rows come out shuffled."""
    rng = as_generator(stream)
    if centers is None:
        centers = random_centers(K, d, spacing, rng)
    centers = np.asarray(centers, dtype=float)
    if centers.shape != (K, d):
        raise InvalidInputError(f"centers must be ({K}, {d})")
    if len({tuple(c) for c in centers}) != K:
        raise InvalidInputError("blob centers must be pairwise distinct")
    labels = np.repeat(np.arange(K), n_per_class)
    X = centers[labels] + scale * rng.standard_normal((labels.size, d))
    perm = rng.permutation(labels.size)
    prov = {"source": "blobs", "K": K, "n_per_class": n_per_class, "d": d, "scale": scale}
    return LabeledDataset(X[perm], labels[perm], K, split=split, provenance=prov)


# --------------------------------------------------------------------------
# split, scaling, corruption


def split(dataset: LabeledDataset, train_frac: float, stream) -> tuple[LabeledDataset, LabeledDataset]:
    if not 0 <= train_frac <= 1:
        raise InvalidInputError("train fraction must lie in [0, 1]")
    perm = as_generator(stream).permutation(len(dataset))
    n_train = int(round(train_frac * len(dataset)))
    train = replace(dataset.subset(perm[:n_train]), split="train")
    test = replace(dataset.subset(perm[n_train:]), split="test")
    return train, test


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, train: LabeledDataset) -> "Standardizer":
        std = train.features.std(axis=0)
        return cls(train.features.mean(axis=0), np.where(std > 0, std, 1.0))

    def apply(self, ds: LabeledDataset) -> LabeledDataset:
        return replace(ds, features=(ds.features - self.mean) / self.std)


def normalize(train: LabeledDataset, *others: LabeledDataset):
    """Standardise with statistics from ``train`` only."""
    scaler = Standardizer.fit(train)
    return (scaler.apply(train), *(scaler.apply(o) for o in others))


def corrupt_dataset(ds: LabeledDataset, T: TransitionMatrix, stream) -> LabeledDataset:
    """Resample training labels through T; test splits are refused."""
    if ds.split != "train":
        raise InvalidInputError("only training splits may be corrupted")
    if T.K != ds.K:
        raise InvalidInputError("transition matrix size does not match the dataset")
    clean = ds.true_labels
    noisy, flips = apply_corruption(clean, T, stream)
    emp, _ = empirical_transition(clean, noisy, ds.K)
    prov = dict(ds.provenance)
    prov["corruption"] = {"P": T.P.tolist(), "empirical": emp.tolist(), "flip_rate": float(flips.mean()) if flips.size else 0.0}
    return replace(ds, labels=noisy, clean_labels=clean, provenance=prov)


# --------------------------------------------------------------------------
# CSV


def export_csv(ds: LabeledDataset, path) -> None:
    """Write id, label, clean_label, x0..x{d-1}; floats use repr so they round-trip."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "label", "clean_label"] + [f"x{j}" for j in range(ds.d)])
            clean = ds.true_labels
            for i in range(len(ds)):
                w.writerow([i, int(ds.labels[i]), int(clean[i])] + [repr(float(v)) for v in ds.features[i]])
        meta = {"K": ds.K, "split": ds.split, "has_clean": ds.clean_labels is not None, "provenance": ds.provenance}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc


def import_csv(path, K=None, split=None) -> LabeledDataset:
    """Inverse of :func:`export_csv`; lines starting with ``#`` are skipped."""
    path = Path(path)
    meta_path = path.with_suffix(path.suffix + ".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    rows = np.loadtxt(lines[1:], delimiter=",", ndmin=2) if len(lines) > 1 else np.zeros((0, 3))
    if rows.size == 0:
        rows = np.zeros((0, 3))
    labels = rows[:, 1].astype(int)
    clean = rows[:, 2].astype(int)
    K = K or meta.get("K") or int(max(labels.max(initial=0), clean.max(initial=0)) + 1)
    has_clean = meta.get("has_clean", bool(np.any(labels != clean)))
    return LabeledDataset(rows[:, 3:], labels, K, split=split or meta.get("split", "train"),
                          clean_labels=clean if has_clean else None, provenance=meta.get("provenance", {}))
