"""Experiment configuration: JSON documents, dot-path overrides and validation.

A config is a plain nested dict.  :func:`resolve` merges it over
:data:`DEFAULTS`, applies ``key.path=value`` overrides and validates every
field, raising :class:`ConfigError` with a JSON pointer on the first problem.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError

LS_GRID = (0.0, 0.1, 0.3, 0.5, 0.7, 0.9)
SAM_GRID = (0.0, 0.05, 0.1, 0.15, 0.2, 0.5)

DEFAULTS = {
    "dataset": {
        "kind": "blobs",
        "K": 10,
        "d": 20,
        "n_train_per_class": 100,
        "n_test_per_class": 200,
        "spacing": 1.5,
        "scale": 1.0,
        "centers": None,
        "train_images": None,
        "train_labels": None,
        "test_images": None,
        "test_labels": None,
        "train_csv": None,
        "test_csv": None,
        "limit": None,
        "test_limit": None,
        "normalize": False,
    },
    "model": {"kind": "mlp", "hidden": [128], "activation": "tanh", "bias": True},
    "family": "categorical",
    "optimizer": {
        "kind": "ivon",
        "lr": 0.2,
        "schedule": "cosine",
        "warmup": 5,
        "milestones": [],
        "gamma": 0.1,
        "momentum": 0.0,
        "weight_decay": 1e-3,
        "rho": 0.05,
        "h0": 0.9,
        "beta1": 0.9,
        "beta2": 1.0 - 1e-5,
        "ess": None,
        "rescale_lr": False,
    },
    "smoothing": {"kind": "none", "alpha": 0.0},
    "grid": {"kind": "none", "values": None},
    "corruption": {"kind": "none", "rate": 0.0, "kappa": 0.0, "beta": 0.0, "order": None,
                   "allow_degenerate": False},
    "noise": {"mode": "mc", "samples": 64, "top_k": 10},
    "epochs": 100,
    "batch_size": 50,
    "seeds": [0, 1, 2, 3, 4],
    "probe_epochs": None,
}


def load(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a JSON object")
    return doc


def _merge(base: dict, patch: dict, pointer: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in patch.items():
        here = f"{pointer}/{key}"
        if key not in base:
            raise ConfigError(here, "unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(here, "expected an object")
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str):
    """``a.b.c=value`` -> (["a", "b", "c"], value); value is JSON when it parses."""
    if "=" not in text:
        raise ConfigError("", f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError("", f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_override(cfg: dict, path, value) -> None:
    node = cfg
    for depth, key in enumerate(path[:-1]):
        if not isinstance(node.get(key), dict):
            raise ConfigError("/" + "/".join(path[: depth + 1]), "unknown section")
        node = node[key]
    if path[-1] not in node:
        raise ConfigError("/" + "/".join(path), "unknown key")
    node[path[-1]] = value


def _num(cfg, section, key, lo=None, hi=None, lo_open=False, hi_open=False, allow_none=False, integer=False):
    node = cfg[section] if section else cfg
    value = node[key]
    pointer = f"/{section}/{key}" if section else f"/{key}"
    if value is None and allow_none:
        return
    kinds = (int,) if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise ConfigError(pointer, f"expected {'an integer' if integer else 'a number'}, got {value!r}")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigError(pointer, f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and (value >= hi if hi_open else value > hi):
        raise ConfigError(pointer, f"must be {'<' if hi_open else '<='} {hi}")


def _choice(cfg, section, key, options):
    node = cfg[section] if section else cfg
    pointer = f"/{section}/{key}" if section else f"/{key}"
    if node[key] not in options:
        raise ConfigError(pointer, f"must be one of {', '.join(options)}; got {node[key]!r}")


def _existing(cfg, key):
    path = cfg["dataset"][key]
    if path is None:
        raise ConfigError(f"/dataset/{key}", "required for this dataset kind")
    if not Path(path).is_file():
        raise ConfigError(f"/dataset/{key}", f"file not found: {path}")


def validate(cfg: dict) -> dict:
    ds = cfg["dataset"]
    _choice(cfg, "dataset", "kind", ("blobs", "idx", "csv"))
    _num(cfg, "dataset", "K", lo=2, integer=True)
    if ds["kind"] == "blobs":
        _num(cfg, "dataset", "d", lo=1, integer=True)
        _num(cfg, "dataset", "n_train_per_class", lo=1, integer=True)
        _num(cfg, "dataset", "n_test_per_class", lo=0, integer=True)
        _num(cfg, "dataset", "spacing", lo=0, lo_open=True)
        _num(cfg, "dataset", "scale", lo=0, lo_open=True)
        if ds["centers"] is not None:
            rows = ds["centers"]
            if not (isinstance(rows, list) and len(rows) == ds["K"]
                    and all(isinstance(r, list) and len(r) == ds["d"] for r in rows)):
                raise ConfigError("/dataset/centers", "expected a K x d nested list")
    elif ds["kind"] == "idx":
        for key in ("train_images", "train_labels"):
            _existing(cfg, key)
        if (ds["test_images"] is None) != (ds["test_labels"] is None):
            raise ConfigError("/dataset/test_labels", "test images and labels go together")
        if ds["test_images"] is not None:
            _existing(cfg, "test_images")
            _existing(cfg, "test_labels")
    else:
        _existing(cfg, "train_csv")
        if ds["test_csv"] is not None:
            _existing(cfg, "test_csv")
    _num(cfg, "dataset", "limit", lo=1, allow_none=True, integer=True)
    _num(cfg, "dataset", "test_limit", lo=1, allow_none=True, integer=True)

    model = cfg["model"]
    _choice(cfg, "model", "kind", ("mlp", "linear"))
    _choice(cfg, "model", "activation", ("tanh", "relu", "identity"))
    hidden = model["hidden"]
    if not (isinstance(hidden, list) and len(hidden) <= 3
            and all(isinstance(h, int) and not isinstance(h, bool) and 1 <= h <= 512 for h in hidden)):
        raise ConfigError("/model/hidden", "expected up to 3 layer widths in [1, 512]")
    _choice(cfg, None, "family", ("categorical", "bernoulli"))
    if cfg["family"] == "bernoulli" and ds["K"] != 2:
        raise ConfigError("/family", "bernoulli needs K = 2")

    opt = cfg["optimizer"]
    _choice(cfg, "optimizer", "kind", ("gd", "sam", "ivon", "vgd", "von", "newton"))
    _choice(cfg, "optimizer", "schedule", ("constant", "step", "cosine"))
    _num(cfg, "optimizer", "lr", lo=0, lo_open=True)
    _num(cfg, "optimizer", "warmup", lo=0)
    _num(cfg, "optimizer", "gamma", lo=0, lo_open=True, hi=1)
    _num(cfg, "optimizer", "momentum", lo=0, hi=1, hi_open=True)
    _num(cfg, "optimizer", "weight_decay", lo=0)
    _num(cfg, "optimizer", "rho", lo=0)
    _num(cfg, "optimizer", "h0", lo=0, lo_open=True)
    _num(cfg, "optimizer", "beta1", lo=0, hi=1, hi_open=True)
    _num(cfg, "optimizer", "beta2", lo=0, hi=1)
    _num(cfg, "optimizer", "ess", lo=0, lo_open=True, allow_none=True)
    if not (isinstance(opt["milestones"], list) and all(isinstance(m, (int, float)) for m in opt["milestones"])):
        raise ConfigError("/optimizer/milestones", "expected a list of epochs")
    if opt["kind"] == "ivon" and not opt["weight_decay"] > 0:
        raise ConfigError("/optimizer/weight_decay", "IVON needs a positive weight decay")
    if opt["kind"] in ("vgd", "von", "newton") and model["kind"] != "linear":
        raise ConfigError("/optimizer/kind", f"{opt['kind']} needs a linear model")

    _choice(cfg, "smoothing", "kind", ("none", "ls", "ols"))
    _num(cfg, "smoothing", "alpha", lo=0, hi=1, hi_open=True)
    if cfg["smoothing"]["kind"] == "ols" and cfg["family"] == "bernoulli":
        raise ConfigError("/smoothing/kind", "online label smoothing needs the categorical family")

    _choice(cfg, "grid", "kind", ("none", "ls", "sam"))
    grid = cfg["grid"]
    if grid["values"] is not None:
        vals = grid["values"]
        if not (isinstance(vals, list) and vals and all(isinstance(v, (int, float)) for v in vals)):
            raise ConfigError("/grid/values", "expected a non-empty list of numbers")
        if grid["kind"] == "ls" and any(not 0 <= v < 1 for v in vals):
            raise ConfigError("/grid/values", "smoothing rates must lie in [0, 1)")
        if grid["kind"] == "sam" and any(v < 0 for v in vals):
            raise ConfigError("/grid/values", "SAM radii must be non-negative")
    if grid["kind"] == "sam" and opt["kind"] != "sam":
        raise ConfigError("/grid/kind", "a SAM grid needs optimizer.kind = sam")

    cor = cfg["corruption"]
    _choice(cfg, "corruption", "kind", ("none", "symmetric", "pairflip", "datadep"))
    _num(cfg, "corruption", "rate", lo=0, hi=1, hi_open=True)
    _num(cfg, "corruption", "kappa", lo=0, hi=1)
    _num(cfg, "corruption", "beta", lo=0, hi=1)
    if cor["kind"] != "none":
        from .errors import InvalidInputError
        from .experiments import transition_from_config

        try:
            transition_from_config(cor, ds["K"])
        except InvalidInputError as exc:
            raise ConfigError("/corruption", str(exc)) from exc

    noise = cfg["noise"]
    _choice(cfg, "noise", "mode", ("mc", "exact", "taylor", "nn"))
    _num(cfg, "noise", "samples", lo=1, integer=True)
    _num(cfg, "noise", "top_k", lo=0, integer=True)
    if noise["mode"] in ("exact", "taylor") and model["kind"] != "linear":
        raise ConfigError("/noise/mode", f"{noise['mode']} noise needs a linear model")

    _num(cfg, None, "epochs", lo=0, integer=True)
    _num(cfg, None, "batch_size", lo=1, allow_none=True, integer=True)
    seeds = cfg["seeds"]
    if not (isinstance(seeds, list) and seeds
            and all(isinstance(s, int) and not isinstance(s, bool) and 0 <= s < 2**64 for s in seeds)):
        raise ConfigError("/seeds", "expected a non-empty list of seeds in [0, 2^64)")
    probes = cfg["probe_epochs"]
    if probes is not None and not (isinstance(probes, list)
                                   and all(isinstance(p, int) and 1 <= p <= cfg["epochs"] for p in probes)):
        raise ConfigError("/probe_epochs", "expected epochs in [1, epochs]")
    return cfg


def resolve(doc: dict | None = None, overrides=()) -> dict:
    cfg = _merge(DEFAULTS, doc or {})
    for text in overrides:
        path, value = parse_override(text)
        apply_override(cfg, path, value)
    return validate(cfg)


def grid_values(cfg) -> tuple[float, ...]:
    grid = cfg["grid"]
    if grid["kind"] == "none":
        return ()
    if grid["values"] is not None:
        return tuple(float(v) for v in grid["values"])
    return LS_GRID if grid["kind"] == "ls" else SAM_GRID


def dumps(cfg) -> str:
    """Canonical one-line JSON used to stamp output files."""
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))
