"""Epoch-based training driver shared by the CLI and the experiment scripts."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import noise as noise_mod
from .errors import InvalidInputError
from .glm import Bernoulli, predict_class, targets
from .optim import (
    Constant,
    GdState,
    IvonHyper,
    IvonState,
    SamState,
    StepDecay,
    VonState,
    WarmupCosine,
    gd_step,
    ivon_step,
    newton_step,
    sam_step,
    vgd_step,
    von_step,
)
from .posterior import GaussHermite, GaussianPosterior, Isotropic
from .rng import StreamId

OPTIMIZERS = ("gd", "sam", "ivon", "vgd", "von", "newton")
FULL_BATCH_ONLY = ("vgd", "von", "newton")


@dataclass(frozen=True)
class TrainSpec:
    optimizer: str = "gd"
    lr: float = 0.1
    schedule: str = "constant"
    warmup: float = 5.0
    milestones: tuple[float, ...] = ()
    gamma: float = 0.1
    momentum: float = 0.0
    weight_decay: float = 0.0
    rho: float = 0.05
    h0: float = 0.9
    beta1: float = 0.9
    beta2: float = 1.0 - 1e-5
    ess: float | None = None
    rescale_lr: bool = False
    smoothing: str = "none"
    alpha: float = 0.0
    epochs: int = 10
    batch_size: int | None = None
    probe_epochs: tuple[int, ...] = ()
    noise_mode: str = "mc"
    noise_samples: int = 64

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise InvalidInputError(f"unknown optimizer {self.optimizer!r}")
        if self.smoothing not in ("none", "ls", "ols"):
            raise InvalidInputError(f"unknown smoothing {self.smoothing!r}")
        if self.smoothing != "none" and not 0 <= self.alpha < 1:
            raise InvalidInputError("smoothing rate must lie in [0, 1)")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be non-negative")

    def schedule_fn(self):
        if self.schedule == "constant":
            return Constant(self.lr)
        if self.schedule == "step":
            return StepDecay(self.lr, tuple(self.milestones), self.gamma)
        if self.schedule == "cosine":
            return WarmupCosine(self.lr, self.epochs, self.warmup)
        raise InvalidInputError(f"unknown schedule {self.schedule!r}")


@dataclass
class Trajectory:
    state: object
    metrics: list[dict] = field(default_factory=list)
    noise: dict[int, list] = field(default_factory=dict)
    ols: noise_mod.OlsAccumulator | None = None

    @property
    def theta(self) -> np.ndarray:
        return params_of(self.state)


def params_of(state) -> np.ndarray:
    return state.m if isinstance(state, IvonState) else state.theta


def posterior_of(state) -> GaussianPosterior:
    if isinstance(state, (IvonState, VonState)):
        return state.posterior()
    return GaussianPosterior(state.theta, Isotropic(1.0))


def init_state(spec: TrainSpec, model, n_train: int, root: StreamId):
    theta = model.init_params(root.child("init"))
    kind = spec.optimizer
    if kind == "ivon":
        hyper = IvonHyper(weight_decay=spec.weight_decay, beta1=spec.beta1, beta2=spec.beta2,
                          h0=spec.h0, ess=spec.ess or float(n_train), rescale_lr=spec.rescale_lr)
        return IvonState.init(theta, hyper)
    if kind == "sam":
        return SamState(theta, rho=spec.rho, lr=spec.lr, momentum=spec.momentum)
    if kind == "von":
        return VonState(theta, np.eye(theta.size), lr=min(spec.lr, 1.0))
    return GdState(theta, lr=spec.lr, momentum=spec.momentum)


def accuracy(model, theta, family, ds) -> float:
    if len(ds) == 0:
        return float("nan")
    pred = predict_class(family, model.forward_batch(theta, ds.features))
    return float(np.mean(pred == ds.true_labels))


def mean_loss(model, theta, family, X, Y) -> float:
    if X.shape[0] == 0:
        return float("nan")
    f = model.forward_batch(theta, X)
    return float(np.mean(family.log_partition(f) - (Y * f).sum(axis=-1)))


def _step(spec, state, Xb, Yb, model, family, lr, stream):
    kind = spec.optimizer
    if kind == "gd":
        return gd_step(replace(state, lr=lr), Xb, Yb, model, family,
                       weight_decay=spec.weight_decay, reduction="mean")
    if kind == "sam":
        return sam_step(replace(state, lr=lr), Xb, Yb, model, family,
                        weight_decay=spec.weight_decay, reduction="mean")
    if kind == "ivon":
        return ivon_step(state, Xb, Yb, model, family, stream, lr)
    if kind == "vgd":
        return vgd_step(replace(state, lr=lr), Xb, Yb, model, family)
    if kind == "newton":
        return newton_step(state, Xb, Yb, model, family)
    return von_step(replace(state, lr=min(lr, 1.0)), Xb, Yb, model, family)


def _probe(spec, traj, state, epoch, model, family, train_ds, Y, root):
    theta = params_of(state)
    common = dict(epoch=epoch, model=model, theta=theta, X=train_ds.features, Y=Y, family=family,
                  true_class=train_ds.true_labels, noisy_class=train_ds.labels)
    if spec.smoothing == "ls" and spec.alpha > 0:
        return noise_mod.noise_dump("ls", alpha=spec.alpha, **common)
    if spec.smoothing == "ols" and spec.alpha > 0:
        return noise_mod.noise_dump("ols", alpha=spec.alpha, ols=traj.ols, **common)
    if isinstance(state, (IvonState, VonState)):
        return noise_mod.noise_dump("variational", posterior=posterior_of(state), mode=spec.noise_mode,
                                    stream=root.child("noise", epoch), samples=spec.noise_samples, **common)
    return noise_mod.noise_dump("none", **common)


def train(spec: TrainSpec, model, family, train_ds, test_ds=None, seed: int = 0, state=None,
          stream: StreamId | None = None) -> Trajectory:
    """Run ``spec.epochs`` epochs; deterministic in ``stream`` (default ``StreamId(seed, "run")``).

    Initialisation, shuffling, IVON draws and noise probes each use a child
    of the root stream, so sweep cells with distinct roots never share draws.

    Metrics rows hold epoch, train_loss (observed labels, at the mean),
    test_acc (clean test labels) and the last learning rate used.
    """
    N = len(train_ds)
    if spec.optimizer in FULL_BATCH_ONLY and not getattr(model, "is_linear", False):
        raise InvalidInputError(f"{spec.optimizer} needs a linear model")
    if spec.smoothing == "ols" and isinstance(family, Bernoulli):
        raise InvalidInputError("online label smoothing needs a categorical family")
    root = StreamId(seed, "run") if stream is None else stream
    state = init_state(spec, model, N, root) if state is None else state
    traj = Trajectory(state=state)
    if spec.epochs == 0:
        return traj
    Y = targets(family, train_ds.labels)
    X = train_ds.features
    sched = spec.schedule_fn()
    bs = N if (spec.batch_size is None or spec.optimizer in FULL_BATCH_ONLY) else spec.batch_size
    n_batches = max(1, -(-N // bs))
    K = Y.shape[1]
    uniform = np.full(K, 1.0 / K)
    traj.ols = noise_mod.OlsAccumulator(K)
    step = 0
    lr = sched(0.0)
    for epoch in range(spec.epochs):
        perm = root.child("shuffle", epoch).generator().permutation(N)
        acc_next = noise_mod.OlsAccumulator(K)
        for b in range(n_batches):
            idx = perm[b * bs : (b + 1) * bs]
            Xb, Yb = X[idx], Y[idx]
            if spec.smoothing == "ls" and spec.alpha > 0:
                Yb = (1.0 - spec.alpha) * Yb + spec.alpha * uniform
            elif spec.smoothing == "ols" and spec.alpha > 0:
                theta = params_of(state)
                f = model.forward_batch(theta, Xb)
                acc_next.add(family.link(f))
                Yb = (1.0 - spec.alpha) * Yb + spec.alpha * traj.ols.normalized()
            lr = sched(epoch + (b + 1) / n_batches)
            state = _step(spec, state, Xb, Yb, model, family, lr, root.child("ivon", step))
            step += 1
        if spec.smoothing == "ols":
            traj.ols = acc_next
        theta = params_of(state)
        traj.metrics.append({
            "epoch": epoch + 1,
            "train_loss": mean_loss(model, theta, family, X, Y),
            "test_acc": accuracy(model, theta, family, test_ds) if test_ds is not None else float("nan"),
            "lr": lr,
        })
        if epoch + 1 in spec.probe_epochs:
            traj.state = state
            traj.noise[epoch + 1] = _probe(spec, traj, state, epoch + 1, model, family, train_ds, Y, root)
    traj.state = state
    return traj


def default_probe_epochs(epochs: int) -> tuple[int, ...]:
    """25%, 50% and 100% of training, deduplicated."""
    if epochs <= 0:
        return ()
    return tuple(sorted({max(1, round(epochs * f)) for f in (0.25, 0.5, 1.0)}))
