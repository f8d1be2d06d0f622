"""Single-step optimizer transitions on explicit state.

Every ``*_step`` function takes a state and data and returns a new state; no
state is mutated in place.  Labels ``Y`` are always in the (N, K) target
layout of :func:`vlsmooth.glm.targets` and may be soft or noisy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InvalidInputError, NumericalError
from .posterior import (
    Full,
    GaussHermite,
    GaussianPosterior,
    Isotropic,
    expected_link,
    expected_link_jacobian,
    predictive_moments,
)
from .rng import as_generator


# --------------------------------------------------------------------------
# learning-rate schedules


@dataclass(frozen=True)
class Constant:
    lr: float

    def __call__(self, epoch: float) -> float:
        return self.lr


@dataclass(frozen=True)
class StepDecay:
    lr: float
    milestones: tuple[float, ...] = ()
    gamma: float = 0.1

    def __call__(self, epoch: float) -> float:
        return self.lr * self.gamma ** sum(epoch >= m for m in self.milestones)


@dataclass(frozen=True)
class WarmupCosine:
    """Linear warmup from 0 to ``lr`` over ``warmup`` epochs, then cosine to 0 at ``total``."""

    lr: float
    total: float
    warmup: float = 5.0

    def __call__(self, epoch: float) -> float:
        if self.warmup > 0 and epoch < self.warmup:
            return self.lr * epoch / self.warmup
        span = max(self.total - self.warmup, 1e-12)
        frac = min(max((epoch - self.warmup) / span, 0.0), 1.0)
        return 0.5 * self.lr * (1.0 + math.cos(math.pi * frac))


# --------------------------------------------------------------------------
# gradient descent family


@dataclass(frozen=True, eq=False)
class GdState:
    theta: np.ndarray
    lr: float = 0.1
    momentum: float = 0.0
    velocity: np.ndarray | None = None
    t: int = 0


def _data_grad(model, theta, X, Y, family, reduction, residual=None):
    if X.shape[0] == 0:
        return np.zeros_like(theta)
    return model.loss_grad(theta, X, Y, family, reduction=reduction, residual=residual)


def _apply_gd(state: GdState, G: np.ndarray, weight_decay: float) -> GdState:
    theta, lr = state.theta, state.lr
    if state.momentum == 0.0:
        new = (1.0 - lr * weight_decay) * theta - lr * G
        return replace(state, theta=new, t=state.t + 1)
    v = G + weight_decay * theta
    if state.velocity is not None:
        v = state.momentum * state.velocity + v
    return replace(state, theta=theta - lr * v, velocity=v, t=state.t + 1)


def gd_step(state: GdState, X, Y, model, family, weight_decay=1.0, reduction="sum") -> GdState:
    """theta <- (1 - lr*wd) theta - lr * sum_i grad l_i(theta).

    With the defaults this is the regularised logistic-regression update with
    R0 = |theta|^2 / 2.
    """
    G = _data_grad(model, state.theta, X, Y, family, reduction)
    return _apply_gd(state, G, weight_decay)


def vgd_step(state: GdState, X, Y, model, family, method=GaussHermite(), variance=1.0) -> GdState:
    """Gradient step on the variational objective with q = N(theta, variance * I).

    The data term uses E_q[A'(f_i)] in place of A'(f_i(theta)); the KL term to
    N(0, I) contributes the same theta decay as plain GD.
    """
    if not getattr(model, "is_linear", False):
        raise InvalidInputError("vgd_step needs a linear model")
    q = GaussianPosterior(state.theta, Isotropic(variance))
    J = model.feature_jacobian(X)
    moments = predictive_moments(q, J)
    residual = expected_link(moments, family, method) - Y
    G = model.loss_grad(state.theta, X, Y, family, residual=residual)
    return _apply_gd(state, G, 1.0)


def _linear_hessian(J, curvature):
    """sum_i J_i^T C_i J_i for stacks J (N, K, P), C (N, K, K)."""
    return np.einsum("nkp,nkl,nlq->pq", J, curvature, J)


def _spd_solve(H, g, what="Hessian"):
    try:
        return cho_solve(cho_factor(H, lower=True), g)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(H.shape[0])
    for attempt in range(1, 4):
        try:
            return cho_solve(cho_factor(H + attempt * 1e-10 * eye, lower=True), g)
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(f"{what} is not positive definite")


def newton_step(state: GdState, X, Y, model, family, hessian=None, prior_precision=1.0) -> GdState:
    """theta <- theta - H^{-1} g for the loss sum_i l_i + prior_precision |theta|^2 / 2.

    ``hessian`` overrides the exact Hessian (used to plug in an expected one).
    """
    if not getattr(model, "is_linear", False):
        raise InvalidInputError("newton_step needs a linear model")
    theta = state.theta
    J = model.feature_jacobian(X)
    f = model.forward_batch(theta, X)
    g = model.loss_grad(theta, X, Y, family) + prior_precision * theta
    if hessian is None:
        hessian = _linear_hessian(J, family.link_jacobian(f)) + prior_precision * np.eye(theta.size)
    return replace(state, theta=theta - _spd_solve(hessian, g), t=state.t + 1)


@dataclass(frozen=True, eq=False)
class VonState:
    theta: np.ndarray
    precision: np.ndarray
    lr: float = 1.0
    t: int = 0

    def __post_init__(self):
        if not 0 < self.lr <= 1:
            raise InvalidInputError("VON step size must lie in (0, 1]")

    def posterior(self) -> GaussianPosterior:
        cov = np.linalg.inv(self.precision)
        return GaussianPosterior(self.theta, Full(0.5 * (cov + cov.T)))


def von_expectations(state: VonState, X, Y, model, family, method=GaussHermite(), prior_precision=1.0):
    """Expected gradient and Hessian of the regularised loss under q_t."""
    q = state.posterior()
    J = model.feature_jacobian(X)
    moments = predictive_moments(q, J)
    residual = expected_link(moments, family, method) - Y
    grad = model.loss_grad(state.theta, X, Y, family, residual=residual) + prior_precision * state.theta
    curv = expected_link_jacobian(moments, family, method)
    hess = _linear_hessian(J, curv) + prior_precision * np.eye(state.theta.size)
    return grad, hess


def von_step(state: VonState, X, Y, model, family, method=GaussHermite(), prior_precision=1.0) -> VonState:
    """Precision first, then the mean along the new covariance times the expected gradient."""
    if not getattr(model, "is_linear", False):
        raise InvalidInputError("von_step needs a linear model")
    rho = state.lr
    grad, hess = von_expectations(state, X, Y, model, family, method, prior_precision)
    precision = (1.0 - rho) * state.precision + rho * hess
    precision = 0.5 * (precision + precision.T)
    theta = state.theta - rho * _spd_solve(precision, grad, "VON precision")
    return replace(state, theta=theta, precision=precision, t=state.t + 1)


# --------------------------------------------------------------------------
# IVON


@dataclass(frozen=True)
class IvonHyper:
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 1.0 - 1e-5
    h0: float = 0.9
    ess: float = 1.0
    rescale_lr: bool = False

    def __post_init__(self):
        if not self.weight_decay > 0:
            raise InvalidInputError("IVON weight decay must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 <= 1):
            raise InvalidInputError("IVON needs beta1 in [0, 1) and beta2 in [0, 1]")
        if not (self.h0 > 0 and self.ess > 0):
            raise InvalidInputError("IVON needs h0 > 0 and ess > 0")


@dataclass(frozen=True, eq=False)
class IvonState:
    m: np.ndarray
    h: np.ndarray
    g: np.ndarray
    hyper: IvonHyper
    t: int = 0

    @classmethod
    def init(cls, m, hyper: IvonHyper) -> "IvonState":
        m = np.asarray(m, dtype=float)
        return cls(m=m, h=np.full_like(m, hyper.h0), g=np.zeros_like(m), hyper=hyper)

    @property
    def sigma(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.hyper.ess * (self.h + self.hyper.weight_decay))

    def posterior(self):
        from .posterior import Diagonal

        return GaussianPosterior(self.m, Diagonal(self.sigma**2))


def ivon_update(state: IvonState, grad_fn, lr: float, stream) -> IvonState:
    """One IVON iteration; ``grad_fn(theta)`` returns the average data-loss gradient."""
    hp = state.hyper
    delta = hp.weight_decay
    sigma = state.sigma
    e = as_generator(stream).standard_normal(state.m.shape)
    theta = state.m + sigma * e
    g_hat = grad_fn(theta)
    h_hat = g_hat * (theta - state.m) / sigma**2
    g = hp.beta1 * state.g + (1.0 - hp.beta1) * g_hat
    c = 1.0 - hp.beta2
    h = hp.beta2 * state.h + c * h_hat + 0.5 * c * c * (state.h - h_hat) ** 2 / (state.h + delta)
    assert np.all(h + delta > 0), "IVON Hessian estimate left the positive region"
    t = state.t + 1
    g_bar = g / (1.0 - hp.beta1**t)
    alpha = lr * (hp.h0 + delta) if hp.rescale_lr else lr
    m = state.m - alpha * (g_bar + delta * state.m) / (h + delta)
    return replace(state, m=m, h=h, g=g, t=t)


def ivon_step(state: IvonState, X, Y, model, family, stream, lr: float) -> IvonState:
    """IVON on a minibatch: the sampled gradient is the minibatch mean."""

    def grad_fn(theta):
        return _data_grad(model, theta, X, Y, family, "mean")

    return ivon_update(state, grad_fn, lr, stream)


# --------------------------------------------------------------------------
# SAM


@dataclass(frozen=True, eq=False)
class SamState:
    theta: np.ndarray
    rho: float = 0.05
    lr: float = 0.1
    momentum: float = 0.0
    velocity: np.ndarray | None = None
    t: int = 0

    def __post_init__(self):
        if self.rho < 0:
            raise InvalidInputError("SAM radius must be non-negative")


def sam_step(state: SamState, X, Y, model, family, weight_decay=0.0, reduction="sum") -> SamState:
    """Ascend to theta + rho g/|g|, then descend from theta with the gradient found there."""
    theta = state.theta

    def grad(th):
        return _data_grad(model, th, X, Y, family, reduction) + weight_decay * th

    g1 = grad(theta)
    norm = np.linalg.norm(g1)
    g2 = grad(theta + state.rho * g1 / norm) if norm > 0 and state.rho > 0 else g1
    if state.momentum:
        v = g2 if state.velocity is None else state.momentum * state.velocity + g2
        return replace(state, theta=theta - state.lr * v, velocity=v, t=state.t + 1)
    return replace(state, theta=theta - state.lr * g2, t=state.t + 1)
