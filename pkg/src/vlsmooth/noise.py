"""Label smoothing baselines and the label noise induced by variational learning.

Classical LS and online LS produce smoothed labels directly.  For a Gaussian
posterior q over the parameters, the induced noise on example i is

    eps_i = A'(f_i(mean)) - E_q[A'(f_i(theta))]

so that a point-estimate update on labels ``y + eps`` reproduces the
variational update.  It is computed exactly for linear models
(:func:`label_noise_exact`), by sampling (:func:`label_noise_mc`), or with the
single-sample first-order forms (:func:`label_noise_taylor`,
:func:`label_noise_nn`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, UnsupportedMethodError
from .glm import Bernoulli
from .posterior import (
    GaussHermite,
    GaussianPosterior,
    bernoulli_noise_gh,
    expected_link,
    predictive_moments,
    sample,
)
from .rng import as_generator

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# LS and OLS


def ls_smooth(y, alpha: float) -> np.ndarray:
    """(1 - alpha) y + alpha / K on the trailing axis."""
    if not 0 < alpha < 1:
        raise InvalidInputError(f"smoothing rate must lie in (0, 1), got {alpha}")
    y = np.asarray(y, dtype=float)
    return (1.0 - alpha) * y + alpha / y.shape[-1]


def ls_noise(y, alpha: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return alpha * (1.0 / y.shape[-1] - y)


@dataclass
class OlsAccumulator:
    """Running sum of softmax outputs over one epoch."""

    K: int
    u: np.ndarray = None
    count: int = 0

    def __post_init__(self):
        if self.u is None:
            self.u = np.zeros(self.K)

    def add(self, probs) -> None:
        probs = np.atleast_2d(np.asarray(probs, dtype=float))
        if np.any(probs < 0):
            raise InvalidInputError("softmax outputs must be non-negative")
        self.u = self.u + probs.sum(axis=0)
        self.count += probs.shape[0]

    def normalized(self) -> np.ndarray:
        total = self.u.sum()
        if self.count == 0 or total <= 0:
            return np.full(self.K, 1.0 / self.K)
        return self.u / total


def ols_accumulate(acc: OlsAccumulator, logits, family) -> OlsAccumulator:
    """New accumulator with the link outputs of ``logits`` added."""
    out = OlsAccumulator(acc.K, acc.u.copy(), acc.count)
    out.add(family.link(logits))
    return out


def ols_noise(acc: OlsAccumulator, y, alpha: float) -> np.ndarray:
    """alpha (u_bar - y) with u_bar from the previous epoch's accumulator."""
    y = np.asarray(y, dtype=float)
    return alpha * (acc.normalized() - y)


def ols_smooth(acc: OlsAccumulator, y, alpha: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return (1.0 - alpha) * y + alpha * acc.normalized()


# --------------------------------------------------------------------------
# variational label noise


def _batch(model, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    return (X[None, :] if single else X), single


def label_noise_exact(q: GaussianPosterior, model, X, family, method=GaussHermite()) -> np.ndarray:
    """A'(f at the mean) - E_q[A'(f)] for a linear model, (N, K) or (K,) for one input."""
    if not getattr(model, "is_linear", False):
        raise UnsupportedMethodError("exact label noise needs a linear model; use label_noise_mc")
    X, single = _batch(model, X)
    moments = predictive_moments(q, model.feature_jacobian(X))
    if isinstance(family, Bernoulli) and isinstance(method, GaussHermite):
        eps = bernoulli_noise_gh(moments.mean, moments.variance, method.nodes)
    else:
        eps = family.link(moments.mean) - expected_link(moments, family, method)
    return eps[0] if single else eps


def label_noise_mc(q: GaussianPosterior, model, X, family, samples: int, stream) -> np.ndarray:
    """Sampled version of the exact noise for any model: average over parameter draws."""
    X, single = _batch(model, X)
    thetas = sample(q, samples, stream)
    mean_link = np.zeros((X.shape[0], model.K))
    for theta in thetas:
        mean_link += family.link(model.forward_batch(theta, X))
    eps = family.link(model.forward_batch(q.mean, X)) - mean_link / samples
    return eps[0] if single else eps


def _curvature_times(family, f, v):
    """A''(f) v for stacked logits f and vectors v, both (N, K)."""
    if isinstance(family, Bernoulli):
        return family.link_derivative(f) * v
    return np.einsum("nkl,nl->nk", family.link_jacobian(f), v)


def label_noise_taylor(q: GaussianPosterior, model, X, family, stream=None, e=None) -> np.ndarray:
    """Single-sample first-order noise A''(f) sqrt(phi^T Sigma phi) e, per output.

    ``e`` (shape (N, K) or broadcastable) overrides the draw from ``stream``.
    """
    if not getattr(model, "is_linear", False):
        raise UnsupportedMethodError("label_noise_taylor needs a linear model; use label_noise_nn")
    X, single = _batch(model, X)
    moments = predictive_moments(q, model.feature_jacobian(X))
    if e is None:
        e = as_generator(stream).standard_normal(moments.mean.shape)
    scale = family.link_derivative(moments.mean) * np.sqrt(moments.variance)
    eps = scale * np.broadcast_to(np.asarray(e, dtype=float), moments.mean.shape)
    return eps[0] if single else eps


def label_noise_nn(q: GaussianPosterior, model, X, family, stream=None, e=None) -> np.ndarray:
    """First-order noise A''(f(mean)) J Sigma^{1/2} e with one parameter-space draw per example.

    ``e`` of shape (N, P) overrides the draw from ``stream``.
    """
    X, single = _batch(model, X)
    J = model.output_jacobian_batch(q.mean, X)
    if e is None:
        e = as_generator(stream).standard_normal((X.shape[0], q.dim))
    e = np.asarray(e, dtype=float).reshape(X.shape[0], q.dim)
    v = np.einsum("nkp,np->nk", J, q.scale(e))
    f = model.forward_batch(q.mean, X)
    eps = _curvature_times(family, f, v)
    return eps[0] if single else eps


# --------------------------------------------------------------------------
# records


@dataclass(frozen=True, eq=False)
class LabelNoiseRecord:
    example_id: int
    epoch: int
    true_class: int
    noisy_class: int
    eps: np.ndarray
    smoothed: np.ndarray
    pred_variance: np.ndarray
    feature_norm: float
    link: np.ndarray

    @property
    def eps_norm(self) -> float:
        return float(np.linalg.norm(self.eps))


def make_records(epoch, ids, true_class, noisy_class, Y, eps, pred_var, fnorm, link) -> list[LabelNoiseRecord]:
    recs = []
    for n in range(len(ids)):
        recs.append(
            LabelNoiseRecord(
                example_id=int(ids[n]),
                epoch=int(epoch),
                true_class=int(true_class[n]),
                noisy_class=int(noisy_class[n]),
                eps=np.atleast_1d(eps[n]),
                smoothed=np.atleast_1d(Y[n] + eps[n]),
                pred_variance=np.atleast_1d(pred_var[n]),
                feature_norm=float(fnorm[n]),
                link=np.atleast_1d(link[n]),
            )
        )
    return recs


def variational_noise(q, model, X, family, mode="mc", stream=None, samples=64, method=GaussHermite()):
    """Noise and predictive variance for a posterior, dispatching on ``mode``.

    Modes: ``exact`` (linear models), ``mc`` (averaged over parameter draws),
    ``taylor``/``nn`` (single sample, first order).
    """
    X = np.asarray(X, dtype=float)
    pred_var, fnorm = _jacobian_stats(q, model, X)
    if mode == "exact":
        eps = label_noise_exact(q, model, X, family, method)
    elif mode == "mc":
        eps = label_noise_mc(q, model, X, family, samples, stream)
    elif mode == "taylor":
        eps = label_noise_taylor(q, model, X, family, stream)
    elif mode == "nn":
        eps = label_noise_nn(q, model, X, family, stream)
    else:
        raise InvalidInputError(f"unknown noise mode {mode!r}")
    return eps, pred_var, fnorm


def _jacobian_stats(q, model, X, chunk=256):
    """Predictive variances (N, K) and Jacobian Frobenius norms (N,), chunked for memory."""
    var, norms = [], []
    for start in range(0, X.shape[0], chunk):
        J = model.output_jacobian_batch(q.mean, X[start : start + chunk])
        var.append(q.quad_form(J))
        norms.append(np.sqrt((J * J).sum(axis=(1, 2))))
    if not var:
        return np.zeros((0, model.K)), np.zeros(0)
    return np.concatenate(var), np.concatenate(norms)


def noise_dump(kind, *, epoch, model, theta, X, Y, family, ids=None, true_class=None, noisy_class=None,
               posterior=None, alpha=None, ols=None, mode="mc", stream=None, samples=64):
    """Per-example noise records for one probe epoch.

    ``kind`` is ``variational`` (needs ``posterior``), ``ls`` (needs ``alpha``),
    ``ols`` (needs ``alpha`` and the previous-epoch accumulator ``ols``) or
    ``none``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    N = X.shape[0]
    ids = np.arange(N) if ids is None else np.asarray(ids)
    labels_hint = np.argmax(Y, axis=-1) if Y.shape[-1] > 1 else (Y[:, 0] > 0.5).astype(int)
    true_class = labels_hint if true_class is None else np.asarray(true_class)
    noisy_class = labels_hint if noisy_class is None else np.asarray(noisy_class)
    f = model.forward_batch(theta, X)
    link = family.link(f)
    if kind == "variational":
        eps, pred_var, fnorm = variational_noise(posterior, model, X, family, mode, stream, samples)
    else:
        if kind == "ls":
            eps = ls_noise(Y, alpha)
        elif kind == "ols":
            eps = ols_noise(ols, Y, alpha)
        elif kind == "none":
            eps = np.zeros_like(Y)
        else:
            raise InvalidInputError(f"unknown dump kind {kind!r}")
        pred_var = np.zeros_like(Y)
        fnorm = _jacobian_stats(GaussianPosterior(theta), model, X)[1]
    return make_records(epoch, ids, true_class, noisy_class, Y, eps, pred_var, fnorm, link)


def sort_by_norm(records, descending=True) -> list[LabelNoiseRecord]:
    return sorted(records, key=lambda r: (-r.eps_norm if descending else r.eps_norm, r.example_id))
