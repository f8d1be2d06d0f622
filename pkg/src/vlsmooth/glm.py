"""Exponential-family losses for binary and multiclass classification.

A family is described by its log-partition ``A(f)``.  The loss of a (soft)
label ``y`` at logits ``f`` is ``-y.f + A(f)``; the link ``A'(f)`` is the
sigmoid or softmax.  All functions act on the trailing axis of ``f`` so they
vectorise over examples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax, logsumexp, softmax

from .errors import InvalidInputError


def _logits(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        f = f[None]
    if np.isnan(f).any():
        raise InvalidInputError("logits contain NaN")
    return f


@dataclass(frozen=True)
class Bernoulli:
    """Binary labels in {0, 1} with a single logit (K = 1)."""

    @property
    def K(self) -> int:
        return 1

    def log_partition(self, f):
        f = _logits(f)
        return np.logaddexp(0.0, f).sum(axis=-1)

    def link(self, f):
        return expit(_logits(f))

    def link_derivative(self, f):
        f = _logits(f)
        return expit(f) * expit(-f)

    def link_jacobian(self, f):
        return self.link_derivative(f)[..., None]

    def link_second_derivative(self, f):
        f = _logits(f)
        s = expit(f)
        return s * expit(-f) * (1.0 - 2.0 * s)


@dataclass(frozen=True)
class Categorical:
    K: int

    def __post_init__(self):
        if self.K < 2:
            raise InvalidInputError(f"Categorical needs K >= 2, got {self.K}")

    def _check(self, f):
        f = _logits(f)
        if f.shape[-1] != self.K:
            raise InvalidInputError(f"expected {self.K} logits, got {f.shape[-1]}")
        return f

    def log_partition(self, f):
        return logsumexp(self._check(f), axis=-1)

    def link(self, f):
        return softmax(self._check(f), axis=-1)

    def link_derivative(self, f):
        """Diagonal of the softmax Jacobian, p(1 - p)."""
        p = self.link(f)
        return p * (1.0 - p)

    def link_jacobian(self, f):
        p = self.link(f)
        jac = -p[..., :, None] * p[..., None, :]
        idx = np.arange(self.K)
        jac[..., idx, idx] += p
        return jac

    def log_link(self, f):
        return log_softmax(self._check(f), axis=-1)


Family = Bernoulli | Categorical


def _labels(family, y, f):
    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        y = y[None]
    if y.shape != f.shape:
        raise InvalidInputError(
            f"label shape {y.shape} does not match logits {f.shape} for {type(family).__name__}"
        )
    if np.isnan(y).any():
        raise InvalidInputError("labels contain NaN")
    return y


def log_partition(family, f):
    return family.log_partition(f)


def link(family, f):
    return family.link(f)


def link_derivative(family, f):
    return family.link_derivative(f)


def link_jacobian(family, f):
    return family.link_jacobian(f)


def loss(family, y, f):
    f = _logits(f)
    y = _labels(family, y, f)
    return family.log_partition(f) - (y * f).sum(axis=-1)


def loss_grad_f(family, y, f):
    f = _logits(f)
    y = _labels(family, y, f)
    return family.link(f) - y


def targets(family, labels) -> np.ndarray:
    """Class ids to the (N, K) target layout the losses expect."""
    labels = np.asarray(labels)
    if isinstance(family, Bernoulli):
        if not np.isin(labels, (0, 1)).all():
            raise InvalidInputError("Bernoulli labels must be 0 or 1")
        return labels.astype(float)[:, None]
    return one_hot(labels, family.K)


def one_hot(labels, K: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise InvalidInputError(f"labels must lie in [0, {K})")
    out = np.zeros((labels.shape[0], K))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def predict_class(family, f) -> np.ndarray:
    f = _logits(f)
    if isinstance(family, Bernoulli):
        return (f[..., 0] > 0).astype(int)
    return np.argmax(f, axis=-1)
