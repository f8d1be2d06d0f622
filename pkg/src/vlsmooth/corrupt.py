"""Synthetic label corruption through class transition matrices.

Row ``i`` of a transition matrix is the distribution of the observed label
given true class ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .rng import as_generator

ROW_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 2:
            raise InvalidInputError("transition matrix must be K x K with K >= 2")
        if np.any(P < 0) or np.any(P > 1):
            raise InvalidInputError("transition probabilities must lie in [0, 1]")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > ROW_TOL:
            raise InvalidInputError("transition matrix rows must sum to 1")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def K(self) -> int:
        return self.P.shape[0]


def symmetric_matrix(K: int, rate: float) -> TransitionMatrix:
    """Keep the label with prob 1 - rate, else move it uniformly to another class."""
    if K < 2:
        raise InvalidInputError("need K >= 2")
    if not 0 <= rate < 1:
        raise InvalidInputError(f"symmetric rate must lie in [0, 1), got {rate}")
    P = np.full((K, K), rate / (K - 1))
    np.fill_diagonal(P, 1.0 - rate)
    return TransitionMatrix(P)


def pairflip_matrix(K: int, rate: float, order=None) -> TransitionMatrix:
    """Move the label to its successor in the cyclic ``order`` with prob ``rate``.

    ``order`` lists the classes along the cycle; the default is 0 -> 1 -> ... -> K-1 -> 0.
    """
    if K < 2:
        raise InvalidInputError("need K >= 2")
    if not 0 <= rate < 1:
        raise InvalidInputError(f"pair-flip rate must lie in [0, 1), got {rate}")
    order = np.arange(K) if order is None else np.asarray(order, dtype=int)
    if order.shape != (K,) or sorted(order.tolist()) != list(range(K)):
        raise InvalidInputError("pair-flip order must be a permutation of 0..K-1")
    P = np.zeros((K, K))
    for pos, cls in enumerate(order):
        P[cls, cls] = 1.0 - rate
        P[cls, order[(pos + 1) % K]] += rate
    return TransitionMatrix(P)


def datadep_matrix(K: int, kappa: float, beta: float, allow_degenerate=False) -> TransitionMatrix:
    """Class-dependent symmetric noise with flip rate kappa + beta * i for class i = 1..K.

    Classes are stored 0-based, so row r uses i = r + 1.
    """
    if K < 2:
        raise InvalidInputError("need K >= 2")
    rates = kappa + beta * np.arange(1, K + 1)
    if np.any(rates < 0):
        raise InvalidInputError("flip rates must be non-negative")
    worst = kappa + beta * K
    if worst > 1 + ROW_TOL or (worst >= 1 - ROW_TOL and not allow_degenerate):
        raise InvalidInputError(f"kappa + beta*K = {worst:g} leaves no mass on the diagonal")
    rates = np.minimum(rates, 1.0)
    P = np.repeat((rates / (K - 1))[:, None], K, axis=1)
    np.fill_diagonal(P, 1.0 - rates)
    return TransitionMatrix(P)


def apply_corruption(labels, T: TransitionMatrix, stream):
    """Resample each label from its row of T; returns (noisy labels, flip mask)."""
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 0 or labels.max() >= T.K):
        raise InvalidInputError(f"labels must lie in [0, {T.K})")
    u = as_generator(stream).random(labels.shape[0])
    cdf = np.cumsum(T.P, axis=1)
    cdf[cdf > 1.0 - ROW_TOL] = 1.0
    noisy = (u[:, None] >= cdf[labels]).sum(axis=1)
    return noisy, noisy != labels


def empirical_transition(clean, noisy, K: int):
    """Row-normalised co-occurrence counts and a mask of rows with no support."""
    clean = np.asarray(clean, dtype=int)
    noisy = np.asarray(noisy, dtype=int)
    if clean.shape != noisy.shape:
        raise InvalidInputError("clean and noisy label arrays differ in length")
    counts = np.zeros((K, K))
    np.add.at(counts, (clean, noisy), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    empty = totals[:, 0] == 0
    out = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / K)
    return out, empty
