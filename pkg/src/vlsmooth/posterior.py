"""Gaussian posteriors over parameters and expectations under them.

The posterior ``q = N(mean, Sigma)`` is stored with one of three covariance
representations.  Pushing ``q`` through a linear map (features or a model
Jacobian) gives Gaussian logits whose moments are :class:`PredictiveMoments`;
:func:`expected_link` then integrates the link function against them, either
with Gauss-Hermite quadrature (binary) or Monte Carlo (any family).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .errors import InvalidInputError, NumericalError, ShapeError, UnsupportedMethodError
from .glm import Bernoulli, Categorical
from .rng import StreamId, as_generator

CHOLESKY_JITTER = 1e-10
CHOLESKY_RETRIES = 3


@dataclass(frozen=True)
class Isotropic:
    s2: float

    def __post_init__(self):
        if not self.s2 > 0:
            raise InvalidInputError(f"isotropic variance must be positive, got {self.s2}")


@dataclass(frozen=True, eq=False)
class Diagonal:
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.ndim != 1 or not np.all(v > 0):
            raise InvalidInputError("diagonal covariance must be a positive vector")
        object.__setattr__(self, "v", v)


@dataclass(frozen=True, eq=False)
class Full:
    S: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise InvalidInputError("full covariance must be a square matrix")
        if np.max(np.abs(S - S.T), initial=0.0) > 1e-10:
            raise InvalidInputError("full covariance is not symmetric")
        object.__setattr__(self, "S", S)

    @cached_property
    def cholesky(self) -> np.ndarray:
        return cholesky_jittered(self.S)


def cholesky_jittered(S: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, adding 1e-10 jitter to the diagonal at most 3 times."""
    eye = np.eye(S.shape[0])
    for attempt in range(CHOLESKY_RETRIES + 1):
        try:
            return np.linalg.cholesky(S + attempt * CHOLESKY_JITTER * eye)
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("covariance is not positive definite (Cholesky failed after jitter)")


@dataclass(frozen=True, eq=False)
class GaussianPosterior:
    mean: np.ndarray
    cov: Isotropic | Diagonal | Full = field(default_factory=lambda: Isotropic(1.0))

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        if mean.ndim != 1:
            raise ShapeError("posterior mean must be a vector")
        object.__setattr__(self, "mean", mean)
        cov = self.cov
        if isinstance(cov, Diagonal) and cov.v.shape != mean.shape:
            raise ShapeError("diagonal covariance length differs from mean")
        if isinstance(cov, Full):
            if cov.S.shape[0] != mean.shape[0]:
                raise ShapeError("full covariance size differs from mean")
            cov.cholesky  # noqa: B018 - validates positive definiteness eagerly

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def covariance_matrix(self) -> np.ndarray:
        if isinstance(self.cov, Isotropic):
            return self.cov.s2 * np.eye(self.dim)
        if isinstance(self.cov, Diagonal):
            return np.diag(self.cov.v)
        return self.cov.S

    def variances(self) -> np.ndarray:
        if isinstance(self.cov, Isotropic):
            return np.full(self.dim, self.cov.s2)
        if isinstance(self.cov, Diagonal):
            return self.cov.v
        return np.diag(self.cov.S).copy()

    def scale(self, e: np.ndarray) -> np.ndarray:
        """Map standard-normal draws e (..., P) to Sigma^{1/2} e."""
        if isinstance(self.cov, Isotropic):
            return np.sqrt(self.cov.s2) * e
        if isinstance(self.cov, Diagonal):
            return np.sqrt(self.cov.v) * e
        return e @ self.cov.cholesky.T

    def logdet(self) -> float:
        if isinstance(self.cov, Isotropic):
            return self.dim * np.log(self.cov.s2)
        if isinstance(self.cov, Diagonal):
            return float(np.log(self.cov.v).sum())
        return 2.0 * float(np.log(np.diag(self.cov.cholesky)).sum())

    def quad_form(self, F: np.ndarray) -> np.ndarray:
        """diag(F Sigma F^T) over the trailing parameter axis of F."""
        if isinstance(self.cov, Isotropic):
            return self.cov.s2 * np.einsum("...p,...p->...", F, F)
        if isinstance(self.cov, Diagonal):
            return np.einsum("...p,p,...p->...", F, self.cov.v, F)
        FL = F @ self.cov.cholesky
        return np.einsum("...p,...p->...", FL, FL)


@dataclass(frozen=True, eq=False)
class PredictiveMoments:
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        var = np.asarray(self.variance, dtype=float)
        if mean.shape != var.shape:
            raise ShapeError("moment mean and variance shapes differ")
        if np.any(var < 0):
            raise InvalidInputError("predictive variance must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)


@dataclass(frozen=True)
class GaussHermite:
    nodes: int = 64

    def __post_init__(self):
        if not 2 <= self.nodes <= 256:
            raise InvalidInputError("Gauss-Hermite nodes must lie in [2, 256]")


@dataclass(frozen=True)
class MonteCarlo:
    samples: int
    stream: StreamId = StreamId(0, "mc")

    def __post_init__(self):
        if self.samples < 1:
            raise InvalidInputError("Monte Carlo needs at least one sample")


ExpectationMethod = GaussHermite | MonteCarlo


@lru_cache(maxsize=None)
def standard_normal_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes z and weights w with sum(w * g(z)) ~= E[g(Z)], Z ~ N(0, 1).

    Nodes are exactly antisymmetric (z[k] == -z[n-1-k]) and weights exactly
    symmetric, so odd integrands vanish bit-for-bit.
    """
    x, w = np.polynomial.hermite.hermgauss(n)
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    w = w / w.sum()
    z = np.sqrt(2.0) * x
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


def _paired_tanh_mean(mean, std, n):
    """E[tanh((mean + std Z) / 2)] by symmetric quadrature, summed in +/- node pairs.

    Each pair tanh((m+b)/2) + tanh((m-b)/2) flips sign exactly under m -> -m,
    which makes the result an exactly odd function of the mean.
    """
    z, w = standard_normal_rule(n)
    half = n // 2
    b = np.multiply.outer(std, -z[:half])  # -z[:half] > 0
    m = mean[..., None]
    pairs = np.tanh((m + b) / 2.0) + np.tanh((m - b) / 2.0)
    total = (pairs * w[:half]).sum(axis=-1)
    if n % 2:
        total = total + w[half] * np.tanh(mean / 2.0)
    return total


def sample(q: GaussianPosterior, n: int, stream) -> np.ndarray:
    """n i.i.d. draws from q as an (n, P) array."""
    e = as_generator(stream).standard_normal((n, q.dim))
    return q.mean + q.scale(e)


def predictive_moments(q: GaussianPosterior, features) -> PredictiveMoments:
    """Moments of the logits F theta for theta ~ q.

    ``features`` is a P-vector (one output), a K x P Jacobian, or any stack
    (..., K, P) of those.
    """
    F = np.asarray(features, dtype=float)
    if F.ndim == 1:
        F = F[None, :]
    if F.shape[-1] != q.dim:
        raise ShapeError(f"features have {F.shape[-1]} columns, posterior has {q.dim}")
    return PredictiveMoments(F @ q.mean, q.quad_form(F))


def _logit_draws(moments, method):
    rng = as_generator(method.stream)
    e = rng.standard_normal((method.samples,) + moments.mean.shape)
    return moments.mean + np.sqrt(moments.variance) * e


def expected_link(moments: PredictiveMoments, family, method=GaussHermite()) -> np.ndarray:
    """E[A'(f)] for f ~ N(moments), coordinatewise independent across outputs."""
    if isinstance(family, Bernoulli):
        if isinstance(method, GaussHermite):
            t = _paired_tanh_mean(moments.mean, np.sqrt(moments.variance), method.nodes)
            return 0.5 + 0.5 * t
        return expit(_logit_draws(moments, method)).mean(axis=0)
    if isinstance(method, GaussHermite):
        raise UnsupportedMethodError("Gauss-Hermite is only available for binary outputs; use MonteCarlo")
    return softmax(_logit_draws(moments, method), axis=-1).mean(axis=0)


def expected_link_jacobian(moments: PredictiveMoments, family, method=GaussHermite()) -> np.ndarray:
    """E[A''(f)] as a (..., K, K) array; the Hessian of the log-partition."""
    if isinstance(family, Bernoulli):
        if isinstance(method, GaussHermite):
            z, w = standard_normal_rule(method.nodes)
            f = moments.mean[..., None] + np.sqrt(moments.variance)[..., None] * z
            d = expit(f) * expit(-f)
            return (d @ w)[..., None]
        f = _logit_draws(moments, method)
        return (expit(f) * expit(-f)).mean(axis=0)[..., None]
    if isinstance(method, GaussHermite):
        raise UnsupportedMethodError("Gauss-Hermite is only available for binary outputs; use MonteCarlo")
    p = softmax(_logit_draws(moments, method), axis=-1)
    jac = -np.einsum("s...i,s...j->...ij", p, p) / p.shape[0]
    idx = np.arange(family.K)
    jac[..., idx, idx] += p.mean(axis=0)
    return jac


def expected_log_partition(moments: PredictiveMoments, family, method=GaussHermite()) -> np.ndarray:
    """E[A(f)] per example (trailing K axis reduced)."""
    if isinstance(family, Bernoulli):
        if isinstance(method, GaussHermite):
            z, w = standard_normal_rule(method.nodes)
            f = moments.mean[..., None] + np.sqrt(moments.variance)[..., None] * z
            return (np.logaddexp(0.0, f) @ w).sum(axis=-1)
        return np.logaddexp(0.0, _logit_draws(moments, method)).sum(axis=-1).mean(axis=0)
    if isinstance(method, GaussHermite):
        raise UnsupportedMethodError("Gauss-Hermite is only available for binary outputs; use MonteCarlo")
    return logsumexp(_logit_draws(moments, method), axis=-1).mean(axis=0)


def bernoulli_noise_gh(mean, variance, nodes: int = 64) -> np.ndarray:
    """sigma(m) - E[sigma(m + sqrt(v) Z)] computed in tanh form.

    Exactly odd in ``m`` and exactly zero at ``m == 0`` or ``v == 0``.
    """
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    t = _paired_tanh_mean(mean, np.sqrt(variance), nodes)
    eps = 0.5 * (np.tanh(mean / 2.0) - t)
    return np.where(variance == 0, 0.0, eps)


def kl_gaussian(q: GaussianPosterior, prior_precision: float = 1.0) -> float:
    """KL(q || N(0, I / prior_precision)) in closed form."""
    if not prior_precision > 0:
        raise InvalidInputError("prior precision must be positive")
    lam = prior_precision
    P = q.dim
    trace = float(q.variances().sum())
    return 0.5 * (lam * trace + lam * float(q.mean @ q.mean) - P - P * np.log(lam) - q.logdet())


def variational_objective(q, X, Y, model, family, method=GaussHermite(), prior_precision=1.0) -> float:
    """Sum of expected per-example losses under q plus KL(q || prior).

    Linear models use exact logit moments; other models average the loss over
    parameter draws from ``method`` (which must then be Monte Carlo).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    kl = kl_gaussian(q, prior_precision)
    if X.shape[0] == 0:
        return kl
    if getattr(model, "is_linear", False):
        moments = predictive_moments(q, model.feature_jacobian(X))
        data = expected_log_partition(moments, family, method) - (Y * moments.mean).sum(axis=-1)
        return float(data.sum()) + kl
    if not isinstance(method, MonteCarlo):
        raise UnsupportedMethodError("non-linear models need a MonteCarlo expectation")
    thetas = sample(q, method.samples, method.stream)
    total = 0.0
    for theta in thetas:
        f = model.forward_batch(theta, X)
        total += float((family.log_partition(f) - (Y * f).sum(axis=-1)).sum())
    return total / method.samples + kl
