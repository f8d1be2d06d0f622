"""Linear (GLM) predictors and a small MLP with hand-written reverse mode.

Both models take a flat parameter vector ``theta`` and expose logits, the
per-example output Jacobian ``df/dtheta`` (K x P) and per-example loss
gradients.  Batched variants (suffix ``_batch``) operate on an (N, d) input
matrix and are what the training loop uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError
from .rng import as_generator

MAX_HIDDEN_LAYERS = 3
MAX_UNITS = 512


def _as_batch(x, d):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != d:
        raise ShapeError(f"expected inputs with {d} features, got shape {x.shape}")
    return X, single


def _check_theta(theta, P):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (P,):
        raise ShapeError(f"expected parameter vector of length {P}, got {theta.shape}")
    return theta


@dataclass(frozen=True)
class LinearModel:
    """f(x) = Theta phi(x) with Theta a row-major K x d block of theta.

    phi(x) is x itself, or [x, 1] when ``bias`` is set.
    """

    input_dim: int
    K: int = 1
    bias: bool = False
    is_linear = True

    @property
    def d(self) -> int:
        return self.input_dim + int(self.bias)

    @property
    def P(self) -> int:
        return self.K * self.d

    def features(self, X) -> np.ndarray:
        X, single = _as_batch(X, self.input_dim)
        if self.bias:
            X = np.hstack([X, np.ones((X.shape[0], 1))])
        return X[0] if single else X

    def feature_jacobian(self, X) -> np.ndarray:
        """(N, K, P) stack of Jacobians; independent of theta."""
        phi = self.features(X)
        phi = phi[None, :] if phi.ndim == 1 else phi
        N = phi.shape[0]
        J = np.zeros((N, self.K, self.K, self.d))
        for k in range(self.K):
            J[:, k, k, :] = phi
        return J.reshape(N, self.K, self.P)

    def init_params(self, stream=None) -> np.ndarray:
        return np.zeros(self.P)

    def forward(self, theta, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ShapeError("forward takes a single input vector; use forward_batch")
        return self.forward_batch(theta, x[None, :])[0]

    def forward_batch(self, theta, X) -> np.ndarray:
        theta = _check_theta(theta, self.P)
        phi = self.features(X)
        phi = phi[None, :] if phi.ndim == 1 else phi
        return phi @ theta.reshape(self.K, self.d).T

    def output_jacobian(self, theta, x) -> np.ndarray:
        _check_theta(theta, self.P)
        return self.feature_jacobian(np.asarray(x, dtype=float)[None, :])[0]

    def output_jacobian_batch(self, theta, X) -> np.ndarray:
        _check_theta(theta, self.P)
        return self.feature_jacobian(X)

    def per_example_grad(self, theta, x, y, family) -> np.ndarray:
        f = self.forward(theta, x)
        r = family.link(f) - np.atleast_1d(np.asarray(y, dtype=float))
        return np.outer(r, self.features(x)).ravel()

    def per_example_grads(self, theta, X, Y, family) -> np.ndarray:
        phi = self.features(X)
        r = family.link(self.forward_batch(theta, X)) - Y
        return (r[:, :, None] * phi[:, None, :]).reshape(phi.shape[0], self.P)

    def loss_grad(self, theta, X, Y, family, reduction="sum", residual=None) -> np.ndarray:
        """Gradient of the summed (or averaged) data loss."""
        phi = self.features(X)
        r = family.link(self.forward_batch(theta, X)) - Y if residual is None else residual
        g = (r.T @ phi).ravel()
        return g / max(phi.shape[0], 1) if reduction == "mean" else g


_ACTIVATIONS = ("tanh", "relu", "identity")


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(float)
    return np.ones_like(z)


@dataclass(frozen=True)
class MlpModel:
    """Fully connected network [d, h1, ..., K] with a linear output layer.

    Packing order of theta: for each layer, the (out, in) weight matrix in
    row-major order followed by its bias vector.
    """

    sizes: tuple[int, ...]
    activation: str = "tanh"
    is_linear = False

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise InvalidInputError("MLP needs at least input and output sizes")
        hidden = sizes[1:-1]
        if len(hidden) > MAX_HIDDEN_LAYERS or any(h > MAX_UNITS for h in hidden):
            raise InvalidInputError(f"MLP limited to {MAX_HIDDEN_LAYERS} hidden layers of <= {MAX_UNITS} units")
        if self.activation not in _ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def K(self) -> int:
        return self.sizes[-1]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [(o, i) for i, o in zip(self.sizes[:-1], self.sizes[1:])]

    @property
    def P(self) -> int:
        return sum(o * i + o for o, i in self.shapes)

    def unpack(self, theta) -> list[tuple[np.ndarray, np.ndarray]]:
        theta = _check_theta(theta, self.P)
        layers, pos = [], 0
        for o, i in self.shapes:
            W = theta[pos : pos + o * i].reshape(o, i)
            pos += o * i
            b = theta[pos : pos + o]
            pos += o
            layers.append((W, b))
        return layers

    def pack(self, layers) -> np.ndarray:
        parts = []
        for (W, b), (o, i) in zip(layers, self.shapes):
            if np.shape(W) != (o, i) or np.shape(b) != (o,):
                raise ShapeError("layer shapes do not match the architecture")
            parts += [np.ravel(W), np.ravel(b)]
        return np.concatenate(parts).astype(float)

    def init_params(self, stream) -> np.ndarray:
        rng = as_generator(stream)
        layers = [(rng.standard_normal((o, i)) / np.sqrt(i), np.zeros(o)) for o, i in self.shapes]
        return self.pack(layers)

    def _forward_cache(self, theta, X):
        layers = self.unpack(theta)
        acts, pres = [X], []
        a = X
        for idx, (W, b) in enumerate(layers):
            z = a @ W.T + b
            a = z if idx == len(layers) - 1 else _act(self.activation, z)
            pres.append(z)
            acts.append(a)
        return layers, acts, pres

    def forward_batch(self, theta, X) -> np.ndarray:
        X, _ = _as_batch(X, self.input_dim)
        return self._forward_cache(theta, X)[1][-1]

    def forward(self, theta, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ShapeError("forward takes a single input vector; use forward_batch")
        return self.forward_batch(theta, x[None, :])[0]

    def _backward(self, layers, acts, pres, upstream, per_example):
        """Reverse pass for dL/df = upstream (N, K).

        Returns (N, P) per-example gradients or the (P,) sum.
        """
        N = upstream.shape[0]
        delta = upstream
        grads = []
        for idx in range(len(layers) - 1, -1, -1):
            W, _ = layers[idx]
            a_in = acts[idx]
            if per_example:
                gW = (delta[:, :, None] * a_in[:, None, :]).reshape(N, -1)
                grads.append(np.hstack([gW, delta]))
            else:
                grads.append(np.concatenate([(delta.T @ a_in).ravel(), delta.sum(axis=0)]))
            if idx > 0:
                delta = (delta @ W) * _act_grad(self.activation, pres[idx - 1], acts[idx])
        grads.reverse()
        return np.concatenate(grads, axis=-1)

    def output_jacobian_batch(self, theta, X) -> np.ndarray:
        """(N, K, P): one reverse pass per output coordinate."""
        X, _ = _as_batch(X, self.input_dim)
        N, K = X.shape[0], self.K
        Xr = np.repeat(X, K, axis=0)
        layers, acts, pres = self._forward_cache(theta, Xr)
        upstream = np.tile(np.eye(K), (N, 1))
        return self._backward(layers, acts, pres, upstream, per_example=True).reshape(N, K, self.P)

    def output_jacobian(self, theta, x) -> np.ndarray:
        return self.output_jacobian_batch(theta, np.asarray(x, dtype=float)[None, :])[0]

    def per_example_grads(self, theta, X, Y, family) -> np.ndarray:
        X, _ = _as_batch(X, self.input_dim)
        layers, acts, pres = self._forward_cache(theta, X)
        r = family.link(acts[-1]) - Y
        return self._backward(layers, acts, pres, r, per_example=True)

    def per_example_grad(self, theta, x, y, family) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return self.per_example_grads(theta, np.asarray(x, dtype=float)[None, :], y[None, :], family)[0]

    def loss_grad(self, theta, X, Y, family, reduction="sum", residual=None) -> np.ndarray:
        X, _ = _as_batch(X, self.input_dim)
        layers, acts, pres = self._forward_cache(theta, X)
        r = family.link(acts[-1]) - Y if residual is None else residual
        g = self._backward(layers, acts, pres, r, per_example=False)
        return g / max(X.shape[0], 1) if reduction == "mean" else g


def forward(model, theta, x):
    return model.forward(theta, x)


def output_jacobian(model, theta, x):
    return model.output_jacobian(theta, x)


def per_example_grad(model, theta, x, y, family):
    return model.per_example_grad(theta, x, y, family)


def feature_norm(model, theta, x) -> float:
    """Frobenius norm of the output Jacobian at x."""
    return float(np.linalg.norm(model.output_jacobian(theta, x)))


def feature_norms(model, theta, X) -> np.ndarray:
    J = model.output_jacobian_batch(theta, X)
    return np.sqrt((J * J).sum(axis=(1, 2)))
