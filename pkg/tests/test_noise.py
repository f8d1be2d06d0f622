import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vlsmooth.errors import InvalidInputError, UnsupportedMethodError
from vlsmooth.glm import Bernoulli, Categorical, one_hot, targets
from vlsmooth.models import LinearModel, MlpModel
from vlsmooth.noise import (
    OlsAccumulator,
    label_noise_exact,
    label_noise_mc,
    label_noise_nn,
    label_noise_taylor,
    ls_noise,
    ls_smooth,
    noise_dump,
    ols_accumulate,
    ols_noise,
    ols_smooth,
    sort_by_norm,
    variational_noise,
)
from vlsmooth.posterior import Diagonal, GaussianPosterior, Isotropic, MonteCarlo
from vlsmooth.rng import StreamId


@given(st.integers(2, 12), st.floats(0.01, 0.99))
def test_ls_is_convex_mix_with_uniform(K, alpha):
    y = one_hot(np.arange(K), K)
    s = ls_smooth(y, alpha)
    np.testing.assert_allclose(s.sum(axis=1), 1.0)
    np.testing.assert_allclose(np.diag(s), 1 - alpha + alpha / K)
    np.testing.assert_allclose(s - y, ls_noise(y, alpha), atol=1e-15)


def test_ls_rate_bounds():
    with pytest.raises(InvalidInputError):
        ls_smooth(np.eye(3), 0.0)
    with pytest.raises(InvalidInputError):
        ls_smooth(np.eye(3), 1.0)


def test_ols_accumulator_by_hand():
    acc = OlsAccumulator(3)
    np.testing.assert_allclose(acc.normalized(), 1 / 3)
    acc2 = ols_accumulate(acc, np.array([[0.0, 0.0, 0.0], [np.log(2.0), 0.0, 0.0]]), Categorical(3))
    assert acc.count == 0 and acc2.count == 2
    # softmaxes (1/3,1/3,1/3) and (1/2,1/4,1/4), summed then normalised
    np.testing.assert_allclose(acc2.normalized(), np.array([5 / 6, 7 / 12, 7 / 12]) / 2.0)
    y = one_hot([1], 3)
    np.testing.assert_allclose(ols_smooth(acc2, y, 0.2), y + ols_noise(acc2, y, 0.2))
    with pytest.raises(InvalidInputError):
        acc.add(np.array([[-0.1, 0.6, 0.5]]))


def test_exact_noise_zero_at_zero_logit_and_odd():
    model = LinearModel(2)
    q = GaussianPosterior(np.array([1.0, -1.0]), Isotropic(0.8))
    X = np.array([[1.0, 1.0], [2.0, 0.5], [-2.0, -0.5]])
    eps = label_noise_exact(q, model, X, Bernoulli())
    assert eps[0, 0] == 0.0
    assert eps[1, 0] == -eps[2, 0]


def test_exact_noise_needs_linear_model():
    model = MlpModel((2, 3, 1))
    q = GaussianPosterior(np.zeros(model.P))
    with pytest.raises(UnsupportedMethodError):
        label_noise_exact(q, model, np.zeros((1, 2)), Bernoulli())


def test_mc_noise_converges_to_exact():
    model = LinearModel(2)
    q = GaussianPosterior(np.array([0.5, -1.0]), Diagonal(np.array([0.3, 0.6])))
    X = np.array([[1.0, 0.2], [0.3, -1.5]])
    exact = label_noise_exact(q, model, X, Bernoulli())
    mc = label_noise_mc(q, model, X, Bernoulli(), 200_000, StreamId(3, "mc"))
    np.testing.assert_allclose(mc, exact, atol=3e-3)


def test_categorical_exact_noise_sums_to_zero():
    model = LinearModel(3, K=4)
    q = GaussianPosterior(np.linspace(-1, 1, 12), Isotropic(0.5))
    eps = label_noise_exact(q, model, np.array([[0.2, -0.4, 1.0]]), Categorical(4), MonteCarlo(5000))
    assert eps.sum() == pytest.approx(0.0, abs=1e-12)


def test_taylor_and_nn_forms_agree_for_linear_models():
    model = LinearModel(3)
    q = GaussianPosterior(np.array([0.2, -0.1, 0.4]), Diagonal(np.array([0.1, 0.2, 0.05])))
    X = np.array([[1.0, 2.0, -1.0]])
    e = np.array([[0.3, -1.2, 0.8]])
    nn = label_noise_nn(q, model, X, Bernoulli(), e=e)
    f = X @ q.mean
    s = 1 / (1 + np.exp(-f))
    manual = s * (1 - s) * (X @ (np.sqrt(q.variances()) * e[0]))
    np.testing.assert_allclose(nn[:, 0], manual, atol=1e-15)
    # the Taylor form draws one scalar per output with the predictive std
    pv = float(X[0] ** 2 @ q.variances())
    tay = label_noise_taylor(q, model, X, Bernoulli(), e=np.array([[1.0]]))
    assert tay[0, 0] == pytest.approx(s[0] * (1 - s[0]) * np.sqrt(pv))


def test_nn_noise_shapes_for_mlp():
    model = MlpModel((2, 4, 3))
    theta = model.init_params(StreamId(0, "init"))
    q = GaussianPosterior(theta, Isotropic(0.01))
    eps = label_noise_nn(q, model, np.ones((5, 2)), Categorical(3), stream=StreamId(0, "n"))
    assert eps.shape == (5, 3)
    np.testing.assert_allclose(eps.sum(axis=1), 0.0, atol=1e-14)


def test_records_and_sorting():
    model = LinearModel(1)
    X = np.array([[0.1], [3.0], [-0.2]])
    y = np.array([1, 1, 0])
    Y = targets(Bernoulli(), y)
    q = GaussianPosterior(np.array([1.0]), Isotropic(1.0))
    recs = noise_dump("variational", epoch=4, model=model, theta=q.mean, X=X, Y=Y, family=Bernoulli(), posterior=q,
                      mode="exact")
    assert [r.epoch for r in recs] == [4, 4, 4]
    for r, yy in zip(recs, Y):
        np.testing.assert_allclose(r.smoothed, yy + r.eps)
    ranked = sort_by_norm(recs)
    assert ranked[0].eps_norm >= ranked[-1].eps_norm
    ls = noise_dump("ls", epoch=1, model=model, theta=q.mean, X=X, Y=Y, family=Bernoulli(), alpha=0.2)
    assert ls[0].eps[0] == ls[1].eps[0]
    none = noise_dump("none", epoch=1, model=model, theta=q.mean, X=X, Y=Y, family=Bernoulli())
    assert all(r.eps_norm == 0 for r in none)
    with pytest.raises(InvalidInputError):
        noise_dump("bogus", epoch=1, model=model, theta=q.mean, X=X, Y=Y, family=Bernoulli())


def test_variational_noise_modes():
    model = LinearModel(2)
    q = GaussianPosterior(np.array([0.5, 0.5]), Isotropic(0.2))
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    eps, var, fnorm = variational_noise(q, model, X, Bernoulli(), mode="exact")
    np.testing.assert_allclose(var[:, 0], 0.2)
    np.testing.assert_allclose(fnorm, 1.0)
    with pytest.raises(InvalidInputError):
        variational_noise(q, model, X, Bernoulli(), mode="nope")
