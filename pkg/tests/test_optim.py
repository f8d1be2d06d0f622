import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import ridge
from vlsmooth.errors import InvalidInputError
from vlsmooth.glm import Bernoulli, targets
from vlsmooth.models import LinearModel
from vlsmooth.noise import label_noise_exact
from vlsmooth.optim import (
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
    ivon_update,
    newton_step,
    sam_step,
    vgd_step,
    von_expectations,
    von_step,
)
from vlsmooth.posterior import GaussianPosterior, Isotropic
from vlsmooth.rng import StreamId


def _logreg(seed, N=20, P=5):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, P))
    y = (rng.random(N) < 0.5).astype(int)
    return X, targets(Bernoulli(), y), rng.standard_normal(P)


def test_schedules():
    assert Constant(0.3)(17.0) == 0.3
    s = StepDecay(1.0, (2, 4), 0.5)
    assert [s(e) for e in (0, 1.9, 2, 3.5, 4, 9)] == [1.0, 1.0, 0.5, 0.5, 0.25, 0.25]
    w = WarmupCosine(1.0, 10, 2)
    assert w(0) == 0.0 and w(1) == 0.5 and w(2) == 1.0
    assert w(6) == pytest.approx(0.5) and w(10) == pytest.approx(0.0, abs=1e-15)


def test_gd_step_by_hand():
    model = LinearModel(1)
    st_ = GdState(np.array([2.0]), lr=0.5)
    out = gd_step(st_, np.array([[1.0]]), np.array([[1.0]]), model, Bernoulli(), weight_decay=1.0)
    # (1 - 0.5) * 2 - 0.5 * (sigma(2) - 1)
    assert out.theta[0] == pytest.approx(1.0 - 0.5 * (1 / (1 + np.exp(-2.0)) - 1.0), abs=1e-15)
    assert out.t == 1 and st_.t == 0


def test_momentum_accumulates():
    model = LinearModel(1)
    X, Y = np.array([[1.0]]), np.array([[0.5]])
    s = GdState(np.array([0.0]), lr=0.1, momentum=0.9)
    s1 = gd_step(s, X, Y, model, Bernoulli(), weight_decay=0.0)
    s2 = gd_step(s1, X, Y, model, Bernoulli(), weight_decay=0.0)
    g0 = 0.0  # sigma(0) - 0.5
    assert s1.velocity[0] == g0
    assert s2.velocity[0] == pytest.approx(0.9 * g0 + (1 / (1 + np.exp(-s1.theta[0])) - 0.5))


@pytest.mark.parametrize("seed", range(10))
def test_vgd_equals_gd_on_noisy_labels(seed):
    X, Y, theta = _logreg(seed)
    model = LinearModel(5)
    eps = label_noise_exact(GaussianPosterior(theta, Isotropic(1.0)), model, X, Bernoulli())
    a = vgd_step(GdState(theta, lr=0.1), X, Y, model, Bernoulli())
    b = gd_step(GdState(theta, lr=0.1), X, Y + eps, model, Bernoulli())
    np.testing.assert_allclose(a.theta, b.theta, atol=1e-12, rtol=0)


@pytest.mark.parametrize("seed", range(5))
def test_von_unit_step_is_newton_with_noisy_labels(seed):
    X, Y, theta = _logreg(seed)
    model = LinearModel(5)
    rng = np.random.default_rng(seed + 100)
    A = rng.standard_normal((5, 5))
    state = VonState(theta, A @ A.T + 5 * np.eye(5), lr=1.0)
    _, hess = von_expectations(state, X, Y, model, Bernoulli())
    eps = label_noise_exact(state.posterior(), model, X, Bernoulli())
    a = von_step(state, X, Y, model, Bernoulli())
    b = newton_step(GdState(theta), X, Y + eps, model, Bernoulli(), hessian=hess)
    np.testing.assert_allclose(a.theta, b.theta, atol=1e-10)
    np.testing.assert_allclose(a.precision, hess, atol=1e-12)


def test_von_step_size_bounds():
    with pytest.raises(InvalidInputError):
        VonState(np.zeros(2), np.eye(2), lr=0.0)
    with pytest.raises(InvalidInputError):
        VonState(np.zeros(2), np.eye(2), lr=1.5)


def test_newton_solves_gaussian_problem_in_one_step(ridge_problem, gaussian_family):
    X, y = ridge_problem
    model = LinearModel(5)
    out = newton_step(GdState(np.zeros(5)), X, y[:, None], model, gaussian_family, prior_precision=3.0)
    np.testing.assert_allclose(out.theta, ridge(X, y, 3.0 / X.shape[0]), rtol=1e-10)


def test_ivon_hyper_validation():
    with pytest.raises(InvalidInputError):
        IvonHyper(weight_decay=0.0)
    with pytest.raises(InvalidInputError):
        IvonHyper(beta1=1.0)
    with pytest.raises(InvalidInputError):
        IvonHyper(beta2=1.1)
    with pytest.raises(InvalidInputError):
        IvonHyper(h0=0.0)


def test_ivon_first_step_by_hand():
    hp = IvonHyper(weight_decay=0.5, beta1=0.9, beta2=0.8, h0=1.5, ess=2.0)
    s = IvonState.init(np.array([1.0]), hp)
    sigma = 1 / np.sqrt(2.0 * (1.5 + 0.5))
    e = StreamId(0, "i").generator().standard_normal(1)[0]
    theta = 1.0 + sigma * e
    out = ivon_update(s, lambda th: 3.0 * th, 0.1, StreamId(0, "i"))
    g_hat = 3.0 * theta
    h_hat = g_hat * (theta - 1.0) / sigma**2
    h = 0.8 * 1.5 + 0.2 * h_hat + 0.5 * 0.04 * (1.5 - h_hat) ** 2 / 2.0
    g = 0.1 * g_hat
    m = 1.0 - 0.1 * (g / 0.1 + 0.5 * 1.0) / (h + 0.5)
    assert out.h[0] == pytest.approx(h, rel=1e-12)
    assert out.m[0] == pytest.approx(m, rel=1e-12)


def test_ivon_frozen_hessian_with_beta2_one():
    hp = IvonHyper(beta2=1.0, ess=100.0)
    s = IvonState.init(np.zeros(3), hp)
    for t in range(20):
        s = ivon_update(s, lambda th: th - 1.0, 0.1, StreamId(0, "f", t))
    assert np.array_equal(s.h, np.full(3, hp.h0))


@given(st.integers(0, 10_000))
def test_ivon_hessian_stays_positive(seed):
    hp = IvonHyper(weight_decay=1e-3, beta2=0.5, ess=10.0)
    s = IvonState.init(np.zeros(4), hp)
    curv = np.array([0.0, 1e-3, 1.0, 50.0])
    for t in range(30):
        s = ivon_update(s, lambda th: curv * th, 0.05, StreamId(seed, "p", t))
        assert np.all(s.h + hp.weight_decay > 0)


def test_ivon_rescaled_lr():
    hp = IvonHyper(rescale_lr=True, h0=1.5, weight_decay=0.5, ess=4.0)
    hp0 = IvonHyper(rescale_lr=False, h0=1.5, weight_decay=0.5, ess=4.0)
    grad = lambda th: th - 2.0  # noqa: E731
    a = ivon_update(IvonState.init(np.ones(2), hp), grad, 0.1, StreamId(1, "r"))
    b = ivon_update(IvonState.init(np.ones(2), hp0), grad, 0.1 * 2.0, StreamId(1, "r"))
    np.testing.assert_allclose(a.m, b.m)


def test_ivon_posterior_is_diagonal():
    hp = IvonHyper(ess=10.0, weight_decay=0.1, h0=0.9)
    q = IvonState.init(np.zeros(3), hp).posterior()
    np.testing.assert_allclose(q.variances(), 1 / (10.0 * 1.0))


def test_ivon_step_uses_minibatch_mean(gaussian_family):
    model = LinearModel(2)
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    Y = np.array([[1.0], [1.0]])
    hp = IvonHyper(ess=2.0)
    s = IvonState.init(np.zeros(2), hp)
    a = ivon_step(s, X, Y, model, gaussian_family, StreamId(0, "m"), 0.1)
    b = ivon_update(s, lambda th: X.T @ (X @ th - Y[:, 0]) / 2, 0.1, StreamId(0, "m"))
    np.testing.assert_allclose(a.m, b.m, atol=1e-15)


def test_sam_by_hand(gaussian_family):
    model = LinearModel(1)
    X, Y = np.array([[1.0]]), np.array([[0.0]])
    s = SamState(np.array([2.0]), rho=0.5, lr=0.1)
    out = sam_step(s, X, Y, model, gaussian_family)
    # gradient theta; ascent point 2 + 0.5 * sign = 2.5; descent 2 - 0.1 * 2.5
    assert out.theta[0] == pytest.approx(1.75)


def test_sam_zero_radius_is_gd(gaussian_family):
    model = LinearModel(2)
    X = np.array([[1.0, 2.0], [0.5, -1.0]])
    Y = np.array([[1.0], [0.0]])
    theta = np.array([0.3, -0.2])
    a = sam_step(SamState(theta, rho=0.0, lr=0.1), X, Y, model, gaussian_family, weight_decay=0.01)
    b = gd_step(GdState(theta, lr=0.1), X, Y, model, gaussian_family, weight_decay=0.01)
    np.testing.assert_allclose(a.theta, b.theta, atol=1e-15)
    with pytest.raises(InvalidInputError):
        SamState(theta, rho=-0.1)


def test_sam_zero_gradient_is_stationary(gaussian_family):
    model = LinearModel(1)
    out = sam_step(SamState(np.array([1.0]), rho=0.3), np.array([[1.0]]), np.array([[1.0]]), model, gaussian_family)
    assert out.theta[0] == 1.0
