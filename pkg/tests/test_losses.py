import numpy as np
import pytest
import sympy
from scipy.optimize import minimize_scalar

from dasha_pp.losses import SQUARED_SIGMOID_CURVATURE, SoftmaxNonconvexReg, SquaredSigmoid, make_loss


def central_fd(fun, x, h=1e-6):
    out = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        out[k] = (fun(x + e) - fun(x - e)) / (2 * h)
    return out


def _data(rng, rows=9, d=5):
    return rng.normal(size=(rows, d)), np.where(rng.random(rows) < 0.5, -1.0, 1.0)


@pytest.mark.parametrize("loss", [SquaredSigmoid(), SoftmaxNonconvexReg(0.001), SoftmaxNonconvexReg(0.5)])
def test_gradient_matches_finite_differences(loss, rng):
    A, y = _data(rng)
    for _ in range(10):
        x = rng.normal(size=loss.param_dim(A.shape[1]))
        g = loss.grad(A, y, x)
        fd = central_fd(lambda z: loss.value(A, y, z), x)
        assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(g)


def test_sample_grads_average_to_grad(rng):
    A, y = _data(rng)
    for loss in (SquaredSigmoid(), SoftmaxNonconvexReg(0.1)):
        x = rng.normal(size=loss.param_dim(5))
        np.testing.assert_allclose(loss.sample_grads(A, y, x).mean(axis=0), loss.grad(A, y, x),
                                   rtol=1e-12, atol=1e-15)


def test_squared_sigmoid_gradient_at_zero(rng):
    A, y = _data(rng)
    G = SquaredSigmoid().sample_grads(A, y, np.zeros(5))
    np.testing.assert_allclose(G, -0.25 * y[:, None] * A, rtol=1e-15, atol=0)


def test_softmax_shift_invariance(rng):
    A, y = _data(rng)
    v = rng.normal(size=5)
    g = SoftmaxNonconvexReg(0.0).grad(A, y, np.concatenate([v, v]))
    np.testing.assert_allclose(g[:5] + g[5:], 0.0, atol=1e-15)


def test_softmax_matches_two_class_cross_entropy(rng):
    A, y = _data(rng)
    x = rng.normal(size=10)
    Z = A @ x.reshape(2, -1).T
    cls = (y > 0).astype(int)
    ce = np.log(np.exp(Z).sum(axis=1)) - Z[np.arange(len(y)), cls]
    reg = 0.2 * np.sum(x * x / (1 + x * x))
    assert SoftmaxNonconvexReg(0.2).value(A, y, x) == pytest.approx(ce.mean() + reg, rel=1e-13)


def test_values_finite_for_large_inputs(rng):
    A, y = _data(rng)
    for loss in (SquaredSigmoid(), SoftmaxNonconvexReg()):
        x = 1e6 * rng.normal(size=loss.param_dim(5))
        assert np.all(np.isfinite(loss.values(A, y, x)))
        assert np.all(np.isfinite(loss.grad(A, y, x)))


def test_curvature_constant():
    t = sympy.symbols("t", real=True)
    phi = (1 - 1 / (1 + sympy.exp(-t))) ** 2
    second = sympy.lambdify(t, sympy.diff(phi, t, 2), "numpy")
    grid = np.linspace(-20, 20, 400_001)
    start = grid[np.argmax(np.abs(second(grid)))]
    fine = minimize_scalar(lambda u: -abs(second(u)), bounds=(start - 1e-3, start + 1e-3),
                           method="bounded", options={"xatol": 1e-12})
    assert -fine.fun == pytest.approx(SQUARED_SIGMOID_CURVATURE, rel=1e-10)


def test_make_loss():
    assert isinstance(make_loss("squared_sigmoid"), SquaredSigmoid)
    assert make_loss("softmax", 0.3).lam == 0.3
    with pytest.raises(ValueError):
        make_loss("hinge")
    with pytest.raises(ValueError):
        SoftmaxNonconvexReg(-1.0)
