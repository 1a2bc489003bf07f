"""The two nonconvex classification losses used in the experiments.

Both operate on a row block ``A`` (dense ndarray or CSR) with labels ``y`` in
{-1, +1}. ``value``/``grad`` average over the rows of ``A``; ``sample_grads``
returns one gradient per row.
"""

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

# sup_t |d^2/dt^2 (1 - sigmoid(t))^2|, attained at sigmoid(-t) ~= 0.385643
SQUARED_SIGMOID_CURVATURE = 0.15405857012135052


def _rows_dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


class SquaredSigmoid:
    """``(1 - 1 / (1 + exp(y a^T x)))^2``, parameter dimension ``d``."""

    name = "squared_sigmoid"
    curvature_scale = SQUARED_SIGMOID_CURVATURE
    curvature_offset = 0.0

    def param_dim(self, d):
        return d

    def values(self, A, y, x):
        return expit(-y * (A @ x)) ** 2

    def _dloss(self, A, y, x):
        t = y * (A @ x)
        u = expit(-t)
        return -2.0 * u * u * expit(t) * y

    def value(self, A, y, x):
        return float(self.values(A, y, x).mean())

    def grad(self, A, y, x):
        return np.asarray(A.T @ self._dloss(A, y, x)).ravel() / A.shape[0]

    def sample_grads(self, A, y, x):
        return self._dloss(A, y, x)[:, None] * _rows_dense(A)


class SoftmaxNonconvexReg:
    """Two-class cross-entropy plus ``lam * sum_k z_k^2 / (1 + z_k^2)``.

    The parameter is the stacked vector ``(x_1, x_2)`` of length ``2d``;
    label -1 selects class 1 and label +1 class 2.
    """

    name = "softmax"
    curvature_scale = 0.5

    def __init__(self, lam=0.001):
        if lam < 0:
            raise ValueError(f"regularization must be nonnegative, got {lam}")
        self.lam = lam
        # |d^2/dz^2 z^2/(1+z^2)| <= 2, attained at z = 0
        self.curvature_offset = 2.0 * lam

    def param_dim(self, d):
        return 2 * d

    def _margin(self, A, x):
        # with two classes only the score difference z_2 - z_1 matters
        X = x.reshape(2, -1)
        return np.asarray(A @ (X[1] - X[0])).ravel(), X

    @staticmethod
    def _damp(X):
        # 1 / (1 + z^2), which underflows to 0 instead of overflowing for huge z
        with np.errstate(over="ignore"):
            return 1.0 / (1.0 + X * X)

    def _reg(self, X):
        with np.errstate(over="ignore", invalid="ignore"):
            sq = X * X
            frac = np.where(np.isinf(sq), 1.0, sq * self._damp(X))
        return self.lam * float(np.sum(frac))

    def _reg_grad(self, X):
        r = self._damp(X)
        return self.lam * 2.0 * X * r * r

    def values(self, A, y, x):
        s, X = self._margin(A, x)
        return np.logaddexp(0.0, -y * s) + self._reg(X)

    def value(self, A, y, x):
        return float(self.values(A, y, x).mean())

    def _residual(self, A, y, x):
        s, X = self._margin(A, x)
        return expit(s) - (y > 0), X

    def grad(self, A, y, x):
        r, X = self._residual(A, y, x)
        v = np.asarray(A.T @ r).ravel() / A.shape[0]
        return np.concatenate([-v, v]) + self._reg_grad(X).ravel()

    def sample_grads(self, A, y, x):
        r, X = self._residual(A, y, x)
        G = r[:, None] * _rows_dense(A)
        return np.hstack([-G, G]) + self._reg_grad(X).ravel()[None]


def make_loss(name, lam=0.001):
    if name == SquaredSigmoid.name:
        return SquaredSigmoid()
    if name == SoftmaxNonconvexReg.name:
        return SoftmaxNonconvexReg(lam)
    raise ValueError(f"unknown loss {name!r}")
