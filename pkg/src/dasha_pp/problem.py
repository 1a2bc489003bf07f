"""Distributed objectives and their gradient oracles.

Node ``i`` holds ``m`` samples and ``f_i`` is their average loss; the global
objective ``f`` is the average of the ``f_i``. Three oracle families are
exposed: exact node gradients, per-sample gradients, and a stochastic
oracle (uniform sample plus additive Gaussian noise).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh

from dasha_pp.errors import DimensionMismatch, InvalidParameter
from dasha_pp.losses import SquaredSigmoid

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class SmoothnessEstimates:
    L: float
    L_hat: float
    L_max: float
    L_sigma: float
    mu: float = None


@dataclass(frozen=True)
class StochasticDraw:
    """One batch of stochastic samples: data indices plus per-sample noise.

    The same draw can be evaluated at two points, which is what the
    momentum estimators need.
    """

    indices: np.ndarray
    noise: np.ndarray

    @property
    def size(self):
        return len(self.indices)


class Problem:
    def __init__(self, dataset, shards, loss=None, noise_sigma=0.0, dense=None):
        if not shards:
            raise InvalidParameter("need at least one node")
        ms = {s.m for s in shards}
        if len(ms) != 1 or 0 in ms:
            raise InvalidParameter("all shards must hold the same positive number of samples")
        if noise_sigma < 0:
            raise InvalidParameter("noise_sigma must be nonnegative")
        self.dataset = dataset
        self.shards = list(shards)
        self.loss = loss if loss is not None else SquaredSigmoid()
        self.noise_sigma = float(noise_sigma)
        self.n = len(shards)
        self.m = ms.pop()
        self.d = dataset.d
        self.dim = self.loss.param_dim(self.d)
        if dense is None:
            dense = self.d <= DENSE_LIMIT
        self.dense = dense
        order = np.concatenate([s.sample_indices for s in self.shards])
        A = dataset.features[order]
        self._A_all = A.toarray() if dense else A.tocsr()
        self._y_all = dataset.labels[order]
        self._A = [self._A_all[i * self.m:(i + 1) * self.m] for i in range(self.n)]
        self._y = [self._y_all[i * self.m:(i + 1) * self.m] for i in range(self.n)]

    def _check(self, node, x):
        if not 0 <= node < self.n:
            raise InvalidParameter(f"node id {node} out of range [0, {self.n})")
        if x.shape != (self.dim,):
            raise DimensionMismatch(self.dim, x.shape)

    # -- values and exact gradients -------------------------------------------------

    def node_value(self, node, x):
        self._check(node, x)
        return self.loss.value(self._A[node], self._y[node], x)

    def value(self, x):
        return self.loss.value(self._A_all, self._y_all, x)

    def grad_full(self, node, x):
        self._check(node, x)
        return self.loss.grad(self._A[node], self._y[node], x)

    def full_grad(self, x):
        # equal shard sizes make the sample mean equal the mean of node means
        return self.loss.grad(self._A_all, self._y_all, x)

    def grad_sample(self, node, j, x):
        self._check(node, x)
        if not 0 <= j < self.m:
            raise InvalidParameter(f"sample index {j} out of range [0, {self.m})")
        return self.loss.grad(self._A[node][j:j + 1], self._y[node][j:j + 1], x)

    def grad_batch(self, node, indices, x):
        """Mean of per-sample gradients over ``indices`` (repeats allowed)."""
        self._check(node, x)
        indices = np.asarray(indices)
        return self.loss.grad(self._A[node][indices], self._y[node][indices], x)

    def sample_grads(self, node, indices, x):
        """Matrix whose rows are per-sample gradients, one per index."""
        self._check(node, x)
        indices = np.asarray(indices)
        return self.loss.sample_grads(self._A[node][indices], self._y[node][indices], x)

    # -- stochastic oracle ----------------------------------------------------------

    def draw_stochastic(self, batch, rng, exhaustive=False):
        """Draw ``batch`` i.i.d. samples; ``exhaustive`` walks all ``m`` samples once."""
        if batch < 1:
            raise InvalidParameter("batch size must be at least 1")
        if exhaustive:
            if batch != self.m:
                raise InvalidParameter("exhaustive draws need batch == m")
            indices = np.arange(self.m)
        else:
            indices = rng.integers(0, self.m, batch)
        if self.noise_sigma > 0:
            noise = rng.standard_normal((batch, self.dim)) * (self.noise_sigma / np.sqrt(self.dim))
        else:
            noise = np.zeros((batch, self.dim))
        return StochasticDraw(indices, noise)

    def grad_draw(self, node, x, draw):
        return self.grad_batch(node, draw.indices, x) + draw.noise.mean(axis=0)

    def grad_stochastic(self, node, x, batch, rng, exhaustive=False):
        return self.grad_draw(node, x, self.draw_stochastic(batch, rng, exhaustive))

    def sigma_sq(self, x):
        """Variance of the single-sample stochastic gradient at ``x`` (max over nodes)."""
        worst = 0.0
        for i in range(self.n):
            G = self.sample_grads(i, np.arange(self.m), x)
            worst = max(worst, float(np.mean(np.sum((G - G.mean(axis=0)) ** 2, axis=1))))
        return worst + self.noise_sigma ** 2

    # -- smoothness -----------------------------------------------------------------

    def sample_smoothness(self):
        """Per-sample smoothness bounds ``L_ij`` as an ``(n, m)`` array."""
        A = self._A_all
        sq = np.asarray(A.multiply(A).sum(axis=1)).ravel() if sp.issparse(A) else np.einsum("ij,ij->i", A, A)
        L = self.loss.curvature_scale * sq + self.loss.curvature_offset
        return L.reshape(self.n, self.m)

    def estimate_smoothness(self, mu=None):
        L_ij = self.sample_smoothness()
        L_i = L_ij.mean(axis=1)
        L_hat = float(np.sqrt(np.mean(L_i ** 2)))
        L_max = float(L_ij.max())
        L_global = self.loss.curvature_scale * _top_eigenvalue(self._A_all) + self.loss.curvature_offset
        return SmoothnessEstimates(
            L=min(L_hat, float(L_global)), L_hat=L_hat, L_max=L_max, L_sigma=L_max, mu=mu
        )


def _top_eigenvalue(A):
    """Largest eigenvalue of ``A^T A / rows``."""
    rows, d = A.shape
    if d <= 256 and not sp.issparse(A):
        return float(np.linalg.eigvalsh(A.T @ A / rows)[-1])
    op = LinearOperator((d, d), matvec=lambda v: A.T @ (A @ v) / rows, dtype=np.float64)
    return float(eigsh(op, k=1, which="LA", return_eigenvectors=False, tol=1e-10)[0])
