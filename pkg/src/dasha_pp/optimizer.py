"""DASHA-PP: compressed, variance-reduced optimization under partial participation.

One :class:`DashaPP` engine runs every variant. Each round the server moves
``x``, samples the participating nodes, and every participating node
computes its increment ``k_i`` with the variant's subroutine, updates its
estimator ``h_i``, and sends the compressed correction ``m_i``. Nodes that
sit out keep their state untouched and send nothing.

Random decisions come from :func:`dasha_pp.rng.stream`, keyed by round and
node, so processing order never changes a result.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from dasha_pp.compressors import SparseMessage
from dasha_pp.errors import DivergenceError, InvalidHorizon, InvalidParameter
from dasha_pp.rng import bernoulli, partial_shuffle, stream

logger = logging.getLogger(__name__)

FINITE_MVR_MEMORY_WARN = 50_000_000


@dataclass(frozen=True)
class Gradient:
    name = "gradient"


@dataclass(frozen=True)
class Page:
    p_page: float
    batch: int = 1
    name = "page"

    def __post_init__(self):
        if not 0 < self.p_page <= 1:
            raise InvalidParameter("p_page must lie in (0, 1]")
        if self.batch < 1:
            raise InvalidParameter("batch size must be at least 1")


@dataclass(frozen=True)
class FiniteMVR:
    batch: int = 1
    name = "finite_mvr"

    def __post_init__(self):
        if self.batch < 1:
            raise InvalidParameter("batch size must be at least 1")


@dataclass(frozen=True)
class MVR:
    batch: int = 1
    batch_init: int = None
    exhaustive: bool = False
    name = "mvr"

    def __post_init__(self):
        if self.batch < 1 or (self.batch_init is not None and self.batch_init < 1):
            raise InvalidParameter("batch sizes must be at least 1")


@dataclass(frozen=True)
class SyncMVR:
    p_mega: float
    batch: int = 1
    batch_mega: int = 1
    batch_init: int = None
    exhaustive: bool = False
    name = "sync_mvr"

    def __post_init__(self):
        if not 0 < self.p_mega <= 1:
            raise InvalidParameter("p_mega must lie in (0, 1]")
        if self.batch < 1:
            raise InvalidParameter("batch size must be at least 1")
        if self.batch_mega < self.batch:
            raise InvalidParameter("mega batch B' must be at least B")


@dataclass(frozen=True)
class DashaConfig:
    variant: object
    gamma: float
    a: float
    b: float

    def __post_init__(self):
        if not self.gamma >= 0:
            raise InvalidParameter("step size must be nonnegative")
        if not 0 < self.a <= 1:
            raise InvalidParameter("momentum a must lie in (0, 1]")
        if not 0 <= self.b <= 1:
            raise InvalidParameter("momentum b must lie in [0, 1]")


@dataclass
class OptimizerState:
    x: np.ndarray
    g: np.ndarray
    g_nodes: np.ndarray
    h_nodes: np.ndarray
    h_samples: np.ndarray = None
    round: int = 0
    mask: np.ndarray = None
    coords_sent: np.ndarray = None

    def copy(self):
        return OptimizerState(
            x=self.x.copy(), g=self.g.copy(), g_nodes=self.g_nodes.copy(),
            h_nodes=self.h_nodes.copy(),
            h_samples=None if self.h_samples is None else self.h_samples.copy(),
            round=self.round,
            mask=None if self.mask is None else self.mask.copy(),
            coords_sent=None if self.coords_sent is None else self.coords_sent.copy(),
        )


@dataclass
class RunRecord:
    t: np.ndarray
    f: np.ndarray
    grad_norm_sq: np.ndarray
    coords_sent_cum: np.ndarray
    participants: np.ndarray
    x_hat: np.ndarray
    x_hat_index: int
    state: OptimizerState
    coords_per_node: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.t)

    @property
    def delta0_f(self):
        return float(self.f[0])

    def rows(self):
        return list(zip(self.t.tolist(), self.f.tolist(), self.grad_norm_sq.tolist(),
                        self.coords_sent_cum.tolist(), self.participants.tolist()))


# -- k subroutines -----------------------------------------------------------------

def compute_k_gradient(problem, node, x_new, x_old, h_i, b):
    grad_new = problem.grad_full(node, x_new)
    grad_old = problem.grad_full(node, x_old)
    return grad_new - grad_old - b * (h_i - grad_old)


def compute_k_page(problem, node, x_new, x_old, h_i, b, p_page, batch, heads, rng):
    """``heads`` is the round's shared coin, identical on all participating nodes."""
    if heads:
        grad_old = problem.grad_full(node, x_old)
        return problem.grad_full(node, x_new) - grad_old - (b / p_page) * (h_i - grad_old)
    idx = rng.integers(0, problem.m, batch)
    return problem.grad_batch(node, idx, x_new) - problem.grad_batch(node, idx, x_old)


def compute_k_finite_mvr(problem, node, x_new, x_old, h_rows, b, batch, p_a, rng):
    """Return ``(k_i, h_rows_new)``; only the ``batch`` sampled rows change."""
    m = problem.m
    if batch > m:
        raise InvalidParameter(f"batch {batch} exceeds local sample count {m}")
    idx = partial_shuffle(rng, m, batch)
    G_new = problem.sample_grads(node, idx, x_new)
    G_old = problem.sample_grads(node, idx, x_old)
    k_rows = (m / batch) * (G_new - G_old - b * (h_rows[idx] - G_old))
    h_rows = h_rows.copy()
    h_rows[idx] += k_rows / p_a
    return k_rows.sum(axis=0) / m, h_rows


def compute_k_mvr(problem, node, x_new, x_old, h_i, b, batch, rng, exhaustive=False):
    draw = problem.draw_stochastic(batch, rng, exhaustive)
    grad_old = problem.grad_draw(node, x_old, draw)
    return problem.grad_draw(node, x_new, draw) - grad_old - b * (h_i - grad_old)


# -- engine ------------------------------------------------------------------------

class DashaPP:
    def __init__(self, problem, compressors, participation, config, seed=0):
        if not isinstance(compressors, (list, tuple)):
            compressors = [compressors] * problem.n
        if len(compressors) != problem.n:
            raise InvalidParameter("need one compressor per node")
        if participation.n != problem.n:
            raise InvalidParameter("participation scheme and problem disagree on n")
        for c in compressors:
            if c.d != problem.dim:
                raise InvalidParameter(f"compressor dimension {c.d} != problem dimension {problem.dim}")
        self.problem = problem
        self.compressors = list(compressors)
        self.participation = participation
        self.config = config
        self.seed = seed
        self.p_a, self.p_aa = participation.moments()
        variant = config.variant
        if isinstance(variant, FiniteMVR) and variant.batch > problem.m:
            raise InvalidParameter("FINITE-MVR batch exceeds m")
        if isinstance(variant, FiniteMVR) and problem.n * problem.m * problem.dim > FINITE_MVR_MEMORY_WARN:
            logger.warning("FINITE-MVR stores n*m*d = %d floats for h_ij",
                           problem.n * problem.m * problem.dim)

    # each variant has its own initialization of h_i
    def init_state(self, x0=None):
        p = self.problem
        x0 = np.zeros(p.dim) if x0 is None else np.array(x0, dtype=np.float64)
        variant = self.config.variant
        h_samples = None
        if isinstance(variant, (MVR, SyncMVR)):
            batch_init = variant.batch_init or variant.batch
            h = np.empty((p.n, p.dim))
            for i in range(p.n):
                draw = p.draw_stochastic(batch_init, stream(self.seed, "init", 0, i),
                                         exhaustive=variant.exhaustive and batch_init == p.m)
                h[i] = p.grad_draw(i, x0, draw)
        else:
            h = np.stack([p.grad_full(i, x0) for i in range(p.n)])
            if isinstance(variant, FiniteMVR):
                h_samples = np.stack([p.sample_grads(i, np.arange(p.m), x0) for i in range(p.n)])
        return OptimizerState(
            x=x0, g=h.mean(axis=0), g_nodes=h.copy(), h_nodes=h, h_samples=h_samples, round=0,
        )

    def _node_update(self, state, i, x_new, x_old, t, heads):
        """Return the message of node ``i`` and update its local state in place."""
        p, cfg, variant = self.problem, self.config, self.config.variant
        p_a, a, b = self.p_a, cfg.a, cfg.b
        rng = stream(self.seed, "batch", t, i)
        h_old = state.h_nodes[i].copy()
        compress = True
        if isinstance(variant, Gradient):
            k = compute_k_gradient(p, i, x_new, x_old, h_old, b)
        elif isinstance(variant, Page):
            k = compute_k_page(p, i, x_new, x_old, h_old, b, variant.p_page, variant.batch, heads, rng)
        elif isinstance(variant, FiniteMVR):
            k, state.h_samples[i] = compute_k_finite_mvr(
                p, i, x_new, x_old, state.h_samples[i], b, variant.batch, p_a, rng)
        elif isinstance(variant, MVR):
            k = compute_k_mvr(p, i, x_new, x_old, h_old, b, variant.batch, rng, variant.exhaustive)
        elif isinstance(variant, SyncMVR):
            if heads:
                k = compute_k_mvr(p, i, x_new, x_old, h_old, b / variant.p_mega, variant.batch_mega,
                                  rng, variant.exhaustive)
                compress = False
            else:
                k = compute_k_mvr(p, i, x_new, x_old, h_old, 0.0, variant.batch, rng, variant.exhaustive)
        else:
            raise InvalidParameter(f"unknown variant {variant!r}")
        state.h_nodes[i] = h_old + k / p_a
        # the correction uses h_i^t, the value before this round's update
        arg = k / p_a - (a / p_a) * (state.g_nodes[i] - h_old)
        if compress:
            msg = self.compressors[i].compress(arg, stream(self.seed, "compressor", t, i))
        else:
            msg = SparseMessage.dense(arg)
        msg.add_to(state.g_nodes[i])
        return msg

    def step(self, state, mask=None):
        """Advance one communication round, mutating and returning ``state``.

        ``mask`` forces the set of participating nodes instead of sampling it.
        """
        p, variant = self.problem, self.config.variant
        t = state.round
        x_old = state.x
        x_new = x_old - self.config.gamma * state.g
        if mask is None:
            mask = self.participation.sample_round(stream(self.seed, "participation", t))
        mask = np.asarray(mask, dtype=bool)
        heads = False
        if isinstance(variant, Page):
            heads = bernoulli(stream(self.seed, "page_coin", t), variant.p_page)
        elif isinstance(variant, SyncMVR):
            heads = bernoulli(stream(self.seed, "mega_coin", t), variant.p_mega)
        coords = np.zeros(p.n, dtype=np.int64)
        total = np.zeros(p.dim)
        for i in np.flatnonzero(mask):
            msg = self._node_update(state, i, x_new, x_old, t, heads)
            coords[i] = msg.nnz
            msg.add_to(total)
        state.g = state.g + total / p.n
        state.x = x_new
        state.mask = mask
        state.coords_sent = coords
        state.round = t + 1
        self._check_finite(state, mask, t)
        return state

    def _check_finite(self, state, mask, t):
        if not np.all(np.isfinite(state.x)):
            raise DivergenceError(t, "x")
        if not np.all(np.isfinite(state.g)):
            raise DivergenceError(t, "g")
        if mask.any():
            if not np.all(np.isfinite(state.g_nodes[mask])):
                raise DivergenceError(t, "g_i")
            if not np.all(np.isfinite(state.h_nodes[mask])):
                raise DivergenceError(t, "h_i")

    def run(self, T, x0=None, stop_at=None):
        """Run ``T`` rounds and return a :class:`RunRecord`.

        Row ``t`` holds ``f(x^t)`` and ``||grad f(x^t)||^2`` (exact, computed
        outside the algorithm) plus the communication of round ``t``. With
        ``stop_at`` the run ends at the first row whose squared gradient norm
        is at most ``stop_at``.
        """
        if T < 1:
            raise InvalidHorizon(f"number of rounds must be at least 1, got {T}")
        p = self.problem
        out_rng_index = int(stream(self.seed, "output").integers(T))
        state = self.init_state(x0)
        f_vals, gn, coords_cum, parts = [], [], [], []
        per_node = np.zeros(p.n, dtype=np.int64)
        visited = [] if stop_at is not None else None
        x_hat = None
        for t in range(T):
            if visited is not None:
                visited.append(state.x.copy())
            elif t == out_rng_index:
                x_hat = state.x.copy()
            grad = p.full_grad(state.x)
            f_vals.append(p.value(state.x))
            gn.append(float(grad @ grad))
            if stop_at is not None and gn[-1] <= stop_at:
                coords_cum.append(per_node.sum() / p.n)
                parts.append(0)
                break
            self.step(state)
            per_node += state.coords_sent
            coords_cum.append(per_node.sum() / p.n)
            parts.append(int(state.mask.sum()))
        rows = len(f_vals)
        hat_index = out_rng_index
        if visited is not None:
            # the output is uniform over the iterates actually visited
            hat_index = int(stream(self.seed, "output").integers(rows))
            x_hat = visited[hat_index]
        return RunRecord(
            t=np.arange(rows), f=np.array(f_vals), grad_norm_sq=np.array(gn),
            coords_sent_cum=np.array(coords_cum, dtype=np.float64), participants=np.array(parts),
            x_hat=x_hat, x_hat_index=hat_index, state=state, coords_per_node=per_node,
        )


def run(problem, compressors, participation, config, T, seed=0, x0=None, stop_at=None):
    return DashaPP(problem, compressors, participation, config, seed).run(T, x0=x0, stop_at=stop_at)
