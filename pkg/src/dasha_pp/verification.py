"""Brute-force checks of the variance and unbiasedness identities.

Every check here enumerates the full outcome space of a tiny instance and
compares the exact moments with a closed form. Expectations are computed
from the enumeration itself, never from the optimizer's own formulas.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
from math import comb, factorial

import numpy as np

from dasha_pp.compressors import SparseMessage
from dasha_pp.errors import EnumerationTooLarge, InvalidParameter

TOL = 1e-12
MAX_NODES = 5
MAX_SAMPLES = 4
MAX_DIM = 6


@dataclass
class Report:
    name: str
    error: float
    tol: float = TOL
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.error <= self.tol)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<48s} err={self.error:.3e}  tol={self.tol:.0e}"


@dataclass(frozen=True)
class EnumeratedDistribution:
    """Finite distribution over vectors: ``[(probability, vector), ...]``."""

    outcomes: tuple

    def __post_init__(self):
        probs = [float(p) for p, _ in self.outcomes]
        if any(p < 0 for p in probs):
            raise InvalidParameter("probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > TOL:
            raise InvalidParameter(f"probabilities sum to {sum(probs)}, not 1")

    @classmethod
    def of(cls, pairs):
        return cls(tuple((float(p), np.atleast_1d(np.asarray(v, dtype=np.float64))) for p, v in pairs))

    def mean(self):
        return sum(p * v for p, v in self.outcomes)

    def variance(self):
        mu = self.mean()
        return float(sum(p * float((v - mu) @ (v - mu)) for p, v in self.outcomes))


def _masks(kind, n, s=None, p=None):
    """Exact ``[(prob, mask)]`` for a participation scheme, enumerated here."""
    if kind == "full":
        return [(1.0, (True,) * n)]
    if kind == "snice":
        total = comb(n, s)
        return [(1.0 / total, tuple(i in c for i in range(n))) for c in combinations(range(n), s)]
    if kind == "independent":
        out = []
        for bits in product((False, True), repeat=n):
            k = sum(bits)
            out.append((p ** k * (1 - p) ** (n - k), bits))
        return out
    raise InvalidParameter(f"unknown participation kind {kind!r}")


def _scheme_masks(scheme):
    masks = _masks(scheme.kind, scheme.n, scheme.s, scheme.p)
    total = sum(pr for pr, _ in masks)
    if abs(total - 1.0) > TOL:
        raise AssertionError(f"mask probabilities sum to {total}")
    return masks


def _empirical_moments(masks, n):
    p_a = sum(pr for pr, mk in masks if mk[0])
    if n == 1:
        return p_a, p_a * p_a
    p_aa = sum(pr for pr, mk in masks if mk[0] and mk[1])
    return p_a, p_aa


# -- sampling lemma ----------------------------------------------------------------

def lemma_rhs(p_a, p_aa, s_means, s_vars):
    """Right-hand side (equality line) of the sampling lemma."""
    s_means = np.atleast_2d(np.asarray(s_means, dtype=np.float64))
    n = s_means.shape[0]
    avg = s_means.mean(axis=0)
    return float(
        np.sum(s_vars) / (n * n * p_a)
        + (p_a - p_aa) / (n * n * p_a * p_a) * float(np.sum(s_means * s_means))
        + (p_aa - p_a * p_a) / (p_a * p_a) * float(avg @ avg)
    )


def verify_sampling_lemma(scheme, s_distributions, r=None):
    """Exact variance of ``(1/n) sum v_i`` by enumeration versus the lemma.

    Returns a :class:`Report` with ``details`` holding ``lhs`` and ``rhs``.
    """
    n = scheme.n
    if n > MAX_NODES:
        raise EnumerationTooLarge(f"n={n} exceeds {MAX_NODES}")
    if len(s_distributions) != n:
        raise InvalidParameter("need one distribution per node")
    dim = len(s_distributions[0].outcomes[0][1])
    r = np.zeros((n, dim)) if r is None else np.asarray(r, dtype=np.float64)
    masks = _scheme_masks(scheme)
    p_a, p_aa = _empirical_moments(masks, n)
    joint = list(product(*[d.outcomes for d in s_distributions]))
    values, probs = [], []
    for pm, mask in masks:
        for combo in joint:
            prob = pm
            total = np.zeros(dim)
            for i, (ps, s) in enumerate(combo):
                prob *= ps
                total += r[i] + (s / p_a if mask[i] else 0.0)
            values.append(total / n)
            probs.append(prob)
    values, probs = np.array(values), np.array(probs)
    if abs(probs.sum() - 1.0) > TOL:
        raise AssertionError("joint enumeration is not normalized")
    mean = probs @ values
    lhs = float(probs @ np.sum((values - mean) ** 2, axis=1))
    means = np.array([d.mean() for d in s_distributions])
    variances = np.array([d.variance() for d in s_distributions])
    rhs = lemma_rhs(p_a, p_aa, means, variances)
    err = abs(lhs - rhs)
    return Report(f"sampling lemma ({scheme.kind}, n={n})", err / max(1.0, abs(rhs)),
                  details={"lhs": lhs, "rhs": rhs, "abs_diff": err, "p_a": p_a, "p_aa": p_aa})


# -- mean estimation under partial participation ------------------------------------

def mean_estimation_closed_forms(x, B, s):
    """Closed-form variances of the mini-batch mean estimator.

    ``x`` has shape ``(n, m, d)``. Returns ``(full, s_nice)``: the variance
    when every node sends a with-replacement batch of size ``B``, and when
    only ``s`` nodes drawn without replacement do.
    """
    x = np.asarray(x, dtype=np.float64)
    n, m, _ = x.shape
    node_means = x.mean(axis=1)
    within = float(np.sum((x - node_means[:, None, :]) ** 2)) / (n * m)
    between = float(np.sum((node_means - node_means.mean(axis=0)) ** 2)) / n
    full = within / (n * B)
    coef = 0.0 if n == 1 else (n - s) / (s * (n - 1))
    return full, within / (s * B) + coef * between


def _batch_mean_support(rows, B):
    """Exact distribution of the mean of ``B`` draws with replacement from ``rows``."""
    m = len(rows)
    values, probs = [], []
    # multisets of size B collapse the m**B ordered tuples
    for counts in _compositions(B, m):
        mult = factorial(B)
        for c in counts:
            mult //= factorial(c)
        values.append(np.tensordot(np.array(counts, dtype=np.float64), rows, axes=1) / B)
        probs.append(Fraction(mult, m ** B))
    return np.array(values), np.array([float(p) for p in probs])


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _sum_support(supports):
    values, probs = supports[0]
    for v2, p2 in supports[1:]:
        values = (values[:, None, :] + v2[None, :, :]).reshape(-1, values.shape[1])
        probs = (probs[:, None] * p2[None, :]).ravel()
    return values, probs


def mean_estimation_brute_force(x, B, s):
    """Enumerate batches and node subsets; return ``(full, s_nice)`` variances."""
    x = np.asarray(x, dtype=np.float64)
    n, m, d = x.shape
    if n > MAX_NODES - 1 or m > MAX_SAMPLES or not 1 <= B <= m or not 1 <= s <= n:
        raise EnumerationTooLarge("need n <= 4, m <= 4, 1 <= B <= m, 1 <= s <= n")
    supports = [_batch_mean_support(x[i], B) for i in range(n)]
    target = x.mean(axis=(0, 1))

    def variance(subset, scale):
        values, probs = _sum_support([supports[i] for i in subset])
        if abs(probs.sum() - 1.0) > TOL:
            raise AssertionError("batch enumeration is not normalized")
        err = values * scale - target
        return float(probs @ np.sum(err * err, axis=1))

    full = variance(range(n), 1.0 / n)
    subsets = list(combinations(range(n), s))
    s_nice = sum(variance(c, 1.0 / s) for c in subsets) / len(subsets)
    return full, s_nice


def verify_mean_estimation(x, B, s):
    x = np.asarray(x, dtype=np.float64)
    closed = mean_estimation_closed_forms(x, B, s)
    brute = mean_estimation_brute_force(x, B, s)
    err = max(abs(c - b) / max(1.0, abs(b)) for c, b in zip(closed, brute))
    n, m, _ = x.shape
    return Report(f"mean estimation (n={n}, m={m}, B={B}, s={s})", err,
                  details={"closed_full": closed[0], "closed_snice": closed[1],
                           "brute_full": brute[0], "brute_snice": brute[1]})


# -- compressor moments --------------------------------------------------------------

def randk_outcomes(d, k, x):
    """All equally likely RandK outputs for ``x``, built from the definition."""
    x = np.asarray(x, dtype=np.float64)
    out = []
    for subset in combinations(range(d), k):
        y = np.zeros(d)
        idx = list(subset)
        y[idx] = x[idx] * (d / k)
        out.append(y)
    return out


def verify_compressor_moments(spec, x, rng=None, samples=64):
    """Check ``E C(x) = x`` and ``E||C(x) - x||^2 = omega ||x||^2`` exactly.

    When ``rng`` is given, ``samples`` draws of the real compressor are also
    checked to lie in the enumerated support.
    """
    d = spec.d
    if d > MAX_DIM:
        raise EnumerationTooLarge(f"d={d} exceeds {MAX_DIM}")
    x = np.asarray(x, dtype=np.float64)
    outcomes = [x.copy()] if spec.kind == "identity" else randk_outcomes(d, spec.k, x)
    weight = Fraction(1, len(outcomes))
    mean = sum(outcomes) * float(weight)
    second = sum(float((y - x) @ (y - x)) for y in outcomes) * float(weight)
    k = d if spec.kind == "identity" else spec.k
    expected_second = (d / k - 1.0) * float(x @ x)
    scale = max(1.0, float(np.abs(x).max()) ** 2 if len(x) else 1.0)
    err = max(float(np.abs(mean - x).max()), abs(second - expected_second) / scale)
    if rng is not None:
        support = np.array(outcomes)
        for _ in range(samples):
            y = spec.compress(x, rng).to_dense()
            if not np.any(np.all(np.abs(support - y) <= TOL * scale, axis=1)):
                err = max(err, 1.0)
    return Report(f"compressor moments ({spec.kind}, d={d}, K={k})", err,
                  details={"mean": mean, "second_moment": second, "expected": expected_second})


# -- one-round expectations --------------------------------------------------------------

class _FixedSubset:
    """Stand-in compressor that keeps a preset coordinate subset."""

    def __init__(self, spec, subset):
        self.d = spec.d
        self.k = len(subset)
        self.subset = np.array(subset, dtype=np.int64)

    def compress(self, x, rng=None):
        return SparseMessage(self.subset, x[self.subset] * (self.d / self.k), self.d)


def verify_one_round_expectations(engine, state):
    """Enumerate masks and compressor subsets for one gradient-variant round.

    Drives ``engine.step`` once per outcome with forced participation and
    forced subsets, then compares the probability-weighted averages with
    ``E h_i' = h_i + k_i`` and ``E g_i' = g_i + k_i - a (g_i - h_i)``.
    """
    p = engine.problem
    if p.n > 3 or p.dim > 3:
        raise EnumerationTooLarge("one-round enumeration needs n <= 3 and d <= 3")
    scheme, cfg = engine.participation, engine.config
    masks = _scheme_masks(scheme)
    per_node = []
    for spec in engine.compressors:
        if spec.kind == "identity":
            per_node.append([(1.0, tuple(range(spec.d)))])
        else:
            subs = list(combinations(range(spec.d), spec.k))
            per_node.append([(1.0 / len(subs), c) for c in subs])
    x_new = state.x - cfg.gamma * state.g
    E_h = np.zeros_like(state.h_nodes)
    E_g = np.zeros_like(state.g_nodes)
    total_prob = 0.0
    original = engine.compressors
    try:
        for pm, mask in masks:
            for combo in product(*per_node):
                prob = pm
                for pc, _ in combo:
                    prob *= pc
                engine.compressors = [_FixedSubset(spec, sub) for spec, (_, sub) in zip(original, combo)]
                trial = state.copy()
                engine.step(trial, mask=np.array(mask))
                E_h += prob * trial.h_nodes
                E_g += prob * trial.g_nodes
                total_prob += prob
    finally:
        engine.compressors = original
    if abs(total_prob - 1.0) > TOL:
        raise AssertionError("outcome enumeration is not normalized")
    err = 0.0
    for i in range(p.n):
        grad_old = p.grad_full(i, state.x)
        k = p.grad_full(i, x_new) - grad_old - cfg.b * (state.h_nodes[i] - grad_old)
        want_h = state.h_nodes[i] + k
        want_g = state.g_nodes[i] + k - cfg.a * (state.g_nodes[i] - state.h_nodes[i])
        err = max(err, float(np.abs(E_h[i] - want_h).max()), float(np.abs(E_g[i] - want_g).max()))
    return Report(f"one-round expectations ({scheme.kind}, {original[0].kind})", err,
                  details={"E_h": E_h, "E_g": E_g})


# -- battery for the command line -------------------------------------------------------

def _two_point(rng, dim):
    p = float(rng.uniform(0.05, 0.95))
    return EnumeratedDistribution.of([(p, rng.normal(size=dim)), (1 - p, rng.normal(size=dim))])


def default_battery(seed=0):
    """A small randomized sweep over every oracle; returns a list of reports."""
    from dasha_pp.compressors import CompressorSpec
    from dasha_pp.data import make_synthetic
    from dasha_pp.optimizer import DashaConfig, DashaPP, Gradient
    from dasha_pp.participation import ParticipationScheme
    from dasha_pp.problem import Problem

    rng = np.random.default_rng(seed)
    reports = []
    for d in range(1, MAX_DIM + 1):
        for k in range(1, d + 1):
            reports.append(verify_compressor_moments(CompressorSpec.randk(d, k), rng.normal(size=d), rng))
    for n in range(1, MAX_NODES + 1):
        for scheme in (ParticipationScheme.snice(n, int(rng.integers(1, n + 1))),
                       ParticipationScheme.independent(n, float(rng.uniform(0.1, 1.0)))):
            dists = [_two_point(rng, 2) for _ in range(n)]
            reports.append(verify_sampling_lemma(scheme, dists, rng.normal(size=(n, 2))))
    for n in range(1, 4):
        m = int(rng.integers(1, MAX_SAMPLES + 1))
        B = int(rng.integers(1, m + 1))
        reports.append(verify_mean_estimation(rng.normal(size=(n, m, 2)), B, int(rng.integers(1, n + 1))))
    dataset, shards = make_synthetic(2, 4, 2, seed)
    problem = Problem(dataset, shards)
    for p in (0.5, 1.0):
        scheme = ParticipationScheme.independent(2, p) if p < 1 else ParticipationScheme.full(2)
        for spec in (CompressorSpec.identity(2), CompressorSpec.randk(2, 1)):
            engine = DashaPP(problem, spec, scheme, DashaConfig(Gradient(), 0.3, 0.5, 0.5), seed)
            state = engine.init_state(rng.normal(size=2))
            engine.step(state)
            reports.append(verify_one_round_expectations(engine, state))
    return reports
