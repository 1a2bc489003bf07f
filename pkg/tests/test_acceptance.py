"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are also
collected into the terminal summary of any pytest run.
"""

import math
import os
import time

import numpy as np

from dasha_pp.compressors import CompressorSpec
from dasha_pp.data import (
    canonicalize_libsvm,
    fixture_names,
    fixture_path,
    load_libsvm,
    make_synthetic,
    parse_libsvm,
    serialize_libsvm,
)
from dasha_pp.errors import ParseError
from dasha_pp.harness import ExperimentConfig, engine_for, estimate_f_star, setup, slowdown_ratio
from dasha_pp.losses import SoftmaxNonconvexReg, SquaredSigmoid
from dasha_pp.optimizer import MVR, DashaConfig, DashaPP, FiniteMVR, Gradient, Page, SyncMVR
from dasha_pp.participation import ParticipationScheme
from dasha_pp.problem import Problem
from dasha_pp.reference import ReferenceDasha
from dasha_pp.theory import (
    TheoryInputs,
    params_finite_mvr,
    params_gradient,
    params_mvr,
    params_page,
    params_sync_mvr,
)
from dasha_pp.verification import (
    EnumeratedDistribution,
    mean_estimation_brute_force,
    mean_estimation_closed_forms,
    verify_compressor_moments,
    verify_one_round_expectations,
    verify_sampling_lemma,
)

MALFORMED = os.path.join(os.path.dirname(__file__), "data", "malformed")


def test_01_compressor_moments(acceptance):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    cases = 0
    for d in range(1, 7):
        for k in range(1, d + 1):
            spec = CompressorSpec.randk(d, k)
            for _ in range(10):
                x = rng.normal(size=d)
                rep = verify_compressor_moments(spec, x)
                second = abs(rep.details["second_moment"] - (d / k - 1) * float(x @ x))
                worst = max(worst, float(np.abs(rep.details["mean"] - x).max()), second)
                cases += 1
    elapsed = time.perf_counter() - start
    acceptance(1, "compressor moments", worst <= 1e-12 and elapsed < 1.0,
               f"{cases} cases, max abs err {worst:.2e}, {elapsed:.2f}s")


def _two_point(rng, dim):
    p = float(rng.uniform(0.05, 0.95))
    return EnumeratedDistribution.of([(p, rng.normal(size=dim)), (1 - p, rng.normal(size=dim))])


def test_02_sampling_lemma(acceptance):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for case in range(100):
        n = int(rng.integers(1, 6))
        if case % 2:
            scheme = ParticipationScheme.snice(n, int(rng.integers(1, n + 1)))
        else:
            scheme = ParticipationScheme.independent(n, float(rng.uniform(0.05, 1.0)))
        dim = int(rng.integers(1, 3))
        dists = [_two_point(rng, dim) for _ in range(n)]
        rep = verify_sampling_lemma(scheme, dists, rng.normal(size=(n, dim)))
        worst = max(worst, rep.details["abs_diff"])
    elapsed = time.perf_counter() - start
    acceptance(2, "sampling lemma", worst <= 1e-12 and elapsed < 5.0,
               f"100 cases, max abs err {worst:.2e}, {elapsed:.2f}s")


def test_03_mean_estimation(acceptance):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst = 0.0
    degenerate = True
    for _ in range(50):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        B, s = int(rng.integers(1, m + 1)), int(rng.integers(1, n + 1))
        x = rng.normal(size=(n, m, 2))
        closed = mean_estimation_closed_forms(x, B, s)
        brute = mean_estimation_brute_force(x, B, s)
        worst = max(worst, *(abs(c - b) for c, b in zip(closed, brute)))
        full, at_n = mean_estimation_closed_forms(x, B, n)
        degenerate &= full == at_n
    elapsed = time.perf_counter() - start
    acceptance(3, "mean-estimation variances", worst <= 1e-12 and degenerate and elapsed < 10.0,
               f"50 cases, max abs err {worst:.2e}, s=n exact: {degenerate}, {elapsed:.2f}s")


def test_04_one_round_unbiasedness(acceptance):
    rng = np.random.default_rng(4)
    dataset, shards = make_synthetic(2, 4, 2, seed=4)
    problem = Problem(dataset, shards)
    worst = 0.0
    cases = 0
    schemes = [ParticipationScheme.full(2), ParticipationScheme.independent(2, 0.5),
               ParticipationScheme.snice(2, 1)]
    for scheme in schemes:
        for spec in (CompressorSpec.identity(2), CompressorSpec.randk(2, 1)):
            engine = DashaPP(problem, spec, scheme, DashaConfig(Gradient(), 0.3, 0.5, 0.7), seed=cases)
            state = engine.init_state(rng.normal(size=2))
            for _ in range(2):
                engine.step(state)
            worst = max(worst, verify_one_round_expectations(engine, state).error)
            cases += 1
    acceptance(4, "one-round unbiasedness", worst <= 1e-12, f"{cases} cases, max err {worst:.2e}")


REDUCTION = [
    (Gradient(), 1.0),
    (Page(0.3, batch=2), 0.3),
    (FiniteMVR(batch=3), 0.2),
    (MVR(batch=2, batch_init=4), 0.3),
    (SyncMVR(0.25, batch=2, batch_mega=6, batch_init=4), 0.25),
]


def test_05_reduction_to_dasha(acceptance):
    dataset, shards = make_synthetic(3, 8, 10, seed=5)
    problem = Problem(dataset, shards, noise_sigma=0.2)
    spec = CompressorSpec.randk(problem.dim, 3)
    worst = 0.0
    for variant, b in REDUCTION:
        cfg = DashaConfig(variant, 0.5, 0.4, b)
        xs, g_ref = ReferenceDasha(problem, spec, cfg, seed=7).run(50)
        engine = DashaPP(problem, spec, ParticipationScheme.full(3), cfg, seed=7)
        state = engine.init_state()
        for t in range(50):
            engine.step(state)
            scale = max(1.0, float(np.abs(xs[t + 1]).max()))
            worst = max(worst, float(np.abs(state.x - xs[t + 1]).max()) / scale)
        worst = max(worst, float(np.abs(state.g - g_ref).max()) / max(1.0, float(np.abs(g_ref).max())))
    acceptance(5, "reduction to full-participation DASHA", worst <= 1e-14,
               f"5 variants x 50 rounds, max err {worst:.2e}")


def test_06_gradient_bound(acceptance):
    start = time.perf_counter()
    config = ExperimentConfig(participation="snice", s=5, k=5, variant="gradient")
    su = setup(config)
    gamma = su.params.gamma_max
    delta0 = su.problem.value(np.zeros(su.problem.dim)) - estimate_f_star(su.problem)
    ok = True
    parts = []
    for T in (100, 1000):
        means = [engine_for(su, gamma, seed).run(T).grad_norm_sq.mean() for seed in range(20)]
        measured = float(np.mean(means))
        bound = 1.1 * 2 * delta0 / (gamma * T)
        ok &= measured <= bound
        parts.append(f"T={T}: {measured:.4g} <= {bound:.4g}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    acceptance(6, "non-convex rate bound", ok, f"gamma={gamma:.4g}, {'; '.join(parts)}, {elapsed:.1f}s")


def test_07_slowdown_scaling(acceptance):
    start = time.perf_counter()
    config = ExperimentConfig(loss="softmax", variant="page", batch=1)
    problem = Problem(*make_synthetic(10, 32, 50, seed=0), loss=SoftmaxNonconvexReg(config.lam))
    g0 = problem.full_grad(np.zeros(problem.dim))
    tau = 0.05 * float(g0 @ g0)
    out = slowdown_ratio(config, (1, 5), tau, seeds=range(5), rounds=30000, problem=problem)
    r = out["ratios"]
    elapsed = time.perf_counter() - start
    ok = (10 / 3 <= r[1] <= 30 and 2 / 3 <= r[5] <= 6 and r[1] > r[5] > r[10] and elapsed < 300)
    gammas = ", ".join(f"s={s}: {g:.4g}" for s, g in sorted(out["gammas"].items()))
    acceptance(7, "partial-participation slowdown", ok,
               f"ratio s=1 {r[1]:.2f} in [3.33, 30], s=5 {r[5]:.2f} in [0.67, 6]; gammas {gammas}; {elapsed:.0f}s")


def _fd_error(loss, A, y, x, h=1e-6):
    grad = loss.grad(A, y, x)
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fd[i] = (loss.value(A, y, x + e) - loss.value(A, y, x - e)) / (2 * h)
    return float(np.linalg.norm(fd - grad) / max(np.linalg.norm(grad), 1e-12))


def test_08_finite_differences(acceptance):
    rng = np.random.default_rng(8)
    dataset, _ = make_synthetic(1, 20, 8, seed=8)
    A, y = dataset.features, dataset.labels
    worst = {}
    for loss in (SquaredSigmoid(), SoftmaxNonconvexReg(0.1)):
        errs = [_fd_error(loss, A, y, rng.normal(size=loss.param_dim(A.shape[1]))) for _ in range(10)]
        worst[loss.name] = max(errs)
    ok = all(v <= 1e-5 for v in worst.values())
    acceptance(8, "loss gradients", ok, ", ".join(f"{k} max rel err {v:.2e}" for k, v in worst.items()))


# inputs and values shared with the unit tests' exact symbolic evaluation
THEORY_BASE = TheoryInputs(omega=1.0, n=4, p_a=0.5, p_aa=0.2, L=1.0, L_hat=1.0, L_max=2.0, L_sigma=2.0,
                           sigma_sq=10.0, epsilon=0.01, m=16, B=4, d=8, zeta_C=2)
THEORY_GOLDEN = {
    params_gradient: 0.074662822463065098510,
    params_page: 0.049342386077978586624,
    params_finite_mvr: 0.026506909467014167244,
    params_mvr: 0.025387480506912289187,
    params_sync_mvr: 0.024041023837503872419,
}


def test_09_theory_calculator(acceptance):
    exact = params_gradient(TheoryInputs(omega=0.0, n=7, p_a=1.0, p_aa=1.0, L=1.7, L_hat=2.3))
    ok_exact = exact.gamma_max == 1 / 1.7
    page = params_page(THEORY_BASE, p_page=1.0).gamma_max
    grad = params_gradient(THEORY_BASE).gamma_max
    ok_page = abs(page - grad) <= 1e-14
    golden_err = max(abs(f(THEORY_BASE).gamma_max - v) / v for f, v in THEORY_GOLDEN.items())
    acceptance(9, "parameter calculator", ok_exact and ok_page and golden_err <= 1e-14,
               f"1/L exact: {ok_exact}, page(p=1) vs gradient {abs(page - grad):.1e}, "
               f"golden max rel err {golden_err:.1e}")


MALFORMED_LINES = {"bad_value.svm": 2, "zero_index.svm": 3, "duplicate_index.svm": 1,
                   "bad_label.svm": 4, "missing_colon.svm": 4}


def test_10_libsvm_parser(acceptance):
    round_trips = 0
    for name in fixture_names():
        with open(fixture_path(name)) as fh:
            canonical = canonicalize_libsvm(fh.read())
        ds = load_libsvm(fixture_path(name))
        if serialize_libsvm(ds) == canonical and serialize_libsvm(parse_libsvm(canonical)) == canonical:
            round_trips += 1
    rejected = 0
    for name, line in MALFORMED_LINES.items():
        try:
            load_libsvm(os.path.join(MALFORMED, name))
        except ParseError as exc:
            rejected += exc.line == line
    total = len(fixture_names())
    acceptance(10, "LIBSVM parser", round_trips == total and rejected == 5,
               f"{round_trips}/{total} fixtures round-trip, {rejected}/5 malformed rejected at the right line")


def test_11_sync_mvr_communication(acceptance):
    n, s, d, k, p_mega, rounds = 4, 2, 12, 3, 0.2, 10_000
    dataset, shards = make_synthetic(n, 2, d, seed=11)
    problem = Problem(dataset, shards, noise_sigma=0.1)
    cfg = DashaConfig(SyncMVR(p_mega, batch=1, batch_mega=1), 1e-3, 0.5, p_mega)
    engine = DashaPP(problem, CompressorSpec.randk(d, k), ParticipationScheme.snice(n, s), cfg, seed=11)
    state = engine.init_state()
    per_round = np.empty(rounds)
    for t in range(rounds):
        engine.step(state)
        per_round[t] = state.coords_sent.mean()
    p_a = s / n
    expected = p_a * (p_mega * d + (1 - p_mega) * k)
    # exactly s nodes send each round; only the shared mega coin is random
    sigma = p_a * (d - k) * math.sqrt(p_mega * (1 - p_mega) / rounds)
    measured = float(per_round.mean())
    acceptance(11, "SYNC-MVR communication", abs(measured - expected) <= 3 * sigma,
               f"measured {measured:.4f}, expected {expected:.4f}, 3 sigma {3 * sigma:.4f}")
