"""Experiment configuration, step-size tuning and metric files.

Configs are INI files with one section per component::

    [problem]
    synthetic = 10, 32, 50      ; n, m, d  (or: dataset = path/to/file.svm)
    data_seed = 0
    loss = squared_sigmoid
    noise_sigma = 0.0

    [participation]
    kind = snice
    s = 5

    [compressor]
    kind = randk
    k = 5

    [variant]
    name = page
    batch = 1

    [run]
    rounds = 1000
    seeds = 0, 1, 2
    gamma = theory              ; theory | grid | <float>
    threshold = 1e-3

Missing keys fall back to the defaults of :class:`ExperimentConfig`.
"""

import configparser
import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from dasha_pp.compressors import CompressorSpec
from dasha_pp.data import load_libsvm, make_synthetic, split_equal
from dasha_pp.errors import AllRunsDiverged, ConfigError, DashaError, DivergenceError
from dasha_pp.losses import make_loss
from dasha_pp.optimizer import MVR, DashaConfig, DashaPP, FiniteMVR, Gradient, Page, SyncMVR
from dasha_pp.participation import ParticipationScheme
from dasha_pp.problem import Problem
from dasha_pp.theory import TheoryInputs, params_for

CSV_HEADER = ("t", "f", "grad_norm_sq", "coords_sent_cum", "participants")
OUTPUT_ENV = "DASHA_PP_OUTPUT_DIR"
GRID_MIN, GRID_MAX = -10, 10
EXPLODE = 1e8
VARIANTS = ("gradient", "page", "finite_mvr", "mvr", "sync_mvr")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = None
    synthetic: tuple = (10, 32, 50)
    n: int = None
    data_seed: int = 0
    loss: str = "squared_sigmoid"
    lam: float = 0.001
    noise_sigma: float = 0.0
    participation: str = "full"
    s: int = None
    p: float = None
    compressor: str = "randk"
    k: int = None
    variant: str = "gradient"
    batch: int = 1
    batch_mega: int = None
    batch_init: int = None
    p_page: float = None
    p_mega: float = None
    rounds: int = 100
    seeds: tuple = (0,)
    gamma: object = "theory"
    grid_min: int = GRID_MIN
    grid_max: int = GRID_MAX
    epsilon: float = None
    threshold: float = None

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seed list must be nonempty")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not (math.isfinite(self.grid_min) and math.isfinite(self.grid_max)) or self.grid_min > self.grid_max:
            raise ConfigError("grid bounds must be finite with grid_min <= grid_max")
        if len(self.synthetic) != 3:
            raise ConfigError("synthetic takes three integers: n, m, d")
        if self.rounds < 1:
            raise ConfigError("rounds must be at least 1")
        if isinstance(self.gamma, str) and self.gamma not in ("theory", "grid"):
            raise ConfigError(f"gamma must be 'theory', 'grid' or a number, got {self.gamma!r}")

    @property
    def num_nodes(self):
        return self.n if self.n is not None else self.synthetic[0]

    def gamma_grid(self):
        return [2.0 ** i for i in range(self.grid_min, self.grid_max + 1)]


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


_FIELDS = {
    "problem": {"dataset": str, "synthetic": _ints, "n": int, "data_seed": int, "loss": str,
                "lam": float, "noise_sigma": float},
    "participation": {"kind": str, "s": int, "p": float},
    "compressor": {"kind": str, "k": int},
    "variant": {"name": str, "batch": int, "batch_mega": int, "batch_init": int,
                "p_page": float, "p_mega": float},
    "run": {"rounds": int, "seeds": _ints, "gamma": str, "grid_min": int, "grid_max": int,
            "epsilon": float, "threshold": float},
}
_RENAME = {("participation", "kind"): "participation", ("compressor", "kind"): "compressor",
           ("variant", "name"): "variant"}


def parse_config(text):
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values = {}
    for section in parser.sections():
        if section not in _FIELDS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _FIELDS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                value = _FIELDS[section][key](raw.strip())
            except ValueError:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from None
            values[_RENAME.get((section, key), key)] = value
    gamma = values.get("gamma")
    if gamma is not None and gamma not in ("theory", "grid"):
        try:
            values["gamma"] = float(gamma)
        except ValueError:
            raise ConfigError(f"gamma must be 'theory', 'grid' or a number, got {gamma!r}") from None
    try:
        return ExperimentConfig(**values)
    except (TypeError, DashaError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def default_output_dir():
    return os.environ.get(OUTPUT_ENV, "dasha_pp_runs")


# -- building blocks ---------------------------------------------------------------

@dataclass
class Setup:
    config: ExperimentConfig
    problem: Problem
    compressor: CompressorSpec
    scheme: ParticipationScheme
    inputs: TheoryInputs
    params: object
    variant: object


def build_problem(config):
    loss = make_loss(config.loss, config.lam)
    if config.dataset:
        dataset = load_libsvm(config.dataset)
        shards = split_equal(dataset, config.num_nodes, np.random.default_rng([config.data_seed, 8]))
    else:
        _, m, d = config.synthetic
        dataset, shards = make_synthetic(config.num_nodes, m, d, config.data_seed)
    return Problem(dataset, shards, loss=loss, noise_sigma=config.noise_sigma)


def build_scheme(config, n):
    if config.participation == "full":
        return ParticipationScheme.full(n)
    if config.participation == "snice":
        return ParticipationScheme.snice(n, config.s)
    if config.participation == "independent":
        return ParticipationScheme.independent(n, config.p)
    raise ConfigError(f"unknown participation kind {config.participation!r}")


def build_compressor(config, dim):
    if config.compressor == "identity":
        return CompressorSpec.identity(dim)
    if config.compressor == "randk":
        return CompressorSpec.randk(dim, config.k if config.k else max(1, dim // 10))
    raise ConfigError(f"unknown compressor kind {config.compressor!r}")


def setup(config, problem=None):
    """Construct problem, compressor, participation and theory parameters."""
    problem = problem if problem is not None else build_problem(config)
    compressor = build_compressor(config, problem.dim)
    scheme = build_scheme(config, problem.n)
    smooth = problem.estimate_smoothness()
    extra = {"m": problem.m, "B": config.batch}
    if config.variant in ("mvr", "sync_mvr"):
        extra["sigma_sq"] = problem.sigma_sq(np.zeros(problem.dim))
        extra["epsilon"] = config.epsilon if config.epsilon else 1e-3
        extra["B_prime"] = config.batch_mega
    inputs = TheoryInputs.from_components(compressor, scheme, smooth, **extra)
    overrides = {}
    if config.variant == "page" and config.p_page is not None:
        overrides["p_page"] = config.p_page
    if config.variant == "sync_mvr" and config.p_mega is not None:
        overrides["p_mega"] = config.p_mega
    params = params_for(config.variant, inputs, **overrides)
    variant = make_variant(config, params, problem)
    return Setup(config, problem, compressor, scheme, inputs, params, variant)


def make_variant(config, params, problem):
    name = config.variant
    if name == "gradient":
        return Gradient()
    if name == "page":
        return Page(params.p_page, config.batch)
    if name == "finite_mvr":
        return FiniteMVR(config.batch)
    if name == "mvr":
        return MVR(config.batch, config.batch_init or params.B_init)
    mega = config.batch_mega or params.B_prime or config.batch
    return SyncMVR(params.p_mega, config.batch, max(mega, config.batch), config.batch_init or params.B_init)


def engine_for(su, gamma, seed):
    cfg = DashaConfig(su.variant, gamma, su.params.a, su.params.b)
    return DashaPP(su.problem, su.compressor, su.scheme, cfg, seed)


# -- metrics -----------------------------------------------------------------------

def rounds_to_threshold(record, tau):
    """First round index whose squared gradient norm is at most ``tau``, else ``None``."""
    hits = np.flatnonzero(np.asarray(record.grad_norm_sq) <= tau)
    return int(hits[0]) if hits.size else None


def write_csv(path, record):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for t, f, gn, coords, parts in record.rows():
            writer.writerow([t, repr(f), repr(gn), repr(coords), parts])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def estimate_f_star(problem, rounds=5000):
    """Smallest ``f`` seen along a long exact-gradient descent run (an upper bound on f*)."""
    L = problem.estimate_smoothness().L
    x = np.zeros(problem.dim)
    best = problem.value(x)
    for _ in range(rounds):
        x = x - problem.full_grad(x) / L
        best = min(best, problem.value(x))
    return float(best)


# -- runs and tuning ---------------------------------------------------------------

@dataclass
class GammaResult:
    gamma: float
    records: dict = field(default_factory=dict)
    diverged: bool = False
    exhausted: bool = False

    def final_grad_norm_sq(self):
        return float(np.mean([r.grad_norm_sq[-1] for r in self.records.values()]))

    def mean_rounds(self, tau):
        hits = [rounds_to_threshold(r, tau) for r in self.records.values()]
        if any(h is None for h in hits):
            return math.inf
        return float(np.mean(hits))


def _exploded(record):
    """Non-finite metrics, or f or the gradient norm grown by ``EXPLODE``."""
    f, gn = record.f, record.grad_norm_sq
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(gn))):
        return True
    return bool(gn.max() > EXPLODE * max(gn[0], 1e-300) or f.max() > EXPLODE * max(abs(f[0]), 1.0))


def run_gamma(su, gamma, seeds, rounds, stop_at=None, budget=None):
    """Run ``gamma`` on every seed; ``diverged`` marks non-finite or exploding runs.

    With ``stop_at`` and ``budget``, the seeds together may use at most
    ``budget`` rounds; a run that exhausts it is abandoned and counts as not
    reaching the threshold.
    """
    result = GammaResult(gamma)
    used = 0
    for seed in seeds:
        cap = rounds if budget is None else max(1, min(rounds, budget - used))
        try:
            record = engine_for(su, gamma, seed).run(cap, stop_at=stop_at)
        except DivergenceError:
            result.diverged = True
            return result
        result.records[seed] = record
        if _exploded(record):
            result.diverged = True
            return result
        if stop_at is not None and record.grad_norm_sq[-1] > stop_at:
            result.exhausted = True
            return result
        used += len(record) - 1
    return result


def tune_gamma(su, seeds, rounds, grid=None, threshold=None, start=None):
    """Grid search over step sizes, skipping diverged runs.

    Without ``threshold`` the best step size minimizes the seed-averaged final
    squared gradient norm. With it, runs stop at the threshold and the best
    step size minimizes the mean rounds needed to reach it; candidates are
    tried outward from ``start`` (default ``1 / L_hat``) and abandoned as soon
    as they need more rounds than the best one so far.
    """
    grid = su.config.gamma_grid() if grid is None else list(grid)
    if threshold is None:
        results = [run_gamma(su, g, seeds, rounds) for g in grid]
        alive = [r for r in results if not r.diverged]
        if not alive:
            raise AllRunsDiverged(f"all {len(results)} step sizes diverged")
        return min(alive, key=lambda r: r.final_grad_norm_sq()), results
    start = 1.0 / su.inputs.L_hat if start is None else start
    order = sorted(grid, key=lambda g: (abs(math.log2(g) - math.log2(start)), g))
    best, best_total, results = None, None, []
    for g in order:
        result = run_gamma(su, g, seeds, rounds, stop_at=threshold, budget=best_total)
        results.append(result)
        if result.diverged or result.exhausted:
            continue
        total = sum(rounds_to_threshold(r, threshold) for r in result.records.values())
        if best is None or total < best_total:
            best, best_total = result, total
    if best is None:
        if all(r.diverged for r in results):
            raise AllRunsDiverged(f"all {len(results)} step sizes diverged")
        raise AllRunsDiverged(f"no step size reached {threshold} within {rounds} rounds")
    results.sort(key=lambda r: r.gamma)
    return best, results


def _fmt_gamma(g):
    return f"{g:.6g}"


def run_experiment(config, out_dir=None, problem=None):
    """Run every seed, write one CSV per (seed, gamma) and ``summary.json``."""
    out_dir = out_dir or default_output_dir()
    os.makedirs(out_dir, exist_ok=True)
    su = setup(config, problem)
    seeds = list(config.seeds)
    candidates = None
    if config.gamma == "theory":
        best = run_gamma(su, su.params.gamma_max, seeds, config.rounds)
        if best.diverged:
            raise AllRunsDiverged(f"theory step size {su.params.gamma_max} diverged")
    elif config.gamma == "grid":
        best, candidates = tune_gamma(su, seeds, config.rounds)
    else:
        best = run_gamma(su, float(config.gamma), seeds, config.rounds)
        if best.diverged:
            raise AllRunsDiverged(f"step size {config.gamma} diverged")
    files = []
    for result in candidates if candidates is not None else [best]:
        for seed, record in result.records.items():
            path = os.path.join(out_dir, f"seed{seed}_gamma{_fmt_gamma(result.gamma)}.csv")
            write_csv(path, record)
            files.append(path)
    summary = {
        "variant": config.variant,
        "gamma": best.gamma,
        "gamma_source": config.gamma if isinstance(config.gamma, str) else "fixed",
        "theory": {k: v for k, v in asdict(su.params).items() if v is not None},
        "final_grad_norm_sq": best.final_grad_norm_sq(),
        "per_seed_final_grad_norm_sq": {str(s): float(r.grad_norm_sq[-1]) for s, r in best.records.items()},
        "csv_files": files,
    }
    if candidates is not None:
        summary["grid"] = [{"gamma": r.gamma, "diverged": r.diverged,
                            "final_grad_norm_sq": None if r.diverged else r.final_grad_norm_sq()}
                           for r in candidates]
    if config.threshold is not None:
        summary["threshold"] = config.threshold
        summary["rounds_to_threshold"] = {str(s): rounds_to_threshold(r, config.threshold)
                                          for s, r in best.records.items()}
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, default=float)
    return summary


def slowdown_ratio(config, s_values, tau, seeds=(0, 1, 2), rounds=20000, grid=None, problem=None):
    """Rounds to reach ``tau`` with ``s`` of ``n`` nodes, relative to ``s = n``.

    The step size is tuned separately for every ``s``. Returns a dict with
    per-``s`` ratios, mean rounds and chosen step sizes.
    """
    problem = problem if problem is not None else build_problem(config)
    n = problem.n
    rounds_by_s, gammas = {}, {}
    for s in sorted(set(s_values) | {n}):
        cfg = replace(config, participation="snice", s=s)
        su = setup(cfg, problem)
        best, _ = tune_gamma(su, seeds, rounds, grid=grid, threshold=tau)
        rounds_by_s[s] = best.mean_rounds(tau)
        gammas[s] = best.gamma
    base = rounds_by_s[n]
    ratios = {s: rounds_by_s[s] / base for s in rounds_by_s}
    return {"ratios": ratios, "rounds": rounds_by_s, "gammas": gammas, "tau": tau}

