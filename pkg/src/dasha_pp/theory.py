"""Momentum, step-size and complexity formulas for every DASHA-PP variant.

All Theta(.)/O(.) expressions are evaluated with constant 1; they are
order-of-magnitude guidance only.
"""

import math
from dataclasses import dataclass, replace

from dasha_pp.errors import InvalidParameter

INF = math.inf


@dataclass(frozen=True)
class TheoryInputs:
    omega: float
    n: int
    p_a: float
    p_aa: float
    L: float
    L_hat: float
    L_max: float = None
    L_sigma: float = None
    sigma_sq: float = None
    m: int = None
    B: int = 1
    B_prime: int = None
    epsilon: float = None
    mu: float = None
    d: int = None
    zeta_C: float = None
    delta0: float = None

    def __post_init__(self):
        if self.omega < 0:
            raise InvalidParameter("omega must be nonnegative")
        if self.n < 1:
            raise InvalidParameter("n must be positive")
        if not 0 < self.p_a <= 1:
            raise InvalidParameter("p_a must lie in (0, 1]")
        if not 0 <= self.p_aa <= 1:
            raise InvalidParameter("p_aa must lie in [0, 1]")
        if self.p_aa > self.p_a ** 2 * (1 + 1e-12):
            raise InvalidParameter("p_aa must not exceed p_a^2")
        for name in ("L", "L_hat", "L_max", "L_sigma", "epsilon", "mu"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise InvalidParameter(f"{name} must be positive")
        if self.B is not None and self.B < 1:
            raise InvalidParameter("B must be at least 1")
        if self.sigma_sq is not None and self.sigma_sq < 0:
            raise InvalidParameter("sigma_sq must be nonnegative")

    @property
    def indicator_sq(self):
        """``1 - p_aa / p_a``; zero exactly when every node always participates."""
        return max(0.0, 1.0 - self.p_aa / self.p_a)

    @property
    def indicator(self):
        return math.sqrt(self.indicator_sq)

    @classmethod
    def from_components(cls, compressor, scheme, smoothness, **kwargs):
        p_a, p_aa = scheme.moments()
        return cls(
            omega=compressor.omega(), n=scheme.n, p_a=p_a, p_aa=p_aa,
            L=smoothness.L, L_hat=smoothness.L_hat, L_max=smoothness.L_max,
            L_sigma=smoothness.L_sigma, mu=kwargs.pop("mu", smoothness.mu),
            d=compressor.d, zeta_C=compressor.expected_density(), **kwargs,
        )


@dataclass(frozen=True)
class TheoryParams:
    a: float
    b: float
    gamma_max: float
    p_page: float = None
    p_mega: float = None
    B_init: int = None
    B_prime: int = None
    T_bound: float = None
    rate: float = None
    condition_ok: bool = True


def _require(inp, *names):
    missing = [name for name in names if getattr(inp, name) is None]
    if missing:
        raise InvalidParameter(f"missing inputs: {', '.join(missing)}")


def _ratio(num, den):
    return INF if den == 0 else num / den


def _momentum_a(inp):
    return inp.p_a / (2 * inp.omega + 1)


def _compression_coef(inp, const):
    return const * inp.omega * (2 * inp.omega + 1) / (inp.n * inp.p_a ** 2)


def _checked(params):
    if not (0 < params.a <= 1 and 0 < params.b <= 1 and params.gamma_max > 0):
        raise InvalidParameter(f"formula produced out-of-range parameters: {params}")
    return params


def _rounds(inp, bracket, extra=0.0):
    if inp.delta0 is None or inp.epsilon is None:
        return None
    return inp.delta0 / inp.epsilon * bracket + extra


def params_gradient(inp):
    a = _momentum_a(inp)
    b = inp.p_a / (2 - inp.p_a)
    radical = math.sqrt(_compression_coef(inp, 48) + 16 / (inp.n * inp.p_a ** 2) * inp.indicator_sq)
    gamma = 1.0 / (inp.L + radical * inp.L_hat)
    T = _rounds(inp, inp.L + (inp.omega + 1) / (inp.p_a * math.sqrt(inp.n)) * inp.L_hat)
    return _checked(TheoryParams(a=a, b=b, gamma_max=gamma, T_bound=T))


def params_page(inp, p_page=None):
    """PAGE variant; ``p_page`` defaults to ``B / (m + B)``."""
    _require(inp, "L_max", "B")
    if p_page is None:
        _require(inp, "m")
        p_page = inp.B / (inp.m + inp.B)
    if not 0 < p_page <= 1:
        raise InvalidParameter("p_page must lie in (0, 1]")
    a = _momentum_a(inp)
    b = p_page * inp.p_a / (2 - inp.p_a)
    L_hat2 = inp.L_hat ** 2
    batch_term = (1 - p_page) * inp.L_max ** 2 / inp.B
    radicand = (
        _compression_coef(inp, 48) * (L_hat2 + batch_term)
        + 16 / (inp.n * inp.p_a ** 2 * p_page) * (inp.indicator_sq * L_hat2 + batch_term)
    )
    gamma = 1.0 / (inp.L + math.sqrt(radicand))
    T = None
    if inp.m is not None:
        T = _rounds(
            inp,
            inp.L
            + inp.omega / (inp.p_a * math.sqrt(inp.n)) * (inp.L_hat + inp.L_max / math.sqrt(inp.B))
            + math.sqrt(inp.m / inp.n) / inp.p_a
            * (inp.indicator * inp.L_hat / math.sqrt(inp.B) + inp.L_max / inp.B),
        )
    return _checked(TheoryParams(a=a, b=b, gamma_max=gamma, p_page=p_page, T_bound=T))


def params_finite_mvr(inp):
    _require(inp, "L_max", "B", "m")
    if inp.B > inp.m:
        raise InvalidParameter("FINITE-MVR needs B <= m")
    q = inp.p_a * inp.B / inp.m
    a = _momentum_a(inp)
    b = q / (2 - q)
    L_hat2 = inp.L_hat ** 2
    batch_term = inp.L_max ** 2 / inp.B
    radicand = (
        _compression_coef(inp, 148) * (L_hat2 + batch_term)
        + 72 * inp.m / (inp.n * inp.p_a ** 2 * inp.B) * (inp.indicator_sq * L_hat2 + batch_term)
    )
    gamma = 1.0 / (inp.L + math.sqrt(radicand))
    return _checked(TheoryParams(a=a, b=b, gamma_max=gamma))


def _mvr_momentum(inp, mu_factor=1.0):
    """min(p_a/(2-p_a), (p_a/omega) sqrt(r), p_a r) with r = mu n eps B / sigma^2."""
    cap = inp.p_a / (2 - inp.p_a)
    r = _ratio(mu_factor * inp.n * inp.epsilon * inp.B, inp.sigma_sq)
    candidates = [cap, inp.p_a * r]
    if inp.omega > 0:
        candidates.append(inp.p_a / inp.omega * math.sqrt(r))
    return min(candidates)


def params_mvr(inp, b=None):
    """MVR variant. ``b`` defaults to the recommended choice, which needs
    ``sigma_sq`` and ``epsilon``; ``condition_ok`` reports whether
    ``sigma^2 / (n eps B) >= 1`` holds."""
    _require(inp, "L_sigma", "B")
    condition_ok = True
    if b is None:
        _require(inp, "sigma_sq", "epsilon")
        b = _mvr_momentum(inp)
    if inp.sigma_sq is not None and inp.epsilon is not None:
        condition_ok = _ratio(inp.sigma_sq, inp.n * inp.epsilon * inp.B) >= 1
    if not 0 < b <= inp.p_a / (2 - inp.p_a) * (1 + 1e-15):
        raise InvalidParameter("b must lie in (0, p_a / (2 - p_a)]")
    a = _momentum_a(inp)
    L_hat2 = inp.L_hat ** 2
    batch_term = (1 - b) ** 2 * inp.L_sigma ** 2 / inp.B
    radicand = (
        _compression_coef(inp, 48) * (L_hat2 + batch_term)
        + 12 / (inp.n * inp.p_a * b) * (inp.indicator_sq * L_hat2 + batch_term)
    )
    gamma = 1.0 / (inp.L + math.sqrt(radicand))
    B_init = math.ceil(math.sqrt(inp.p_a) * inp.B / b)
    T = None
    if inp.sigma_sq is not None and inp.epsilon is not None:
        sigma = math.sqrt(inp.sigma_sq)
        T = _rounds(
            inp,
            inp.L
            + inp.omega / (inp.p_a * math.sqrt(inp.n)) * (inp.L_hat + inp.L_sigma / math.sqrt(inp.B))
            + sigma / (inp.p_a * math.sqrt(inp.epsilon) * inp.n)
            * (inp.indicator * inp.L_hat / math.sqrt(inp.B) + inp.L_sigma / inp.B),
            extra=inp.sigma_sq / (math.sqrt(inp.p_a) * inp.n * inp.epsilon * inp.B),
        )
    return _checked(TheoryParams(a=a, b=b, gamma_max=gamma, B_init=B_init, T_bound=T,
                                 condition_ok=condition_ok))


def _sync_p_mega(inp, mu_factor=1.0):
    _require(inp, "zeta_C", "d", "sigma_sq", "epsilon")
    return min(inp.zeta_C / inp.d, _ratio(mu_factor * inp.n * inp.epsilon * inp.B, inp.sigma_sq))


def params_sync_mvr(inp, p_mega=None):
    """SYNC-MVR variant; ``p_mega`` defaults to ``min(zeta_C/d, n eps B / sigma^2)``."""
    _require(inp, "L_sigma", "B")
    if p_mega is None:
        p_mega = _sync_p_mega(inp)
    p_mega = min(p_mega, 1.0)
    if not 0 < p_mega <= 1:
        raise InvalidParameter("p_mega must lie in (0, 1]")
    a = _momentum_a(inp)
    b = p_mega * inp.p_a / (2 - inp.p_a)
    L_hat2 = inp.L_hat ** 2
    batch_term = inp.L_sigma ** 2 / inp.B
    radicand = (
        8 * (2 * inp.omega + 1) * inp.omega / (inp.n * inp.p_a ** 2) * (L_hat2 + batch_term)
        + 16 / (inp.n * p_mega * inp.p_a ** 2) * (inp.indicator_sq * L_hat2 + batch_term)
    )
    gamma = 1.0 / (inp.L + math.sqrt(radicand))
    B_prime = inp.B_prime
    if B_prime is None and inp.sigma_sq is not None and inp.epsilon is not None:
        B_prime = max(inp.B, math.ceil(inp.sigma_sq / (inp.n * inp.epsilon)))
    if B_prime is not None and B_prime < inp.B:
        raise InvalidParameter("SYNC-MVR needs B' >= B")
    B_init = math.ceil(inp.B / (p_mega * math.sqrt(inp.p_a)))
    T = None
    if inp.sigma_sq is not None and inp.epsilon is not None and inp.d is not None and inp.zeta_C:
        sigma = math.sqrt(inp.sigma_sq)
        T = _rounds(
            inp,
            inp.L
            + (inp.omega / (inp.p_a * math.sqrt(inp.n))
               + math.sqrt(inp.d / (inp.p_a ** 2 * inp.zeta_C * inp.n)))
            * (inp.L_hat + inp.L_sigma / math.sqrt(inp.B))
            + sigma / (inp.p_a * math.sqrt(inp.epsilon) * inp.n)
            * (inp.L_hat / math.sqrt(inp.B) + inp.L_sigma / inp.B),
            extra=inp.sigma_sq / (math.sqrt(inp.p_a) * inp.n * inp.epsilon * inp.B),
        )
    return _checked(TheoryParams(a=a, b=b, gamma_max=gamma, p_mega=p_mega, B_init=B_init,
                                 B_prime=B_prime, T_bound=T))


def params_pl(inp, variant, b=None, p_page=None, p_mega=None):
    """Step size under the P-L condition, capped by the momentum/mu terms.

    Supported variants: ``gradient``, ``page``, ``mvr``, ``sync_mvr``. The
    returned ``rate`` is the linear contraction factor ``1 - gamma * mu``.
    """
    _require(inp, "mu")
    mu = inp.mu
    a = _momentum_a(inp)
    L_hat2 = inp.L_hat ** 2
    extra = {}
    if variant == "gradient":
        b = inp.p_a / (2 - inp.p_a)
        radicand = (_compression_coef(inp, 200) + 48 / (inp.n * inp.p_a ** 2) * inp.indicator_sq) * L_hat2
        caps = [a / (4 * mu)]
    elif variant == "page":
        _require(inp, "L_max", "B")
        if p_page is None:
            _require(inp, "m")
            p_page = inp.B / (inp.m + inp.B)
        b = p_page * inp.p_a / (2 - inp.p_a)
        batch_term = (1 - p_page) * inp.L_max ** 2 / inp.B
        radicand = (
            _compression_coef(inp, 200) * (L_hat2 + batch_term)
            + 48 / (inp.n * inp.p_a ** 2 * p_page) * (inp.indicator_sq * L_hat2 + batch_term)
        )
        caps = [a / (2 * mu), b / (2 * mu)]
        extra["p_page"] = p_page
    elif variant == "mvr":
        _require(inp, "L_sigma", "B")
        if b is None:
            _require(inp, "sigma_sq", "epsilon")
            b = _mvr_momentum(inp, mu_factor=mu)
        batch_term = (1 - b) ** 2 * inp.L_sigma ** 2 / inp.B
        radicand = (
            _compression_coef(inp, 200) * (batch_term + L_hat2)
            + 40 / (inp.n * inp.p_a * b) * (batch_term + inp.indicator_sq * L_hat2)
        )
        caps = [a / (2 * mu), b / (2 * mu)]
    elif variant == "sync_mvr":
        _require(inp, "L_sigma", "B")
        if p_mega is None:
            p_mega = _sync_p_mega(inp, mu_factor=mu)
        p_mega = min(p_mega, 1.0)
        b = p_mega * inp.p_a / (2 - inp.p_a)
        radicand = (
            16 * (2 * inp.omega + 1) * inp.omega / (inp.n * inp.p_a ** 2) * (inp.L_sigma ** 2 / inp.B + L_hat2)
            + 48 * inp.L_sigma ** 2 / (inp.n * p_mega * inp.p_a ** 2 * inp.B)
            + 24 * inp.indicator_sq * L_hat2 / (inp.n * p_mega * inp.p_a ** 2)
        )
        caps = [a / (2 * mu), b / (2 * mu)]
        extra["p_mega"] = p_mega
    else:
        raise InvalidParameter(f"no P-L result for variant {variant!r}")
    gamma = min([1.0 / (inp.L + math.sqrt(radicand))] + caps)
    return _checked(TheoryParams(a=a, b=b, gamma_max=gamma, rate=1.0 - gamma * mu, **extra))


def batch_cap(inp, setting="finite_sum"):
    """Largest batch keeping the partial-participation slowdown at ``1/p_a``."""
    if setting == "finite_sum":
        _require(inp, "m", "L_max")
        first = math.sqrt(inp.m / inp.n) / inp.p_a
        smooth = inp.L_max
    else:
        _require(inp, "sigma_sq", "epsilon", "L_sigma")
        first = math.sqrt(inp.sigma_sq) / (inp.p_a * math.sqrt(inp.epsilon) * inp.n)
        smooth = inp.L_sigma
    second = _ratio(smooth ** 2, inp.indicator_sq * inp.L_hat ** 2)
    return min(first, second)


def complexity_randk(inp, setting="finite_sum"):
    """Leading terms of the RandK communication and oracle complexities.

    Returns a dict with ``K``, ``B_cap``, ``comm_complexity`` and
    ``oracle_complexity``. Advisory numbers only.
    """
    _require(inp, "d", "delta0", "epsilon")
    sqrt_n = math.sqrt(inp.n)
    if setting == "finite_sum":
        _require(inp, "m", "L_max")
        K = inp.B * inp.d / math.sqrt(inp.m)
        comm = inp.d + inp.L_max * inp.delta0 * inp.d / (inp.p_a * inp.epsilon * sqrt_n)
        oracle = inp.m + inp.L_max * inp.delta0 * math.sqrt(inp.m) / (inp.p_a * inp.epsilon * sqrt_n)
    elif setting == "stochastic":
        _require(inp, "sigma_sq", "L_sigma")
        sigma = math.sqrt(inp.sigma_sq)
        K = inp.B * inp.d * math.sqrt(inp.epsilon * inp.n) / sigma if sigma > 0 else float(inp.d)
        comm = (
            _ratio(inp.d * sigma, math.sqrt(inp.p_a) * math.sqrt(inp.n * inp.epsilon))
            + inp.L_sigma * inp.delta0 * inp.d / (inp.p_a * sqrt_n * inp.epsilon)
        )
        oracle = (
            inp.sigma_sq / (math.sqrt(inp.p_a) * inp.n * inp.epsilon)
            + inp.L_sigma * inp.delta0 * sigma / (inp.p_a * inp.epsilon ** 1.5 * inp.n)
        )
    else:
        raise InvalidParameter(f"unknown setting {setting!r}")
    K = min(max(1, math.ceil(K)), inp.d)
    return {"K": K, "B_cap": batch_cap(inp, setting), "comm_complexity": comm,
            "oracle_complexity": oracle}


VARIANT_PARAMS = {
    "gradient": params_gradient,
    "page": params_page,
    "finite_mvr": params_finite_mvr,
    "mvr": params_mvr,
    "sync_mvr": params_sync_mvr,
}


def params_for(variant, inp, **overrides):
    try:
        fn = VARIANT_PARAMS[variant]
    except KeyError:
        raise InvalidParameter(f"unknown variant {variant!r}") from None
    return fn(inp, **overrides)


def with_inputs(inp, **changes):
    return replace(inp, **changes)
