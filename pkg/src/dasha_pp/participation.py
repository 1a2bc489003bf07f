"""Per-round node participation: full, s-nice and independent sampling."""

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from dasha_pp.errors import EnumerationTooLarge, InvalidParameter
from dasha_pp.rng import partial_shuffle

MAX_ENUMERATION_NODES = 12


@dataclass(frozen=True)
class ParticipationScheme:
    kind: str
    n: int
    s: int = None
    p: float = None

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameter(f"node count must be positive, got {self.n}")
        if self.kind == "full":
            pass
        elif self.kind == "snice":
            if self.s is None or not 1 <= self.s <= self.n:
                raise InvalidParameter(f"s-nice sampling needs 1 <= s <= n, got s={self.s}")
        elif self.kind == "independent":
            if self.p is None or not 0.0 < self.p <= 1.0:
                raise InvalidParameter(f"participation probability must lie in (0, 1], got {self.p}")
        else:
            raise InvalidParameter(f"unknown participation kind {self.kind!r}")

    @classmethod
    def full(cls, n):
        return cls("full", n)

    @classmethod
    def snice(cls, n, s):
        return cls("snice", n, s=s)

    @classmethod
    def independent(cls, n, p):
        return cls("independent", n, p=p)

    @property
    def p_a(self):
        return self.moments()[0]

    @property
    def p_aa(self):
        return self.moments()[1]

    def moments(self):
        return moments(self)

    def sample_round(self, rng):
        return sample_round(self, rng)


def moments(scheme):
    """Return ``(p_a, p_aa)``: marginal and pairwise participation probabilities."""
    if scheme.kind == "full":
        return 1.0, 1.0
    if scheme.kind == "independent":
        return scheme.p, scheme.p * scheme.p
    n, s = scheme.n, scheme.s
    if n == 1:
        # no pairs exist; any p_aa <= p_a^2 is admissible, pick the s-nice limit
        return s / n, (s / n) ** 2
    return s / n, s * (s - 1) / (n * (n - 1))


def sample_round(scheme, rng):
    """Draw one boolean participation mask of length ``n``."""
    mask = np.zeros(scheme.n, dtype=bool)
    if scheme.kind == "full":
        mask[:] = True
    elif scheme.kind == "snice":
        mask[partial_shuffle(rng, scheme.n, scheme.s)] = True
    else:
        mask[:] = rng.random(scheme.n) < scheme.p
    return mask


def mask_distribution(scheme):
    """Exact ``[(probability, mask), ...]`` support of the scheme.

    Independent sampling enumerates all ``2**n`` masks, s-nice all
    ``C(n, s)`` subsets.
    """
    n = scheme.n
    if n > MAX_ENUMERATION_NODES:
        raise EnumerationTooLarge(f"n={n} exceeds enumeration limit {MAX_ENUMERATION_NODES}")
    if scheme.kind == "full":
        return [(1.0, np.ones(n, dtype=bool))]
    if scheme.kind == "snice":
        prob = 1.0 / comb(n, scheme.s)
        out = []
        for subset in combinations(range(n), scheme.s):
            mask = np.zeros(n, dtype=bool)
            mask[list(subset)] = True
            out.append((prob, mask))
        return out
    out = []
    p = scheme.p
    for bits in range(2 ** n):
        mask = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
        k = int(mask.sum())
        out.append((p ** k * (1 - p) ** (n - k), mask))
    return out


def pp_mean_variance_oracle(scheme, s_means, s_vars):
    """Exact variance of ``(1/n) sum_i v_i`` with ``v_i = r_i + s_i / p_a`` on
    participating nodes and ``v_i = r_i`` otherwise.

    Only the means and total variances of the independent ``s_i`` enter. For
    s-nice sampling the value is computed by enumerating all subsets; for
    full and independent participation the closed form is used.
    """
    s_means = np.atleast_2d(np.asarray(s_means, dtype=np.float64))
    s_vars = np.asarray(s_vars, dtype=np.float64)
    n = scheme.n
    if s_means.shape[0] != n or s_vars.shape != (n,):
        raise InvalidParameter("need one mean vector and one variance per node")
    p_a, p_aa = moments(scheme)
    if scheme.kind == "snice":
        if n > MAX_ENUMERATION_NODES:
            raise EnumerationTooLarge(f"n={n} exceeds enumeration limit {MAX_ENUMERATION_NODES}")
        center = s_means.mean(axis=0)
        total = 0.0
        for prob, mask in mask_distribution(scheme):
            noise = s_vars[mask].sum() / (n * n * p_a * p_a)
            shift = s_means[mask].sum(axis=0) / (n * p_a) - center
            total += prob * (noise + shift @ shift)
        return float(total)
    mean_sq = float(np.einsum("ij,ij->", s_means, s_means))
    avg = s_means.mean(axis=0)
    return float(
        s_vars.sum() / (n * n * p_a)
        + (p_a - p_aa) / (n * n * p_a * p_a) * mean_sq
        + (p_aa - p_a * p_a) / (p_a * p_a) * (avg @ avg)
    )
