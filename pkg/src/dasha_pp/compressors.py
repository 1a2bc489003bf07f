"""Unbiased compression operators (identity and RandK)."""

from dataclasses import dataclass

import numpy as np

from dasha_pp.errors import DimensionMismatch, InvalidParameter
from dasha_pp.rng import partial_shuffle


@dataclass(frozen=True)
class SparseMessage:
    """A compressed vector stored as ``(index, value)`` pairs."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    @property
    def nnz(self):
        # stored entries, not numerically nonzero ones: this is what is sent
        return len(self.indices)

    def to_dense(self):
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def add_to(self, target, scale=1.0):
        target[self.indices] += scale * self.values
        return target

    @classmethod
    def dense(cls, x):
        x = np.asarray(x, dtype=np.float64)
        return cls(np.arange(len(x)), x.copy(), len(x))

    @classmethod
    def empty(cls, dim):
        return cls(np.empty(0, dtype=np.int64), np.empty(0), dim)


@dataclass(frozen=True)
class CompressorSpec:
    kind: str
    d: int
    k: int = None

    def __post_init__(self):
        if self.d < 1:
            raise InvalidParameter(f"dimension must be positive, got {self.d}")
        if self.kind == "identity":
            object.__setattr__(self, "k", self.d)
        elif self.kind == "randk":
            if self.k is None or not 1 <= self.k <= self.d:
                raise InvalidParameter(f"RandK needs 1 <= K <= d, got K={self.k}, d={self.d}")
        else:
            raise InvalidParameter(f"unknown compressor kind {self.kind!r}")

    @classmethod
    def identity(cls, d):
        return cls("identity", d)

    @classmethod
    def randk(cls, d, k):
        return cls("randk", d, k)

    def omega(self):
        return omega(self)

    def expected_density(self):
        return expected_density(self)

    def compress(self, x, rng):
        return compress(self, x, rng)


def omega(spec):
    if spec.kind == "identity":
        return 0.0
    return spec.d / spec.k - 1.0


def expected_density(spec):
    return spec.d if spec.kind == "identity" else spec.k


def compress(spec, x, rng):
    """Apply the compressor to a dense vector and return a ``SparseMessage``.

    RandK keeps ``K`` coordinates chosen uniformly without replacement and
    scales them by ``d / K``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.d,):
        raise DimensionMismatch(spec.d, x.shape[0] if x.ndim == 1 else x.shape)
    if spec.kind == "identity":
        return SparseMessage.dense(x)
    idx = partial_shuffle(rng, spec.d, spec.k)
    return SparseMessage(idx, x[idx] * (spec.d / spec.k), spec.d)
