"""LIBSVM ingestion, node splitting and the synthetic desk-scale fixture."""

import io
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from dasha_pp.errors import EmptyInput, InvalidParameter, ParseError


@dataclass(frozen=True)
class Dataset:
    features: sp.csr_matrix
    labels: np.ndarray
    d: int

    def __post_init__(self):
        if self.features.shape[0] != len(self.labels):
            raise InvalidParameter("labels length must equal number of samples")
        if self.features.shape[1] != self.d:
            raise InvalidParameter("feature matrix width must equal d")

    @property
    def num_samples(self):
        return self.features.shape[0]

    @property
    def density(self):
        total = self.num_samples * self.d
        return self.features.nnz / total if total else 0.0

    def stats(self):
        return {"n_samples": self.num_samples, "d": self.d, "density": self.density}


@dataclass(frozen=True)
class NodeShard:
    node_id: int
    sample_indices: np.ndarray

    @property
    def m(self):
        return len(self.sample_indices)


def _lines(source):
    if isinstance(source, str):
        return io.StringIO(source)
    return source


def _tokenize(source):
    """Yield ``(line_no, label_token, [(index, value_token), ...])``."""
    for line_no, raw in enumerate(_lines(source), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        label = tokens[0]
        try:
            float(label)
        except ValueError:
            raise ParseError(f"bad label {label!r}", line_no) from None
        pairs = []
        seen = set()
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep or not idx_s or not val_s:
                raise ParseError(f"malformed feature token {tok!r}", line_no)
            try:
                idx = int(idx_s)
                float(val_s)
            except ValueError:
                raise ParseError(f"malformed feature token {tok!r}", line_no) from None
            if idx < 1:
                raise ParseError(f"feature index must be >= 1, got {idx}", line_no)
            if idx in seen:
                raise ParseError(f"duplicate feature index {idx}", line_no)
            seen.add(idx)
            pairs.append((idx, val_s))
        yield line_no, label, pairs


def _label_map(raw_labels):
    """Map raw label values onto {-1, +1}.

    Labels already in {-1, +1} are kept. Any other two-valued labelling
    ({0, 1}, {1, 2}, ...) sends the smaller value to -1.
    """
    values = sorted(set(raw_labels))
    if set(values) <= {-1.0, 1.0}:
        return {v: (1 if v > 0 else -1) for v in values}
    if len(values) == 2:
        return {values[0]: -1, values[1]: 1}
    if len(values) == 1:
        return {values[0]: (1 if values[0] > 0 else -1)}
    raise ParseError(f"expected a binary labelling, found {len(values)} distinct labels")


def parse_libsvm(source, d_hint=None):
    """Parse LIBSVM text (``label idx:val ...``, 1-based indices) into a Dataset.

    ``source`` is a string or any iterable of lines.
    """
    raw_labels, indptr, indices, data = [], [0], [], []
    max_idx = 0
    for line_no, label, pairs in _tokenize(source):
        pairs.sort()
        for idx, val_s in pairs:
            if d_hint is not None and idx > d_hint:
                raise ParseError(f"feature index {idx} exceeds d={d_hint}", line_no)
            indices.append(idx - 1)
            data.append(float(val_s))
        if pairs:
            max_idx = max(max_idx, pairs[-1][0])
        indptr.append(len(indices))
        raw_labels.append(float(label))
    if not raw_labels:
        raise EmptyInput()
    d = d_hint if d_hint is not None else max_idx
    if d < 1:
        raise ParseError("dataset has no features and no d_hint was given")
    mapping = _label_map(raw_labels)
    labels = np.array([mapping[v] for v in raw_labels], dtype=np.float64)
    features = sp.csr_matrix(
        (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64), np.array(indptr)),
        shape=(len(raw_labels), d),
    )
    return Dataset(features, labels, d)


def load_libsvm(path, d_hint=None):
    with open(path) as fh:
        return parse_libsvm(fh, d_hint)


def _format_label(y):
    return "+1" if y > 0 else "-1"


def serialize_libsvm(dataset):
    """Write a Dataset in canonical LIBSVM form.

    Canonical form: labels ``+1``/``-1``, indices ascending, values written
    with ``repr(float)`` so that parsing them back is bit-exact.
    """
    out = []
    X = dataset.features
    for r in range(dataset.num_samples):
        lo, hi = X.indptr[r], X.indptr[r + 1]
        feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi]))
        out.append(f"{_format_label(dataset.labels[r])} {feats}".rstrip())
    return "\n".join(out) + "\n"


def canonicalize_libsvm(source):
    """Rewrite LIBSVM text into canonical form without building a matrix."""
    rows = list(_tokenize(source))
    if not rows:
        raise EmptyInput()
    mapping = _label_map([float(label) for _, label, _ in rows])
    out = []
    for _, label, pairs in rows:
        feats = " ".join(f"{idx}:{float(val)!r}" for idx, val in sorted(pairs))
        out.append(f"{_format_label(mapping[float(label)])} {feats}".rstrip())
    return "\n".join(out) + "\n"


def split_equal(dataset, n, rng):
    """Randomly split samples into ``n`` equal shards; the residual is dropped."""
    total = dataset.num_samples
    if n < 1 or total < n:
        raise InvalidParameter(f"cannot split {total} samples between {n} nodes")
    m = total // n
    perm = rng.permutation(total)
    return [NodeShard(i, np.sort(perm[i * m:(i + 1) * m])) for i in range(n)]


def make_synthetic(n, m, d, seed, density=0.3, flip=0.1):
    """Sparse Gaussian features with labels from a planted linear rule.

    Returns ``(dataset, shards)`` with exactly ``n * m`` samples.
    """
    rng = np.random.default_rng([int(seed), 8])
    total = n * m
    keep = rng.random((total, d)) < density
    dense = np.where(keep, rng.standard_normal((total, d)), 0.0)
    # every sample gets at least one feature
    empty = ~keep.any(axis=1)
    dense[empty, rng.integers(0, d, empty.sum())] = rng.standard_normal(empty.sum())
    w = rng.standard_normal(d)
    labels = np.where(dense @ w >= 0, 1.0, -1.0)
    labels[rng.random(total) < flip] *= -1
    dataset = Dataset(sp.csr_matrix(dense), labels, d)
    return dataset, split_equal(dataset, n, rng)


def fixture_path(name):
    return os.path.join(os.path.dirname(__file__), "fixtures", name)


def fixture_names():
    return sorted(f for f in os.listdir(os.path.dirname(fixture_path("x"))) if f.endswith(".svm"))
