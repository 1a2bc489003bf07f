"""Named, position-keyed random streams.

Every random decision in a run is drawn from a generator keyed by
``(seed, stream, round, node)`` so that results do not depend on the order
in which nodes are processed.
"""

import numpy as np

STREAMS = {
    "participation": 1,
    "page_coin": 2,
    "compressor": 3,
    "batch": 4,
    "output": 5,
    "init": 6,
    "mega_coin": 7,
    "data": 8,
}


def stream(seed, name, round_index=0, node=0):
    """Return a fresh ``numpy.random.Generator`` for one stream position."""
    return np.random.default_rng([int(seed), STREAMS[name], int(round_index), int(node)])


def partial_shuffle(rng, population, k):
    """Draw ``k`` distinct integers from ``range(population)``, uniformly.

    Partial Fisher-Yates over a virtual identity array; swaps are kept in a
    dict so the work is O(k) regardless of ``population``.
    """
    if not 0 <= k <= population:
        raise ValueError(f"cannot draw {k} items from {population}")
    swapped = {}
    out = np.empty(k, dtype=np.int64)
    draws = rng.integers(np.arange(k), population)
    for i in range(k):
        j = int(draws[i])
        out[i] = swapped.get(j, j)
        swapped[j] = swapped.get(i, i)
    return out


def bernoulli(rng, prob):
    if prob >= 1.0:
        return True
    if prob <= 0.0:
        return False
    return bool(rng.random() < prob)
