"""Deterministic random-number streams.

All randomness in the package flows from a single root seed that is split
into named substreams (dataset generation, model fitting, sampling, ...).
Streams use the counter-based Philox generator, and normal deviates are
produced by the inverse-CDF transform so that every draw consumes exactly
one 53-bit uniform; runs with the same seed are reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_TWO53 = float(1 << 53)

# Fixed registry: stream names must map to stable integers across runs.
_STREAMS = {
    "dataset": 0,
    "fit": 1,
    "sample": 2,
    "reference": 3,
    "init": 4,
}


def stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Return the named substream of the root ``seed``.

    ``index`` distinguishes parallel chains or repeated draws within one
    named stream.
    """
    try:
        kind = _STREAMS[name]
    except KeyError:
        raise ValueError(f"unknown stream name {name!r}; known: {sorted(_STREAMS)}") from None
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(kind, int(index)))
    return np.random.Generator(np.random.Philox(ss))


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal draws via inverse CDF of open-interval uniforms.

    Avoids rejection sampling: one uniform is consumed per deviate, so the
    draw count is a deterministic function of the requested size.
    """
    u = (rng.integers(0, 1 << 53, size=size).astype(np.float64) + 0.5) / _TWO53
    return ndtri(u)
