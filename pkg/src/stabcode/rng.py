"""Counter-based randomness keyed by (seed, purpose, index).

Every consumer (dither, erasures, disturbance) gets its own Philox key, so
encoder and decoder can regenerate any draw from its index alone.
"""

from __future__ import annotations

import numpy as np

DITHER = 1
ERASURE = 2
DISTURBANCE = 3
PILOT = 4

_SCALE = 2.0**-53


def stream_key(seed: int, purpose: int) -> np.ndarray:
    return np.random.SeedSequence([int(seed), int(purpose)]).generate_state(2, dtype=np.uint64)


def _raw_range(key, start: int, n: int) -> np.ndarray:
    # one Philox block per counter value; its first word is draw ``index``
    bg = np.random.Philox(key=key, counter=int(start))
    return bg.random_raw(4 * n)[::4]


def counter_uniform(seed: int, purpose: int, index) -> np.ndarray | float:
    """Uniform draws on (0, 1] at integer position(s) ``index`` of a keyed stream."""
    key = stream_key(seed, purpose)
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and idx.min() < 0:
        raise ValueError("draw indices must be non-negative")
    flat = idx.ravel()
    if flat.size == 0:
        out = np.empty(0)
    else:
        lo, hi = int(flat.min()), int(flat.max())
        if hi - lo + 1 <= 4 * flat.size + 4096:
            raw = _raw_range(key, lo, hi - lo + 1)[flat - lo]
        else:
            raw = np.array([_raw_range(key, int(i), 1)[0] for i in flat], dtype=np.uint64)
        out = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * _SCALE
    out = out.reshape(idx.shape)
    return float(out) if idx.ndim == 0 else out


def uniform_range(seed: int, purpose: int, start: int, n: int) -> np.ndarray:
    """Draws ``start .. start+n-1`` of a stream, vectorized."""
    if n <= 0:
        return np.empty(0)
    raw = _raw_range(stream_key(seed, purpose), start, n)
    return ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * _SCALE


def gaussian(seed: int, purpose: int, n: int) -> np.ndarray:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(purpose)])).standard_normal(n)
