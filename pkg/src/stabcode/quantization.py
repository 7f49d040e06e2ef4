"""Dithered scalar quantization and nested-lattice multiple descriptions."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import ndtr

from . import rng


@dataclass(frozen=True)
class DitheredQuantizer:
    step: float
    dither_seed: int = 0

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError("quantizer step must be positive and finite")

    def dither(self, draw_index):
        """Dither on (-step/2, step/2] shared by encoder and decoder."""
        return self.step * (rng.counter_uniform(self.dither_seed, rng.DITHER, draw_index) - 0.5)

    def dither_range(self, start: int, n: int) -> np.ndarray:
        return self.step * (rng.uniform_range(self.dither_seed, rng.DITHER, start, n) - 0.5)


def quantize_index(x, step: float):
    """Nearest lattice index, ties rounded up so each cell is (-step/2, step/2] around its point."""
    return np.floor(np.asarray(x) / step + 0.5).astype(np.int64)


def quantize_with_dither(v, xi, step: float):
    """Symbol and reconstruction ``(m, m*step - xi)`` for an explicit dither value."""
    m = quantize_index(np.asarray(v, dtype=float) + xi, step)
    return m, m * step - xi


def dithered_encode(v, q: DitheredQuantizer, draw_index):
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot quantize a non-finite value")
    m = quantize_index(v + q.dither(draw_index), q.step)
    return int(m) if m.ndim == 0 else m


def dithered_decode(symbol, q: DitheredQuantizer, draw_index):
    out = np.asarray(symbol) * q.step - q.dither(draw_index)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class DescriptionSet:
    time_index: int
    payloads: dict = field(default_factory=dict)

    def __post_init__(self):
        for i in self.payloads:
            if not (isinstance(i, (int, np.integer)) and i >= 1):
                raise ValueError(f"description index {i!r} must be a positive integer")

    @property
    def k(self) -> int:
        return len(self.payloads)

    def subset(self, received) -> "DescriptionSet":
        return DescriptionSet(self.time_index, {i: self.payloads[i] for i in sorted(received)})


def independent_encodings(v: float, q: DitheredQuantizer, k: int, time: int) -> DescriptionSet:
    """``k`` encodings of ``v`` with independent dithers at draw indices ``time*k + i``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    idx = time * k + np.arange(k)
    syms = dithered_encode(np.full(k, float(v)), q, idx)
    return DescriptionSet(time, {i + 1: int(s) for i, s in enumerate(syms)})


def decode_independent(ds: DescriptionSet, q: DitheredQuantizer, k: int, received=None) -> float:
    """Average of the dither-corrected received encodings."""
    rec = sorted(ds.payloads if received is None else received)
    if not rec:
        raise ValueError("no descriptions received")
    idx = ds.time_index * k + np.asarray(rec) - 1
    vals = dithered_decode(np.array([ds.payloads[i] for i in rec]), q, idx)
    return float(np.mean(vals))


# --------------------------------------------------------------- multiple descriptions
@dataclass(frozen=True)
class IndexAssignment:
    """Central coset ``r`` (|r| <= N//2) -> k side indices; side points lie on ``N*step*Z``.

    Shift rule: central index ``m = r + N j`` maps to ``table[r] + j`` in every coordinate.
    """

    nesting_factor: int
    k: int
    central_step: float
    table: tuple

    @property
    def half(self) -> int:
        return self.nesting_factor // 2

    @property
    def side_step(self) -> float:
        return self.nesting_factor * self.central_step

    def table_array(self) -> np.ndarray:
        return np.asarray(self.table, dtype=np.int64)

    def split(self, m):
        m = np.asarray(m, dtype=np.int64)
        N, h = self.nesting_factor, self.half
        r = np.mod(m + h, N) - h
        return r, (m - r) // N

    def side_indices(self, m) -> np.ndarray:
        r, j = self.split(m)
        return self.table_array()[r + self.half] + np.asarray(j)[..., None]

    def invert(self, sides) -> int:
        s = np.asarray(sides, dtype=np.int64)
        cls = tuple(s - s[0])
        for r, t in zip(range(-self.half, self.half + 1), self.table):
            t = np.asarray(t)
            if tuple(t - t[0]) == cls:
                return int(r + self.nesting_factor * (s[0] - t[0]))
        raise ValueError(f"side tuple {tuple(s)} is not in the assignment")

    def offsets(self) -> np.ndarray:
        """Side-point offset from the central point, in central steps, per coset and description."""
        r = np.arange(-self.half, self.half + 1)[:, None]
        return self.nesting_factor * self.table_array() - r

    def to_json(self) -> dict:
        return {
            "nesting_factor": self.nesting_factor,
            "k": self.k,
            "central_step": self.central_step,
            "table": {str(r): list(t) for r, t in zip(range(-self.half, self.half + 1), self.table)},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def from_json(cls, obj: dict) -> "IndexAssignment":
        N = int(obj["nesting_factor"])
        h = N // 2
        table = tuple(tuple(int(x) for x in obj["table"][str(r)]) for r in range(-h, h + 1))
        return cls(N, int(obj["k"]), float(obj["central_step"]), table)


def _best_shift(cls_tuple: np.ndarray, r: int, N: int) -> np.ndarray:
    c0 = r / N - cls_tuple.mean()
    best = None
    for c in (math.floor(c0), math.ceil(c0)):
        t = cls_tuple + c
        key = (float(np.sum((N * t - r) ** 2)), tuple(t))
        if best is None or key < best[0]:
            best = (key, t)
    return best[1]


def build_index_assignment(N: int, k: int, central_step: float) -> IndexAssignment:
    """Injective, shift-invariant assignment minimizing the summed singleton distortion.

    The central coset maps to the zero tuple.  Every other coset is matched to a distinct tuple class (tuples modulo the all-ones
    shift), placed at its cheapest shift.  The optimal matching comes from a
    linear assignment solve; ties are broken lexicographically by fixing cosets
    in order and re-solving.
    """
    if N < 3 or N % 2 == 0:
        raise ValueError("nesting factor must be odd and >= 3 (symmetric cells only)")
    if k < 2:
        raise ValueError("multiple descriptions need k >= 2")
    if not central_step > 0:
        raise ValueError("central step must be positive")
    h = N // 2
    radius = max(2, math.ceil((N ** (1.0 / (k - 1)) - 1) / 2) + 1)
    span = range(-radius, radius + 1)
    classes = [np.array((0,) + t) for t in itertools.product(span, repeat=k - 1)]
    cosets = list(range(-h, h + 1))
    placed = [[_best_shift(c, r, N) for c in classes] for r in cosets]
    cost = np.array([[float(np.sum((N * t - r) ** 2)) for t in row] for r, row in zip(cosets, placed)])

    def solve(rows, cols):
        sub = cost[np.ix_(rows, cols)]
        ri, ci = linear_sum_assignment(sub)
        return sub[ri, ci].sum()

    all_cols = list(range(len(classes)))
    # the central coset keeps the all-zero tuple (zero cost, symmetric)
    zero = next(c for c, cl in enumerate(classes) if not cl.any())
    fixed: dict[int, int] = {h: zero}
    free_rows = [a for a in range(N) if a != h]
    total = cost[h, zero] + solve(free_rows, [c for c in all_cols if c != zero])
    tol = 1e-9 * max(total, 1.0)
    # then fix cosets outward from the centre, lexicographically smallest tuple among optimal choices
    for a in sorted(free_rows, key=lambda i: (abs(cosets[i]), cosets[i])):
        free_rows.remove(a)
        used = set(fixed.values())
        spent = sum(cost[r, c] for r, c in fixed.items())
        floor_rest = sum(min(cost[r, c] for c in all_cols if c not in used) for r in free_rows)
        candidates = sorted(
            (c for c in all_cols if c not in used and spent + cost[a, c] + floor_rest <= total + tol),
            key=lambda c: tuple(placed[a][c]),
        )
        for c in candidates:
            rest_cols = [x for x in all_cols if x not in used and x != c]
            rest = solve(free_rows, rest_cols) if free_rows else 0.0
            if spent + cost[a, c] + rest <= total + tol:
                fixed[a] = c
                break
        else:  # pragma: no cover - the optimum is always reachable
            raise RuntimeError("index assignment search failed")
    table = tuple(tuple(int(x) for x in placed[a][fixed[a]]) for a in range(N))
    return IndexAssignment(N, k, float(central_step), table)


def md_encode(v: float, ia: IndexAssignment, dither_seed: int, time: int) -> DescriptionSet:
    """Dithered central quantization followed by the table lookup."""
    q = DitheredQuantizer(ia.central_step, dither_seed)
    m = dithered_encode(v, q, time)
    sides = ia.side_indices(m)
    return DescriptionSet(time, {i + 1: int(s) for i, s in enumerate(sides)})


def md_decode(ds: DescriptionSet, ia: IndexAssignment, received, dither_seed: int) -> float:
    rec = sorted(received)
    if not rec:
        raise ValueError("no descriptions received; the caller applies the zero-reception policy")
    xi = DitheredQuantizer(ia.central_step, dither_seed).dither(ds.time_index)
    if len(rec) == ia.k:
        m = ia.invert([ds.payloads[i] for i in range(1, ia.k + 1)])
        return m * ia.central_step - xi
    return float(np.mean([ds.payloads[i] for i in rec])) * ia.side_step - xi


def md_error_moments(ia: IndexAssignment, sigma_v: float, n_dither: int = 512) -> dict:
    """Exact error statistics of the MD decoder for a Gaussian source.

    For each dither value (midpoint rule) the Gaussian source integrates in
    closed form over each central cell.  ``rho`` normalizes the error second
    moments (the quantity that enters combined-noise variance); ``rho_centred``
    is the ordinary correlation coefficient after removing per-description bias.
    """
    d, N, k = ia.central_step, ia.nesting_factor, ia.k
    xis = d * ((np.arange(n_dither) + 0.5) / n_dither - 0.5)
    mmax = int(math.ceil(9.0 * sigma_v / d)) + N + 2
    m = np.arange(-mmax, mmax + 1)
    sides = ia.side_indices(m).astype(float) * ia.side_step  # (M, k)
    cov = np.zeros((k, k))
    mean = np.zeros(k)
    central = 0.0
    for xi in xis:
        lo = ((m - 0.5) * d - xi) / sigma_v
        hi = ((m + 0.5) * d - xi) / sigma_v
        p0 = ndtr(hi) - ndtr(lo)
        phl, phh = np.exp(-0.5 * lo**2), np.exp(-0.5 * hi**2)
        c = 1.0 / math.sqrt(2 * math.pi)
        m1 = sigma_v * c * (phl - phh)
        m2 = sigma_v**2 * (p0 + c * (lo * phl - hi * phh))
        a = sides - xi  # reconstruction per description
        # E[(a_i - v)(a_j - v)] summed over cells
        cov += (a.T * p0) @ a - np.outer(a.T @ m1, np.ones(k)) - np.outer(np.ones(k), a.T @ m1) + m2.sum()
        mean += a.T @ p0 - m1.sum()
        ac = m * d - xi
        central += np.sum(ac**2 * p0 - 2 * ac * m1 + m2)
    cov /= n_dither
    mean /= n_dither
    central /= n_dither
    offdiag = ~np.eye(k, dtype=bool)
    std = np.sqrt(np.diag(cov))
    rho = float((cov / np.outer(std, std))[offdiag].mean())
    centred = cov - np.outer(mean, mean)
    std_c = np.sqrt(np.diag(centred))
    rho_c = float((centred / np.outer(std_c, std_c))[offdiag].mean())
    mse = {k: central}
    for ell in range(1, k):
        vals = [cov[np.ix_(s, s)].sum() / ell**2 for s in itertools.combinations(range(k), ell)]
        mse[ell] = float(np.mean(vals))
    return {"second_moment": cov, "mean": mean, "central_mse": central, "rho": rho,
            "rho_centred": rho_c, "mse_per_ell": dict(sorted(mse.items()))}


# --------------------------------------------------------------- measurement
def empirical_entropy(symbols) -> float:
    s = np.asarray(symbols)
    if s.size == 0:
        raise ValueError("empty symbol sequence")
    _, counts = np.unique(s, return_counts=True)
    p = counts / s.size
    return float(-np.sum(p * np.log2(p)) + 0.0)


def measured_snr(source, reconstruction) -> float:
    x = np.asarray(source, dtype=float)
    y = np.asarray(reconstruction, dtype=float)
    if x.shape != y.shape:
        raise ValueError("source and reconstruction lengths differ")
    err = np.var(y - x, ddof=1)
    if err == 0:
        return math.inf
    return float(np.var(x, ddof=1) / err)
