"""I.i.d. erasure channel and the repetition baseline."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import rng
from .quantization import DescriptionSet, DitheredQuantizer, dithered_encode


@dataclass(frozen=True)
class ErasureChannel:
    """Each description is lost independently with ``loss_probability``.

    Losses at (time, description) come from one counter-based uniform, so the
    same seed gives common random numbers across loss probabilities: a
    description lost at ``p`` is also lost at every ``p' > p``.
    """

    loss_probability: float
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss probability must lie in [0, 1]")

    def received_mask(self, start: int, n: int, k: int) -> np.ndarray:
        """Boolean (n, k) matrix; True where the description survives."""
        u = rng.uniform_range(self.rng_seed, rng.ERASURE, start * k, n * k).reshape(n, k)
        return u > self.loss_probability


@dataclass(frozen=True)
class ReceptionRecord:
    time_index: int
    received: frozenset


def transmit(ds: DescriptionSet, ch: ErasureChannel, k: int | None = None):
    k = k or max(ds.payloads)
    mask = ch.received_mask(ds.time_index, 1, k)[0]
    got = frozenset(i for i in ds.payloads if mask[i - 1])
    return ReceptionRecord(ds.time_index, got), ds.subset(got)


def repetition_encode(v: float, q: DitheredQuantizer, copies: int, time: int) -> DescriptionSet:
    """One dithered encoding (draw index ``time``) copied into every payload."""
    if copies < 1:
        raise ValueError("copies must be >= 1")
    sym = dithered_encode(v, q, time)
    return DescriptionSet(time, {i: sym for i in range(1, copies + 1)})


def decode_repetition(ds: DescriptionSet, q: DitheredQuantizer, received) -> float:
    rec = sorted(received)
    if not rec:
        raise ValueError("no descriptions received")
    return q.step * ds.payloads[rec[0]] - q.dither(ds.time_index)


def loss_trace_csv(mask: np.ndarray, start: int = 0) -> str:
    """0/1 matrix (1 = received) with one row per time step."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time"] + [f"d{i + 1}" for i in range(mask.shape[1])])
    for t, row in enumerate(np.asarray(mask, dtype=int)):
        w.writerow([start + t, *row.tolist()])
    return buf.getvalue()


def read_loss_trace(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    return np.array([[int(x) for x in r[1:]] for r in rows[1:]], dtype=bool).reshape(len(rows) - 1, -1)
